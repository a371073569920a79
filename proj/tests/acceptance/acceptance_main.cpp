// Acceptance suite: each criterion prints one pass/fail line; the process
// exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "tilp/action.hpp"
#include "tilp/config.hpp"
#include "tilp/fsl.hpp"
#include "tilp/harness.hpp"
#include "tilp/mdp.hpp"
#include "tilp/netphys.hpp"
#include "tilp/planner.hpp"
#include "tilp/rng.hpp"
#include "tilp/twin.hpp"

namespace {

using tilp::RngStream;
using tilp::SimConfig;
using tilp::SystemAction;

constexpr double kInf = std::numeric_limits<double>::infinity();

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what) {
    std::printf("[%s] criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion,
                what.c_str());
    std::fflush(stdout);
    if (!pass) {
        ++g_failures;
    }
}

double rel_err(double got, double want) {
    double denom = std::max(std::abs(want), 1e-300);
    return std::abs(got - want) / denom;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::size_t n = v.size();
        std::vector<int> idx(n);
        for (std::size_t i = 0; i < n; ++i) {
            idx[i] = static_cast<int>(i);
        }
        std::sort(idx.begin(), idx.end(),
                  [&](int a, int b) { return v[a] < v[b]; });
        std::vector<double> r(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) {
                ++j;
            }
            double avg = 0.5 * (i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        return r;
    };
    std::vector<double> rx = ranks(x);
    std::vector<double> ry = ranks(y);
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= x.size();
    my /= y.size();
    double num = 0.0;
    double dx = 0.0;
    double dy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    if (dx == 0.0 || dy == 0.0) {
        return 0.0;
    }
    return num / std::sqrt(dx * dy);
}

SystemAction random_projected_action(int n, const SimConfig& cfg,
                                     std::span<const double> gains,
                                     RngStream& rng) {
    SystemAction a;
    a.per_terminal.resize(n);
    for (auto& t : a.per_terminal) {
        t.scheduled = rng.next_double() < 0.6;
        t.bandwidth_hz = rng.next_uniform(0.0, cfg.bandwidth_budget_hz);
        t.power_w = rng.next_uniform(0.001, cfg.power_max_w);
        t.compression = rng.next_uniform(0.0, cfg.compression_max);
        t.split_layer = cfg.split_set[rng.next_below(cfg.split_set.size())];
    }
    return tilp::project_action(a, cfg, gains);
}

// ---------------------------------------------------------------------------
// criterion 1: closed-form oracle equivalence

bool criterion1() {
    RngStream rng(101, 0);
    double worst = 0.0;
    SimConfig cfg = SimConfig::desk_default();
    tilp::Environment env = tilp::make_environment(cfg);
    std::vector<double> gains(cfg.n_terminals);
    for (int i = 0; i < cfg.n_terminals; ++i) {
        gains[i] = env.profiles[i].large_scale_gain;
    }

    for (int trial = 0; trial < 1000; ++trial) {
        // rate
        double b = rng.next_uniform(1e4, 1e8);
        double p = rng.next_uniform(1e-4, 0.2);
        double g = std::pow(10.0, rng.next_uniform(-12.0, -7.0));
        double fp = rng.next_uniform(0.01, 4.0);
        double n0 = 3.981e-21;
        long double snr = static_cast<long double>(g) * fp * p /
                          (static_cast<long double>(n0) * b);
        long double rate_oracle =
            static_cast<long double>(b) * (logl(1.0L + snr) / logl(2.0L));
        worst = std::max(worst,
                         rel_err(tilp::rate(b, p, g, fp, n0),
                                 static_cast<double>(rate_oracle)));

        // tx / cp delay
        int batch = 1 + static_cast<int>(rng.next_below(64));
        double bits = rng.next_uniform(1e3, 1e9);
        double q = rng.next_uniform(0.0, 0.99);
        double r = rng.next_uniform(1e3, 1e9);
        long double tx_oracle = static_cast<long double>(batch) * bits *
                                (1.0L - static_cast<long double>(q)) / r;
        worst = std::max(worst, rel_err(tilp::tx_delay(batch, bits, q, r),
                                        static_cast<double>(tx_oracle)));
        double nu = rng.next_uniform(1e-5, 10.0);
        double hz = rng.next_uniform(1e8, 4e9);
        double macs = rng.next_uniform(1.0, 1e7);
        long double cp_oracle = static_cast<long double>(batch) * macs /
                                (static_cast<long double>(nu) * hz);
        worst = std::max(worst, rel_err(tilp::cp_delay(batch, macs, nu, hz),
                                        static_cast<double>(cp_oracle)));

        // round latency over a random scheduled set
        int m = 1 + static_cast<int>(rng.next_below(10));
        std::vector<tilp::DelayPair> delays(m);
        long double lat_oracle = -1.0L;
        for (auto& d : delays) {
            d.cp = rng.next_uniform(0.0, 4.0);
            d.tx = rng.next_uniform(0.0, 4.0);
            long double tot = static_cast<long double>(d.cp) + 2.0L * d.tx;
            if (tot > lat_oracle) {
                lat_oracle = tot;
            }
        }
        worst = std::max(worst, rel_err(tilp::round_latency(delays),
                                        static_cast<double>(lat_oracle)));

        // energy
        double kappa = rng.next_uniform(1e-27, 1e-23);
        double txs = rng.next_uniform(0.0, 5.0);
        long double e_oracle = static_cast<long double>(kappa) * hz * hz *
                                   batch * macs +
                               static_cast<long double>(p) * txs;
        worst = std::max(
            worst, rel_err(tilp::terminal_energy(kappa, hz, batch, macs, p, txs),
                           static_cast<double>(e_oracle)));

        // violation re-summation on a random projected action
        SystemAction act =
            random_projected_action(cfg.n_terminals, cfg, gains, rng);
        std::vector<double> cp_s(cfg.n_terminals);
        std::vector<double> tx_s(cfg.n_terminals);
        for (int i = 0; i < cfg.n_terminals; ++i) {
            cp_s[i] = rng.next_uniform(0.0, 4.0);
            tx_s[i] = rng.next_uniform(0.0, 4.0);
        }
        long double v_oracle = 0.0L;
        long double bsum = 0.0L;
        for (int i = 0; i < cfg.n_terminals; ++i) {
            const auto& t = act.per_terminal[i];
            if (!t.scheduled) {
                continue;
            }
            bsum += t.bandwidth_hz;
            long double over = static_cast<long double>(cp_s[i]) +
                               2.0L * tx_s[i] - cfg.deadline_s;
            if (over > 0.0L) {
                v_oracle += over;
            }
            long double mem =
                env.geometry.mem_bytes[env.geometry.index_of(t.split_layer)] -
                cfg.memory_budget_bytes;
            if (mem > 0.0L) {
                v_oracle += mem;
            }
        }
        if (bsum > cfg.bandwidth_budget_hz) {
            v_oracle += bsum - cfg.bandwidth_budget_hz;
        }
        double v = tilp::violation(act, cp_s, tx_s, env.geometry, cfg);
        if (v_oracle > 0.0L) {
            worst = std::max(worst,
                             rel_err(v, static_cast<double>(v_oracle)));
        } else {
            worst = std::max(worst, std::abs(v));
        }

        // epsilon_cal re-summation
        tilp::PredictedOutcome pred;
        tilp::RoundOutcome realized;
        pred.cp_hat.resize(cfg.n_terminals);
        pred.tx_hat.resize(cfg.n_terminals);
        pred.energy_hat.resize(cfg.n_terminals);
        pred.rate_hat.resize(cfg.n_terminals);
        realized.cp_s.resize(cfg.n_terminals);
        realized.tx_s.resize(cfg.n_terminals);
        realized.energy_j.resize(cfg.n_terminals);
        long double eps_oracle = 0.0L;
        pred.latency_hat = rng.next_uniform(0.0, 10.0);
        realized.latency_s = rng.next_uniform(0.0, 10.0);
        eps_oracle += fabsl(static_cast<long double>(pred.latency_hat) -
                            realized.latency_s);
        for (int i = 0; i < cfg.n_terminals; ++i) {
            pred.cp_hat[i] = rng.next_uniform(0.0, 4.0);
            pred.tx_hat[i] = rng.next_uniform(0.0, 4.0);
            pred.energy_hat[i] = rng.next_uniform(0.0, 2.0);
            realized.cp_s[i] = rng.next_uniform(0.0, 4.0);
            realized.tx_s[i] = rng.next_uniform(0.0, 4.0);
            realized.energy_j[i] = rng.next_uniform(0.0, 2.0);
            if (act.per_terminal[i].scheduled) {
                eps_oracle += fabsl(static_cast<long double>(pred.energy_hat[i]) -
                                    realized.energy_j[i]);
                eps_oracle += fabsl(static_cast<long double>(pred.cp_hat[i]) -
                                    realized.cp_s[i]);
                eps_oracle += fabsl(static_cast<long double>(pred.tx_hat[i]) -
                                    realized.tx_s[i]);
            }
        }
        pred.dgamma_hat = rng.next_uniform(-0.5, 0.5);
        realized.dgamma = rng.next_uniform(-0.5, 0.5);
        pred.violation_hat = rng.next_uniform(0.0, 5.0);
        realized.violation = rng.next_uniform(0.0, 5.0);
        eps_oracle += fabsl(static_cast<long double>(pred.dgamma_hat) -
                            realized.dgamma);
        eps_oracle += fabsl(static_cast<long double>(pred.violation_hat) -
                            realized.violation);
        worst = std::max(worst,
                         rel_err(tilp::epsilon_cal(pred, realized, act),
                                 static_cast<double>(eps_oracle)));

        // discounted return
        int len = 1 + static_cast<int>(rng.next_below(30));
        double gamma = rng.next_uniform(0.01, 1.0);
        std::vector<double> rewards(len);
        long double ret_oracle = 0.0L;
        for (int k = 0; k < len; ++k) {
            rewards[k] = rng.next_uniform(-5.0, 5.0);
            ret_oracle += powl(static_cast<long double>(gamma), k) * rewards[k];
        }
        double ret = tilp::discounted_return(rewards, gamma);
        if (std::abs(static_cast<double>(ret_oracle)) > 1e-12) {
            worst = std::max(
                worst, rel_err(ret, static_cast<double>(ret_oracle)));
        }
    }
    bool pass = worst <= 1e-12;
    report(1, pass,
           "closed-form oracle equivalence, worst relative error " +
               std::to_string(worst));
    return pass;
}

// ---------------------------------------------------------------------------
// criterion 2: gradient audits

bool criterion2() {
    bool pass = true;
    double worst_fsl = 0.0;
    double worst_planner = 0.0;

    // split-learning pipeline: two terminals sharing the tail
    {
        RngStream rng(202, 0);
        tilp::LayeredModel model =
            tilp::LayeredModel::make(tilp::default_layer_widths(), rng);
        const int split1 = 2;
        const int split2 = 4;
        std::vector<tilp::DenseLayer> prefix1(model.layers.begin(),
                                              model.layers.begin() + split1);
        std::vector<tilp::DenseLayer> prefix2(model.layers.begin(),
                                              model.layers.begin() + split2);
        auto batch_of = [&](int rows, RngStream& r) {
            tilp::Matrix x(rows, 16);
            for (double& v : x.data) {
                v = r.next_normal();
            }
            return x;
        };
        tilp::Matrix x1 = batch_of(6, rng);
        tilp::Matrix x2 = batch_of(4, rng);
        std::vector<int> l1 = {0, 1, 2, 3, 0, 1};
        std::vector<int> l2 = {3, 2, 1, 0};
        double q1 = 0.4;
        double q2 = 0.25;
        tilp::CompressionMask m1 = tilp::draw_mask(model.layer_widths[split1], q1, rng);
        tilp::CompressionMask m2 = tilp::draw_mask(model.layer_widths[split2], q2, rng);
        const double w1 = 0.6;
        const double w2 = 0.4;

        auto loss_of = [&](const std::vector<tilp::DenseLayer>& p1,
                           const std::vector<tilp::DenseLayer>& p2,
                           const tilp::LayeredModel& tail_model) {
            tilp::Matrix s1 = tilp::client_forward(x1, p1, nullptr);
            tilp::Matrix s2 = tilp::client_forward(x2, p2, nullptr);
            tilp::Matrix c1 = tilp::apply_compression(s1, m1, q1);
            tilp::Matrix c2 = tilp::apply_compression(s2, m2, q2);
            double j1 = tilp::tail_backward(tail_model, split1, c1, l1).loss;
            double j2 = tilp::tail_backward(tail_model, split2, c2, l2).loss;
            return w1 * j1 + w2 * j2;
        };

        // analytic gradients for every parameter group
        tilp::ClientForwardCache cache1;
        tilp::ClientForwardCache cache2;
        tilp::Matrix s1 = tilp::client_forward(x1, prefix1, &cache1);
        tilp::Matrix s2 = tilp::client_forward(x2, prefix2, &cache2);
        tilp::Matrix c1 = tilp::apply_compression(s1, m1, q1);
        tilp::Matrix c2 = tilp::apply_compression(s2, m2, q2);
        auto t1 = tilp::tail_backward(model, split1, c1, l1);
        auto t2 = tilp::tail_backward(model, split2, c2, l2);
        auto g1 = tilp::client_backward(
            cache1, prefix1, tilp::apply_compression(t1.dsplit, m1, q1));
        auto g2 = tilp::client_backward(
            cache2, prefix2, tilp::apply_compression(t2.dsplit, m2, q2));

        // tail gradient of the weighted loss per layer
        std::vector<tilp::DenseLayer> tail_grad(model.depth());
        for (int l = 0; l < model.depth(); ++l) {
            tail_grad[l].in = model.layers[l].in;
            tail_grad[l].out = model.layers[l].out;
            tail_grad[l].w.assign(model.layers[l].w.size(), 0.0);
            tail_grad[l].b.assign(model.layers[l].b.size(), 0.0);
        }
        for (int l = split1; l < model.depth(); ++l) {
            auto& src = t1.tail_grad[l - split1];
            for (std::size_t k = 0; k < src.w.size(); ++k) {
                tail_grad[l].w[k] += w1 * src.w[k];
            }
        }
        for (int l = split2; l < model.depth(); ++l) {
            auto& src = t2.tail_grad[l - split2];
            for (std::size_t k = 0; k < src.w.size(); ++k) {
                tail_grad[l].w[k] += w2 * src.w[k];
            }
        }

        const double h = 1e-6;
        RngStream pick(203, 0);
        for (int slice = 0; slice < 20; ++slice) {
            double num = 0.0;
            double den = 0.0;
            for (int probe = 0; probe < 8; ++probe) {
                int group = static_cast<int>(pick.next_below(3));
                double analytic = 0.0;
                double fd = 0.0;
                if (group == 0) {  // client 1 weights (loss share w1)
                    int layer = static_cast<int>(pick.next_below(prefix1.size()));
                    std::size_t k = pick.next_below(prefix1[layer].w.size());
                    analytic = w1 * g1.prefix_grad[layer].w[k];
                    auto plus = prefix1;
                    auto minus = prefix1;
                    plus[layer].w[k] += h;
                    minus[layer].w[k] -= h;
                    fd = (loss_of(plus, prefix2, model) -
                          loss_of(minus, prefix2, model)) /
                         (2.0 * h);
                } else if (group == 1) {  // client 2 weights
                    int layer = static_cast<int>(pick.next_below(prefix2.size()));
                    std::size_t k = pick.next_below(prefix2[layer].w.size());
                    analytic = w2 * g2.prefix_grad[layer].w[k];
                    auto plus = prefix2;
                    auto minus = prefix2;
                    plus[layer].w[k] += h;
                    minus[layer].w[k] -= h;
                    fd = (loss_of(prefix1, plus, model) -
                          loss_of(prefix1, minus, model)) /
                         (2.0 * h);
                } else {  // shared tail weights
                    int layer = split1 + static_cast<int>(pick.next_below(
                                             model.depth() - split1));
                    std::size_t k = pick.next_below(model.layers[layer].w.size());
                    analytic = tail_grad[layer].w[k];
                    tilp::LayeredModel plus = model;
                    tilp::LayeredModel minus = model;
                    plus.layers[layer].w[k] += h;
                    minus.layers[layer].w[k] -= h;
                    fd = (loss_of(prefix1, prefix2, plus) -
                          loss_of(prefix1, prefix2, minus)) /
                         (2.0 * h);
                }
                num += (analytic - fd) * (analytic - fd);
                den += fd * fd;
            }
            double err = den > 0.0 ? std::sqrt(num) / std::sqrt(den) : 0.0;
            worst_fsl = std::max(worst_fsl, err);
        }
        pass = pass && worst_fsl <= 1e-5;
    }

    // planner actor/critic objectives
    {
        SimConfig cfg = SimConfig::desk_default();
        cfg.n_terminals = 3;
        cfg.master_seed = 17;
        tilp::Environment env = tilp::make_environment(cfg);
        std::vector<double> gains(3);
        std::vector<double> fading(3, 1.0);
        for (int i = 0; i < 3; ++i) {
            gains[i] = env.profiles[i].large_scale_gain;
        }
        std::vector<double> zeros(3, 0.0);
        std::vector<double> norms(3, 0.4);
        std::vector<tilp::StateVector> states;
        states.push_back(
            tilp::assemble_state(gains, fading, zeros, 1.3, norms, 0.2));
        tilp::StateVector s2 = states[0];
        s2.loss = 0.7;
        s2.gamma_hat = 0.55;
        states.push_back(s2);

        RngStream net_rng(204, 0);
        tilp::Actor actor =
            tilp::Actor::make(3, 5, tilp::encoded_state_dim(3), net_rng);
        tilp::Critic critic = tilp::Critic::make(
            tilp::encoded_state_dim(3), tilp::encoded_action_dim(3, 5), net_rng);

        RngStream noise_rng(205, 0);
        std::vector<tilp::ActorNoise> noises;
        for (std::size_t i = 0; i < states.size(); ++i) {
            noises.push_back(tilp::draw_actor_noise(3, 5, noise_rng));
        }
        tilp::FrozenSamples frozen =
            tilp::freeze_samples(actor, states, noises, cfg);
        std::vector<double> agrad;
        tilp::actor_objective(actor, critic, states, noises, frozen, 0.05,
                              0.7, cfg, &agrad);

        tilp::ReplayEntry entry;
        entry.state = states[0];
        entry.next_state = states[1];
        entry.reward = 0.25;
        RngStream arng(206, 0);
        entry.action =
            tilp::actor_sample(actor, states[0], cfg, arng, 0.7).action;
        std::vector<tilp::ReplayEntry> batch(4, entry);
        std::vector<double> targets = {0.2, -0.1, 0.4, 0.0};
        std::vector<double> cgrad;
        tilp::critic_objective(critic, batch, targets, cfg, &cgrad);

        const double h = 1e-6;
        RngStream pick(207, 0);
        for (int slice = 0; slice < 20; ++slice) {
            bool actor_side = slice % 2 == 0;
            double num = 0.0;
            double den = 0.0;
            for (int probe = 0; probe < 8; ++probe) {
                if (actor_side) {
                    std::size_t k = pick.next_below(actor.net.param_count());
                    tilp::Actor plus = actor;
                    tilp::Actor minus = actor;
                    plus.net.params[k] += h;
                    minus.net.params[k] -= h;
                    double fp = tilp::actor_objective(plus, critic, states,
                                                      noises, frozen, 0.05,
                                                      0.7, cfg, nullptr);
                    double fm = tilp::actor_objective(minus, critic, states,
                                                      noises, frozen, 0.05,
                                                      0.7, cfg, nullptr);
                    double fd = (fp - fm) / (2.0 * h);
                    num += (agrad[k] - fd) * (agrad[k] - fd);
                    den += fd * fd;
                } else {
                    std::size_t k = pick.next_below(critic.net.param_count());
                    tilp::Critic plus = critic;
                    tilp::Critic minus = critic;
                    plus.net.params[k] += h;
                    minus.net.params[k] -= h;
                    double fp = tilp::critic_objective(plus, batch, targets,
                                                       cfg, nullptr);
                    double fm = tilp::critic_objective(minus, batch, targets,
                                                       cfg, nullptr);
                    double fd = (fp - fm) / (2.0 * h);
                    num += (cgrad[k] - fd) * (cgrad[k] - fd);
                    den += fd * fd;
                }
            }
            double err = den > 0.0 ? std::sqrt(num) / std::sqrt(den) : 0.0;
            worst_planner = std::max(worst_planner, err);
        }
        pass = pass && worst_planner <= 1e-4;
    }

    report(2, pass,
           "gradient audits, worst slice error fsl " +
               std::to_string(worst_fsl) + ", planner " +
               std::to_string(worst_planner));
    return pass;
}

// ---------------------------------------------------------------------------
// criterion 3: empirical reward-error bound

bool criterion3() {
    RngStream rng(303, 0);
    int violations = 0;
    int trials = 0;

    // direct randomized observables
    for (int trial = 0; trial < 500; ++trial) {
        SimConfig cfg = SimConfig::desk_default();
        cfg.n_terminals = 2 + static_cast<int>(rng.next_below(7));
        cfg.deadline_s = rng.next_uniform(1.0, 10.0);
        cfg.w_delta = rng.next_uniform(0.05, 3.0);
        cfg.w_e = rng.next_uniform(0.05, 3.0);
        cfg.w_pen = rng.next_uniform(0.1, 3.0);
        tilp::RewardWeights w = tilp::RewardWeights::from_config(cfg);
        double lam = tilp::lipschitz_bound(w, cfg);

        int n = cfg.n_terminals;
        SystemAction act;
        act.per_terminal.resize(n);
        for (auto& t : act.per_terminal) {
            t.scheduled = rng.next_double() < 0.7;
        }
        if (act.scheduled_count() == 0) {
            act.per_terminal[0].scheduled = true;
        }
        tilp::PredictedOutcome pred;
        tilp::RoundOutcome realized;
        pred.cp_hat.resize(n);
        pred.tx_hat.resize(n);
        pred.energy_hat.assign(n, 0.0);
        pred.rate_hat.resize(n);
        realized.cp_s.resize(n);
        realized.tx_s.resize(n);
        realized.energy_j.assign(n, 0.0);
        for (int i = 0; i < n; ++i) {
            if (!act.per_terminal[i].scheduled) {
                continue;
            }
            pred.cp_hat[i] = rng.next_uniform(0.0, 3.0);
            pred.tx_hat[i] = rng.next_uniform(0.0, 3.0);
            pred.energy_hat[i] = rng.next_uniform(0.0, 1.5);
            realized.cp_s[i] = rng.next_uniform(0.0, 3.0);
            realized.tx_s[i] = rng.next_uniform(0.0, 3.0);
            realized.energy_j[i] = rng.next_uniform(0.0, 1.5);
        }
        pred.latency_hat = rng.next_uniform(0.0, 12.0);
        realized.latency_s = rng.next_uniform(0.0, 12.0);
        pred.dgamma_hat = rng.next_uniform(-0.5, 0.5);
        realized.dgamma = rng.next_uniform(-0.5, 0.5);
        pred.violation_hat = rng.next_uniform(0.0, 8.0);
        realized.violation = rng.next_uniform(0.0, 8.0);

        auto pred_rb = tilp::reward(pred.dgamma_hat, pred.latency_hat,
                                    pred.energy_hat, pred.violation_hat, w,
                                    cfg);
        auto real_rb = tilp::reward(realized.dgamma, realized.latency_s,
                                    realized.energy_j, realized.violation, w,
                                    cfg);
        double eps = tilp::epsilon_cal(pred, realized, act);
        ++trials;
        if (std::abs(pred_rb.r_total - real_rb.r_total) > lam * eps + 1e-9) {
            ++violations;
        }
    }

    // twin-vs-physics rounds with randomized miscalibrations
    SimConfig cfg = SimConfig::desk_default();
    cfg.master_seed = 99;
    tilp::Environment env = tilp::make_environment(cfg);
    int n = cfg.n_terminals;
    std::vector<double> gains(n);
    for (int i = 0; i < n; ++i) {
        gains[i] = env.profiles[i].large_scale_gain;
    }
    tilp::RewardWeights w = tilp::RewardWeights::from_config(cfg);
    double lam = tilp::lipschitz_bound(w, cfg);
    for (int trial = 0; trial < 500; ++trial) {
        tilp::TwinSnapshot snap{tilp::NetTwinParams::init(n),
                                tilp::TrainTwinParams{},
                                tilp::TaskTwinParams{},
                                env.geometry,
                                env.profiles,
                                cfg};
        std::vector<double> fading(n);
        for (int i = 0; i < n; ++i) {
            fading[i] = rng.next_uniform(0.05, 3.0);
            snap.net.fading_power_est[i] = rng.next_uniform(0.05, 3.0);
            snap.net.rate_corr[i] = rng.next_uniform(0.5, 2.0);
            snap.net.energy_corr[i] = rng.next_uniform(0.5, 2.0);
        }
        snap.task.sensitivity = rng.next_uniform(0.0, 1.0);
        for (auto& weight : snap.train.weights) {
            weight = rng.next_uniform(-0.2, 0.2);
        }
        std::vector<double> zeros(n, 0.0);
        std::vector<double> norms(n, 0.3);
        tilp::StateVector state = tilp::assemble_state(
            gains, fading, zeros, rng.next_uniform(0.3, 1.4), norms,
            rng.next_uniform(0.0, 0.9));
        SystemAction act = random_projected_action(n, cfg, gains, rng);
        tilp::PredictedOutcome pred = tilp::predict_round(snap, state, act);
        tilp::RoundPhysics phys = tilp::compute_round_physics(
            act, env.profiles, env.geometry, fading, cfg);
        tilp::RoundOutcome realized;
        realized.latency_s = phys.latency_s;
        realized.energy_j = phys.energy_j;
        realized.cp_s = phys.cp_s;
        realized.tx_s = phys.tx_s;
        realized.dgamma = rng.next_uniform(-0.2, 0.2);
        realized.violation = tilp::violation(act, phys.cp_s, phys.tx_s,
                                             env.geometry, cfg);
        if (!std::isfinite(realized.latency_s) ||
            !std::isfinite(pred.latency_hat)) {
            continue;  // the bound addresses finite observables
        }
        auto pred_rb = tilp::reward(pred.dgamma_hat, pred.latency_hat,
                                    pred.energy_hat, pred.violation_hat, w,
                                    cfg);
        auto real_rb = tilp::reward(realized.dgamma, realized.latency_s,
                                    realized.energy_j, realized.violation, w,
                                    cfg);
        double eps = tilp::epsilon_cal(pred, realized, act);
        ++trials;
        if (std::abs(pred_rb.r_total - real_rb.r_total) > lam * eps + 1e-9) {
            ++violations;
        }
    }

    bool pass = violations == 0 && trials >= 900;
    report(3, pass,
           "reward-error bound held on " + std::to_string(trials - violations) +
               "/" + std::to_string(trials) + " randomized rounds");
    return pass;
}

// ---------------------------------------------------------------------------
// criterion 4: perfect-twin identity

bool criterion4() {
    RngStream rng(404, 0);
    SimConfig cfg = SimConfig::desk_default();
    cfg.master_seed = 55;
    tilp::Environment env = tilp::make_environment(cfg);
    int n = cfg.n_terminals;
    std::vector<double> gains(n);
    for (int i = 0; i < n; ++i) {
        gains[i] = env.profiles[i].large_scale_gain;
    }
    tilp::RewardWeights w = tilp::RewardWeights::from_config(cfg);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> fading(n);
        for (double& f : fading) {
            f = rng.next_uniform(0.05, 3.0);
        }
        tilp::TwinSnapshot snap{tilp::NetTwinParams::init(n),
                                tilp::TrainTwinParams{},
                                tilp::TaskTwinParams{},
                                env.geometry,
                                env.profiles,
                                cfg};
        snap.net.fading_power_est = fading;  // realized channel belief
        std::vector<double> zeros(n, 0.0);
        std::vector<double> norms(n, 0.3);
        tilp::StateVector state =
            tilp::assemble_state(gains, fading, zeros, 1.1, norms, 0.3);
        SystemAction act = random_projected_action(n, cfg, gains, rng);

        tilp::PredictedOutcome pred = tilp::predict_round(snap, state, act);
        tilp::RoundPhysics phys = tilp::compute_round_physics(
            act, env.profiles, env.geometry, fading, cfg);
        double realized_violation = tilp::violation(act, phys.cp_s, phys.tx_s,
                                                    env.geometry, cfg);
        if (!std::isfinite(phys.latency_s)) {
            continue;
        }
        // oracle train/task sub-twins: hand both sides the realized values
        double dgamma = rng.next_uniform(-0.1, 0.1);
        auto pred_rb = tilp::reward(dgamma, pred.latency_hat, pred.energy_hat,
                                    pred.violation_hat, w, cfg);
        auto real_rb = tilp::reward(dgamma, phys.latency_s, phys.energy_j,
                                    realized_violation, w, cfg);
        worst = std::max(worst,
                         std::abs(pred_rb.r_total - real_rb.r_total));
    }
    bool pass = worst <= 1e-9;
    report(4, pass,
           "perfect-twin identity, worst |r_hat - r| = " +
               std::to_string(worst));
    return pass;
}

// ---------------------------------------------------------------------------
// criterion 5: CEM properties

bool criterion5() {
    SimConfig cfg = SimConfig::desk_default();
    cfg.n_terminals = 6;
    int monotone_ok = 0;
    int dominance_ok = 0;
    const int plans = 20;
    const int states_n = 100;

    // 20 seeded plans on frozen snapshots: recorded best never decreases
    for (int plan = 0; plan < plans; ++plan) {
        cfg.master_seed = 1000 + plan;
        tilp::Environment env = tilp::make_environment(cfg);
        RngStream rng(cfg.master_seed, 77);
        std::vector<double> gains(6);
        std::vector<double> fading(6);
        for (int i = 0; i < 6; ++i) {
            gains[i] = env.profiles[i].large_scale_gain;
            fading[i] = rng.next_uniform(0.1, 2.5);
        }
        std::vector<double> zeros(6, 0.0);
        std::vector<double> norms(6, 0.3);
        tilp::StateVector state = tilp::assemble_state(
            gains, fading, zeros, rng.next_uniform(0.4, 1.4), norms,
            rng.next_uniform(0.1, 0.7));
        tilp::Actor actor =
            tilp::Actor::make(6, 5, tilp::encoded_state_dim(6), rng);
        tilp::Critic critic = tilp::Critic::make(
            tilp::encoded_state_dim(6), tilp::encoded_action_dim(6, 5), rng);
        tilp::TwinSnapshot snap{tilp::NetTwinParams::init(6),
                                tilp::TrainTwinParams{},
                                tilp::TaskTwinParams{},
                                env.geometry,
                                env.profiles,
                                cfg};
        snap.net.fading_power_est = fading;
        snap.task.sensitivity = 0.3;
        snap.train.weights[1] = 0.05;
        snap.train.weights[5] = 0.05;
        RngStream plan_rng(cfg.master_seed, 501);
        tilp::CemResult res =
            tilp::cem_plan(state, snap, actor, critic, cfg, plan_rng);
        bool monotone = true;
        for (std::size_t i = 1; i < res.iters.size(); ++i) {
            monotone = monotone &&
                       res.iters[i].best_score >=
                           res.iters[i - 1].best_score - 1e-12;
        }
        monotone_ok += monotone ? 1 : 0;
        dominance_ok += res.best_score >= res.prior_score - 1e-12 ? 1 : 0;
    }

    // 100 seeded states: planning dominates the prior it starts from
    int extra_ok = 0;
    for (int i = 0; i < states_n; ++i) {
        cfg.master_seed = 2000 + i;
        tilp::Environment env = tilp::make_environment(cfg);
        RngStream rng(cfg.master_seed, 78);
        std::vector<double> gains(6);
        std::vector<double> fading(6);
        for (int k = 0; k < 6; ++k) {
            gains[k] = env.profiles[k].large_scale_gain;
            fading[k] = rng.next_uniform(0.1, 2.5);
        }
        std::vector<double> zeros(6, 0.0);
        std::vector<double> norms(6, 0.3);
        tilp::StateVector state = tilp::assemble_state(
            gains, fading, zeros, rng.next_uniform(0.4, 1.4), norms,
            rng.next_uniform(0.1, 0.7));
        tilp::Actor actor =
            tilp::Actor::make(6, 5, tilp::encoded_state_dim(6), rng);
        tilp::Critic critic = tilp::Critic::make(
            tilp::encoded_state_dim(6), tilp::encoded_action_dim(6, 5), rng);
        tilp::TwinSnapshot snap{tilp::NetTwinParams::init(6),
                                tilp::TrainTwinParams{},
                                tilp::TaskTwinParams{},
                                env.geometry,
                                env.profiles,
                                cfg};
        snap.net.fading_power_est = fading;
        RngStream plan_rng(cfg.master_seed, 502);
        tilp::CemResult res =
            tilp::cem_plan(state, snap, actor, critic, cfg, plan_rng);
        extra_ok += res.best_score >= res.prior_score - 1e-12 ? 1 : 0;
    }

    bool pass = monotone_ok == plans && dominance_ok == plans &&
                extra_ok >= static_cast<int>(0.95 * states_n);
    report(5, pass,
           "CEM improvement: monotone " + std::to_string(monotone_ok) + "/" +
               std::to_string(plans) + ", prior dominance " +
               std::to_string(extra_ok) + "/" + std::to_string(states_n));
    return pass;
}

// ---------------------------------------------------------------------------
// criterion 6: calibration efficacy

bool criterion6() {
    // Loop 1 on a stationary environment with a planted 1.5x latency bias
    SimConfig cfg = SimConfig::desk_default();
    cfg.fading_corr = 1.0;
    cfg.master_seed = 3;
    tilp::PolicySpec pol;
    pol.kind = tilp::PolicyKind::kStaticEqual;
    tilp::RunOptions opts;
    opts.bias.latency_scale = 1.5;
    tilp::EpisodeResult res = tilp::run_episode(cfg, pol, opts);
    double first = 0.0;
    double last = 0.0;
    for (int t = 0; t < 50; ++t) {
        first += std::abs(std::log(res.rounds[t].latency_s /
                                   res.rounds[t].pred_latency_s));
    }
    for (int t = 150; t < 200; ++t) {
        last += std::abs(std::log(res.rounds[t].latency_s /
                                  res.rounds[t].pred_latency_s));
    }
    bool loop1_ok = last <= 0.5 * first && first > 0.0;

    // Loop 2 recovers a planted linear loss-decrease relation
    tilp::TrainTwinParams params;
    params.window_capacity = 64;
    RngStream rng(606, 0);
    for (int i = 0; i < 40; ++i) {
        tilp::TrainFeatures f{};
        f[0] = 1.0;
        f[1] = rng.next_uniform(0.0, 1.0);
        f[2] = rng.next_uniform(0.0, 2.0);
        f[3] = rng.next_uniform(0.4, 1.4);
        f[4] = rng.next_uniform(1.0, 5.0);
        f[5] = rng.next_uniform(0.1, 1.0);
        tilp::push_train_sample(params, f, 2.0 * f[1]);
    }
    tilp::calibrate_train(params);
    bool loop2_ok = std::abs(params.weights[1] - 2.0) <= 1e-2;

    bool pass = loop1_ok && loop2_ok;
    report(6, pass,
           "calibration efficacy: latency residual " + std::to_string(first / 50) +
               " -> " + std::to_string(last / 50) + ", planted coefficient " +
               std::to_string(params.weights[1]));
    return pass;
}

// ---------------------------------------------------------------------------
// criteria 7 and 10 share the desk benchmark runs

struct BenchmarkOutcome {
    bool pass7 = false;
    bool pass10 = false;
    std::string what7;
    std::string what10;
};

BenchmarkOutcome run_benchmark() {
    BenchmarkOutcome out;
    const std::vector<tilp::PolicyKind> kinds = {
        tilp::PolicyKind::kTilp, tilp::PolicyKind::kRandomFeasible,
        tilp::PolicyKind::kStaticEqual, tilp::PolicyKind::kGreedyChannel,
        tilp::PolicyKind::kActorOnly};
    std::vector<std::vector<double>> gammas(kinds.size());
    std::vector<std::vector<double>> violations(kinds.size());
    bool all_feasible = true;
    bool violations_nonnegative = true;

    for (std::size_t k = 0; k < kinds.size(); ++k) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            SimConfig cfg = SimConfig::desk_default();
            cfg.master_seed = seed;
            tilp::PolicySpec pol;
            pol.kind = kinds[k];
            tilp::EpisodeResult res = tilp::run_episode(cfg, pol);
            gammas[k].push_back(res.report.final_gamma);
            violations[k].push_back(res.report.violation_avg);
            all_feasible = all_feasible && res.actions_hard_feasible;
            for (const tilp::RoundRecord& r : res.rounds) {
                if (r.violation < 0.0) {
                    violations_nonnegative = false;
                }
            }
        }
    }

    // constructive isolation: rounds built to satisfy the soft budgets must
    // report exactly zero violation, and single soft overshoots must show up
    bool isolation_ok = true;
    {
        SimConfig cfg = SimConfig::desk_default();
        tilp::Environment env = tilp::make_environment(cfg);
        RngStream rng(707, 0);
        for (int trial = 0; trial < 500; ++trial) {
            int n = cfg.n_terminals;
            SystemAction act;
            act.per_terminal.resize(n);
            std::vector<double> cp(n, 0.0);
            std::vector<double> tx(n, 0.0);
            for (int i = 0; i < n; ++i) {
                auto& t = act.per_terminal[i];
                t.scheduled = rng.next_double() < 0.7;
                t.bandwidth_hz = cfg.bandwidth_budget_hz /
                                 (2.0 * n) * rng.next_uniform(0.1, 1.0);
                t.power_w = rng.next_uniform(0.0, cfg.power_max_w);
                t.compression = rng.next_uniform(0.0, cfg.compression_max);
                t.split_layer =
                    cfg.split_set[rng.next_below(cfg.split_set.size())];
                double total = rng.next_uniform(0.0, cfg.deadline_s);
                cp[i] = 0.25 * total;
                tx[i] = 0.375 * total;  // cp + 2tx == total <= deadline
            }
            if (act.scheduled_count() == 0) {
                act.per_terminal[0].scheduled = true;
            }
            double v = tilp::violation(act, cp, tx, env.geometry, cfg);
            if (v != 0.0) {
                isolation_ok = false;
            }
            // now push one scheduled terminal past the deadline
            int first = act.scheduled_indices().front();
            std::vector<double> tx_bad = tx;
            tx_bad[first] = 0.5 * (cfg.deadline_s - cp[first]) +
                            rng.next_uniform(0.1, 2.0);
            double vb = tilp::violation(act, cp, tx_bad, env.geometry, cfg);
            if (!(vb > 0.0)) {
                isolation_ok = false;
            }
        }
    }
    bool zero_violation_consistent = violations_nonnegative && isolation_ok;

    double tilp_med = median(gammas[0]);
    double random_med = median(gammas[1]);
    double static_med = median(gammas[2]);
    double greedy_med = median(gammas[3]);
    double actor_med = median(gammas[4]);
    double tilp_viol = median(violations[0]);
    double random_viol = median(violations[1]);

    out.pass7 = tilp_med >= random_med + 0.05 && tilp_med >= static_med &&
                tilp_med >= greedy_med && tilp_med >= actor_med &&
                tilp_viol <= random_viol;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "desk benchmark medians: tilp %.4f, random %.4f, static "
                  "%.4f, greedy %.4f, actor %.4f; violation %.3g vs %.3g",
                  tilp_med, random_med, static_med, greedy_med, actor_med,
                  tilp_viol, random_viol);
    out.what7 = buf;

    out.pass10 = all_feasible && zero_violation_consistent;
    out.what10 = std::string("constraint hygiene: hard set ") +
                 (all_feasible ? "clean" : "violated") +
                 ", soft isolation " +
                 (zero_violation_consistent ? "consistent" : "broken");
    return out;
}

// ---------------------------------------------------------------------------
// criterion 8: convergence-trend checks

bool criterion8() {
    auto sweep_loss = [](bool sweep_qmax, double value) {
        std::vector<double> losses;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            SimConfig cfg = SimConfig::desk_default();
            // a loose deadline isolates the learning dynamics from the
            // wireless feasibility filter
            cfg.deadline_s = 50.0;
            if (sweep_qmax) {
                cfg.compression_max = value;
            } else {
                cfg.agg_interval = static_cast<int>(value);
            }
            cfg.master_seed = seed;
            tilp::PolicySpec pol;
            pol.kind = tilp::PolicyKind::kStaticEqual;
            losses.push_back(tilp::run_episode(cfg, pol).final_global_loss);
        }
        return median(losses);
    };

    std::vector<double> q_levels = {0.0, 0.3, 0.6, 0.9};
    std::vector<double> q_medians;
    for (double q : q_levels) {
        q_medians.push_back(sweep_loss(true, q));
    }
    std::vector<double> f_levels = {1.0, 5.0, 10.0, 20.0};
    std::vector<double> f_medians;
    for (double f : f_levels) {
        f_medians.push_back(sweep_loss(false, f));
    }
    double rho_q = spearman(q_levels, q_medians);
    double rho_f = spearman(f_levels, f_medians);
    bool pass = rho_q >= 0.8 && rho_f >= 0.8;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "loss-floor trends: Spearman(q) %.2f with medians "
                  "%.4f/%.4f/%.4f/%.4f, Spearman(F) %.2f with medians "
                  "%.4f/%.4f/%.4f/%.4f",
                  rho_q, q_medians[0], q_medians[1], q_medians[2],
                  q_medians[3], rho_f, f_medians[0], f_medians[1],
                  f_medians[2], f_medians[3]);
    report(8, pass, buf);
    return pass;
}

// ---------------------------------------------------------------------------
// criterion 9: determinism and formats

bool criterion9() {
    SimConfig cfg = SimConfig::desk_default();
    cfg.n_rounds = 40;
    cfg.master_seed = 1234;
    tilp::PolicySpec pol;
    pol.kind = tilp::PolicyKind::kTilp;
    tilp::EpisodeResult a = tilp::run_episode(cfg, pol);
    tilp::EpisodeResult b = tilp::run_episode(cfg, pol);
    bool csv_identical =
        tilp::round_csv_text(a.rounds) == tilp::round_csv_text(b.rounds);
    bool summary_identical =
        tilp::summary_json_text(a.report, cfg.master_seed, "tilp", "h") ==
        tilp::summary_json_text(b.report, cfg.master_seed, "tilp", "h");

    tilp::MetricsReport report_obj;
    report_obj.rta_60 = 7;
    report_obj.rta_70 = tilp::kRtaUnreached;
    report_obj.rta_80 = tilp::kRtaUnreached;
    std::string json = tilp::summary_json_text(report_obj, 1, "tilp", "x");
    bool sentinel_ok = json.find("\"rta_70\": \"--\"") != std::string::npos &&
                       json.find("\"rta_60\": 7") != std::string::npos;

    SimConfig weird = SimConfig::full_scale_default();
    weird.deadline_s = 4.699999999999999;
    weird.noise_psd_w_per_hz = 3.9810717055349565e-21;
    weird.split_set = {1, 2, 4};
    weird.master_seed = 18446744073709551615ull;
    tilp::ConfigLoadResult round_trip =
        tilp::parse_config(tilp::save_config(weird));
    bool config_ok = round_trip.ok() &&
                     tilp::save_config(round_trip.config) ==
                         tilp::save_config(weird) &&
                     round_trip.config.deadline_s == weird.deadline_s &&
                     round_trip.config.master_seed == weird.master_seed;

    bool pass = csv_identical && summary_identical && sentinel_ok && config_ok;
    report(9, pass,
           std::string("determinism and formats: csv ") +
               (csv_identical ? "identical" : "diverged") + ", sentinel " +
               (sentinel_ok ? "ok" : "bad") + ", config round-trip " +
               (config_ok ? "lossless" : "lossy"));
    return pass;
}

}  // namespace

int main() {
    auto t0 = std::chrono::steady_clock::now();
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    BenchmarkOutcome bench = run_benchmark();
    report(7, bench.pass7, bench.what7);
    criterion8();
    criterion9();
    report(10, bench.pass10, bench.what10);
    auto t1 = std::chrono::steady_clock::now();
    double secs =
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0)
            .count() /
        1000.0;
    std::printf("%d/10 criteria passed in %.1f s\n", 10 - g_failures, secs);
    return g_failures == 0 ? 0 : 1;
}
