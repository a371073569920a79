#include "tilp/planner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <thread>

namespace tilp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;
constexpr double kPreSquashClamp = 9.0;
constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr int kTerminalValueSamples = 8;

double softplus(double x) {
    if (x > 30.0) {
        return x;
    }
    return std::log1p(std::exp(x));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 - tanh^2(u)), stable for large |u|
double log1m_tanh2(double u) {
    double a = std::abs(u);
    return 2.0 * (std::log(2.0) - a - std::log1p(std::exp(-2.0 * a)));
}

struct ContinuousPiece {
    double u = 0.0;       // clamped pre-squash value
    double tanh_u = 0.0;
    double enc = 0.0;     // (tanh(u)+1)/2 in [0, 1]
    double logp = 0.0;
    // gradients of logp and enc w.r.t. the head mean and (clamped) log-std
    double dlogp_dm = 0.0;
    double dlogp_dls = 0.0;
    double denc_dm = 0.0;
    double denc_dls = 0.0;
    bool ls_gate = true;  // log-std clamp active?
};

ContinuousPiece continuous_piece(double mean, double logstd_raw, double eps,
                                 double bound) {
    ContinuousPiece p;
    double ls = std::clamp(logstd_raw, kLogStdMin, kLogStdMax);
    p.ls_gate = logstd_raw > kLogStdMin && logstd_raw < kLogStdMax;
    double sigma = std::exp(ls);
    double u_raw = mean + sigma * eps;
    p.u = std::clamp(u_raw, -kPreSquashClamp, kPreSquashClamp);
    double u_gate =
        (u_raw > -kPreSquashClamp && u_raw < kPreSquashClamp) ? 1.0 : 0.0;
    p.tanh_u = std::tanh(p.u);
    p.enc = 0.5 * (p.tanh_u + 1.0);
    double d = (p.u - mean) / sigma;
    p.logp = -ls - 0.5 * d * d - kHalfLog2Pi - std::log(bound / 2.0) -
             log1m_tanh2(p.u);
    double du_dm = u_gate;
    double du_dls = u_gate * sigma * eps;
    double dd_dm = (du_dm - 1.0) / sigma;
    double dd_dls = u_gate * eps - d;
    double dcorr_du = 2.0 * p.tanh_u;  // -d(log(1-tanh^2 u))/du
    p.dlogp_dm = -d * dd_dm + dcorr_du * du_dm;
    p.dlogp_dls = -1.0 - d * dd_dls + dcorr_du * du_dls;
    double sech2 = 1.0 - p.tanh_u * p.tanh_u;
    p.denc_dm = 0.5 * sech2 * du_dm;
    p.denc_dls = 0.5 * sech2 * du_dls;
    return p;
}

void softmax_into(std::span<const double> logits, std::span<double> probs) {
    double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - mx);
        denom += probs[i];
    }
    for (double& p : probs) {
        p /= denom;
    }
}

int argmax_index(std::span<const double> v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return best;
}

double continuous_bound(int coord, const SimConfig& cfg) {
    switch (coord) {
        case 0: return cfg.bandwidth_budget_hz;
        case 1: return cfg.power_max_w;
        default: return cfg.compression_max;
    }
}

}  // namespace

Actor Actor::make(int n_terminals, int n_splits, int state_dim,
                  RngStream& rng) {
    Actor actor;
    actor.n_terminals = n_terminals;
    actor.n_splits = n_splits;
    int head = actor.head_size();
    actor.net = Mlp::make({state_dim, 64, 64, n_terminals * head}, rng, 0.01);
    // initial policy centred on the feasible broad-participation region:
    // bandwidth means near the equal share (so first populations do not
    // oversubscribe the budget N/2-fold), compression leaning high enough
    // to fit the deadline, and most terminals scheduled
    double share = 1.0 / std::max(2, n_terminals);
    double b_mean = std::atanh(2.0 * share - 1.0);
    int last = actor.net.layer_count() - 1;
    std::size_t bias = actor.net.bias_offset(last);
    for (int t = 0; t < n_terminals; ++t) {
        actor.net.params[bias + t * head] = b_mean;
        actor.net.params[bias + t * head + 2] = 0.5;  // compression mean
        for (int c = 0; c < 3; ++c) {
            actor.net.params[bias + t * head + 3 + c] = -0.7;
        }
        actor.net.params[bias + t * head + 6 + n_splits] = 1.0;  // schedule
    }
    return actor;
}

Critic Critic::make(int state_dim, int action_dim, RngStream& rng) {
    Critic critic;
    critic.net = Mlp::make({state_dim + action_dim, 128, 128, 1}, rng, 0.01);
    critic.target = critic.net;
    return critic;
}

int encoded_state_dim(int n_terminals) { return 3 * n_terminals + 2; }

std::vector<double> encode_state(const StateVector& state,
                                 const SimConfig& cfg) {
    std::vector<double> x;
    x.reserve(encoded_state_dim(state.n_terminals()));
    for (int i = 0; i < state.n_terminals(); ++i) {
        double snr_proxy =
            std::max(state.gains[i] * state.fading_power[i], 1e-30);
        x.push_back((std::log10(snr_proxy) + 9.0) / 4.0);
        x.push_back(state.prev_bandwidth_hz[i] / cfg.bandwidth_budget_hz);
        x.push_back(std::log1p(state.grad_norms[i]));
    }
    x.push_back(state.loss);
    x.push_back(state.gamma_hat);
    return x;
}

int encoded_action_dim(int n_terminals, int n_splits) {
    return n_terminals * (4 + n_splits);
}

std::vector<double> encode_action(const SystemAction& action,
                                  const SimConfig& cfg) {
    int n_splits = static_cast<int>(cfg.split_set.size());
    std::vector<double> enc;
    enc.reserve(encoded_action_dim(
        static_cast<int>(action.per_terminal.size()), n_splits));
    for (const TerminalAction& a : action.per_terminal) {
        enc.push_back(a.bandwidth_hz / cfg.bandwidth_budget_hz);
        enc.push_back(a.power_w / cfg.power_max_w);
        enc.push_back(cfg.compression_max > 0.0
                          ? a.compression / cfg.compression_max
                          : 0.0);
        int layer = nearest_split(a.split_layer, cfg.split_set);
        for (int j = 0; j < n_splits; ++j) {
            enc.push_back(cfg.split_set[j] == layer ? 1.0 : 0.0);
        }
        enc.push_back(a.scheduled ? 1.0 : 0.0);
    }
    return enc;
}

ActorNoise draw_actor_noise(int n_terminals, int n_splits, RngStream& rng) {
    ActorNoise noise;
    noise.eps.resize(3 * n_terminals);
    noise.gumbel.resize(static_cast<std::size_t>(n_splits) * n_terminals);
    noise.usched.resize(n_terminals);
    for (double& e : noise.eps) {
        e = rng.next_normal();
    }
    for (double& g : noise.gumbel) {
        double u = std::clamp(rng.next_double(), 1e-12, 1.0 - 1e-12);
        g = -std::log(-std::log(u));
    }
    for (double& u : noise.usched) {
        u = rng.next_double();
    }
    return noise;
}

SampledAction actor_sample_with_noise(const Actor& actor,
                                      const StateVector& state,
                                      const SimConfig& cfg,
                                      const ActorNoise& noise,
                                      double temperature) {
    std::vector<double> x = encode_state(state, cfg);
    std::vector<double> out = actor.net.forward(x);
    int head = actor.head_size();
    int S = actor.n_splits;

    SampledAction sa;
    sa.action.per_terminal.resize(actor.n_terminals);
    sa.encoding.reserve(encoded_action_dim(actor.n_terminals, S));
    std::vector<double> y(S);
    for (int t = 0; t < actor.n_terminals; ++t) {
        const double* slice = out.data() + static_cast<std::size_t>(t) * head;
        TerminalAction& a = sa.action.per_terminal[t];
        double vals[3];
        for (int c = 0; c < 3; ++c) {
            ContinuousPiece p = continuous_piece(
                slice[c], slice[3 + c], noise.eps[3 * t + c],
                continuous_bound(c, cfg));
            vals[c] = continuous_bound(c, cfg) * p.enc;
            sa.log_prob += p.logp;
            sa.encoding.push_back(p.enc);
        }
        a.bandwidth_hz = vals[0];
        a.power_w = vals[1];
        a.compression = vals[2];

        std::span<const double> logits(slice + 6, static_cast<std::size_t>(S));
        std::vector<double> perturbed(S);
        for (int j = 0; j < S; ++j) {
            perturbed[j] = logits[j] + noise.gumbel[S * t + j];
        }
        int k = argmax_index(perturbed);
        a.split_layer = cfg.split_set[k];
        std::vector<double> relaxed_logits(S);
        for (int j = 0; j < S; ++j) {
            relaxed_logits[j] = perturbed[j] / temperature;
        }
        softmax_into(relaxed_logits, y);
        for (int j = 0; j < S; ++j) {
            sa.encoding.push_back(y[j]);
        }
        std::vector<double> probs(S);
        softmax_into(logits, probs);
        sa.log_prob += std::log(std::max(probs[k], 1e-300));

        double logit_s = slice[6 + S];
        double sig = sigmoid(logit_s);
        bool z = noise.usched[t] < sig;
        a.scheduled = z;
        sa.log_prob += z ? -softplus(-logit_s) : -softplus(logit_s);
        sa.encoding.push_back(z ? 1.0 : 0.0);
    }
    sa.action = project_action(std::move(sa.action), cfg, state.gains);
    return sa;
}

SampledAction actor_sample(const Actor& actor, const StateVector& state,
                           const SimConfig& cfg, RngStream& rng,
                           double temperature) {
    ActorNoise noise = draw_actor_noise(actor.n_terminals, actor.n_splits, rng);
    return actor_sample_with_noise(actor, state, cfg, noise, temperature);
}

SystemAction actor_mean(const Actor& actor, const StateVector& state,
                        const SimConfig& cfg) {
    std::vector<double> x = encode_state(state, cfg);
    std::vector<double> out = actor.net.forward(x);
    int head = actor.head_size();
    int S = actor.n_splits;
    SystemAction action;
    action.per_terminal.resize(actor.n_terminals);
    for (int t = 0; t < actor.n_terminals; ++t) {
        const double* slice = out.data() + static_cast<std::size_t>(t) * head;
        TerminalAction& a = action.per_terminal[t];
        auto squash = [](double u) {
            return 0.5 * (std::tanh(std::clamp(u, -kPreSquashClamp,
                                               kPreSquashClamp)) +
                          1.0);
        };
        a.bandwidth_hz = cfg.bandwidth_budget_hz * squash(slice[0]);
        a.power_w = cfg.power_max_w * squash(slice[1]);
        a.compression = cfg.compression_max * squash(slice[2]);
        std::span<const double> logits(slice + 6, static_cast<std::size_t>(S));
        a.split_layer = cfg.split_set[argmax_index(logits)];
        a.scheduled = sigmoid(slice[6 + S]) >= 0.5;
    }
    return project_action(std::move(action), cfg, state.gains);
}

double terminal_value(const Actor& actor, const Critic& critic,
                      const StateVector& state, const SimConfig& cfg,
                      std::span<const ActorNoise> noises,
                      double temperature) {
    std::vector<double> x = encode_state(state, cfg);
    std::vector<double> input(x.size() +
                              encoded_action_dim(actor.n_terminals,
                                                 actor.n_splits));
    std::copy(x.begin(), x.end(), input.begin());
    double acc = 0.0;
    for (const ActorNoise& noise : noises) {
        SampledAction sa =
            actor_sample_with_noise(actor, state, cfg, noise, temperature);
        std::copy(sa.encoding.begin(), sa.encoding.end(),
                  input.begin() + static_cast<long>(x.size()));
        acc += critic.net.forward(input)[0];
    }
    return acc / static_cast<double>(noises.size());
}

double terminal_value(const Actor& actor, const Critic& critic,
                      const StateVector& state, const SimConfig& cfg,
                      int n_samples, RngStream& rng, double temperature) {
    std::vector<ActorNoise> noises;
    noises.reserve(n_samples);
    for (int i = 0; i < n_samples; ++i) {
        noises.push_back(
            draw_actor_noise(actor.n_terminals, actor.n_splits, rng));
    }
    return terminal_value(actor, critic, state, cfg, noises, temperature);
}

CemDistribution CemDistribution::from_actor(const Actor& actor,
                                            const StateVector& state,
                                            const SimConfig& cfg) {
    std::vector<double> x = encode_state(state, cfg);
    std::vector<double> out = actor.net.forward(x);
    int head = actor.head_size();
    int S = actor.n_splits;
    int N = actor.n_terminals;
    int K = cfg.horizon;

    CemDistribution dist;
    dist.horizon = K;
    dist.n_terminals = N;
    dist.n_splits = S;
    dist.mean.resize(static_cast<std::size_t>(3) * N * K);
    dist.stdev.resize(static_cast<std::size_t>(3) * N * K);
    dist.cat.resize(static_cast<std::size_t>(S) * N * K);
    dist.bern.resize(static_cast<std::size_t>(N) * K);

    std::vector<double> probs(S);
    for (int t = 0; t < N; ++t) {
        const double* slice = out.data() + static_cast<std::size_t>(t) * head;
        std::span<const double> logits(slice + 6, static_cast<std::size_t>(S));
        softmax_into(logits, probs);
        double sig = std::clamp(sigmoid(slice[6 + S]), kCemBernMin,
                                kCemBernMax);
        for (int k = 0; k < K; ++k) {
            for (int c = 0; c < 3; ++c) {
                std::size_t idx =
                    (static_cast<std::size_t>(k) * N + t) * 3 + c;
                dist.mean[idx] = slice[c];
                double sigma = std::exp(
                    std::clamp(slice[3 + c], kLogStdMin, kLogStdMax));
                dist.stdev[idx] = std::max(sigma, kCemStdFloor);
            }
            for (int j = 0; j < S; ++j) {
                dist.cat[(static_cast<std::size_t>(k) * N + t) * S + j] =
                    probs[j];
            }
            dist.bern[static_cast<std::size_t>(k) * N + t] = sig;
        }
    }
    return dist;
}

namespace {

struct CemCandidate {
    std::vector<double> u;          // 3 * N * K pre-squash draws
    std::vector<int> split_pos;     // N * K positions into the split set
    std::vector<std::uint8_t> sched;  // N * K
    std::vector<SystemAction> actions;
    double score = -kInf;
};

void build_candidate_actions(CemCandidate& cand, const StateVector& state,
                             const SimConfig& cfg) {
    int N = static_cast<int>(state.gains.size());
    int K = static_cast<int>(cand.sched.size()) / N;
    cand.actions.clear();
    for (int k = 0; k < K; ++k) {
        SystemAction action;
        action.per_terminal.resize(N);
        for (int t = 0; t < N; ++t) {
            std::size_t base = (static_cast<std::size_t>(k) * N + t) * 3;
            TerminalAction& a = action.per_terminal[t];
            auto squash = [](double u) {
                return 0.5 * (std::tanh(std::clamp(u, -kPreSquashClamp,
                                                   kPreSquashClamp)) +
                              1.0);
            };
            a.bandwidth_hz = cfg.bandwidth_budget_hz * squash(cand.u[base]);
            a.power_w = cfg.power_max_w * squash(cand.u[base + 1]);
            a.compression = cfg.compression_max * squash(cand.u[base + 2]);
            a.split_layer =
                cfg.split_set[cand.split_pos[static_cast<std::size_t>(k) * N + t]];
            a.scheduled = cand.sched[static_cast<std::size_t>(k) * N + t] != 0;
        }
        cand.actions.push_back(
            project_action(std::move(action), cfg, state.gains));
    }
}

CemCandidate sample_candidate(const CemDistribution& dist,
                              const StateVector& state, const SimConfig& cfg,
                              RngStream& rng) {
    CemCandidate cand;
    std::size_t blocks = dist.bern.size();
    cand.u.resize(3 * blocks);
    cand.split_pos.resize(blocks);
    cand.sched.resize(blocks);
    for (std::size_t i = 0; i < 3 * blocks; ++i) {
        cand.u[i] = dist.mean[i] + dist.stdev[i] * rng.next_normal();
    }
    int S = dist.n_splits;
    for (std::size_t b = 0; b < blocks; ++b) {
        double r = rng.next_double();
        double acc = 0.0;
        int pos = S - 1;
        for (int j = 0; j < S; ++j) {
            acc += dist.cat[b * S + j];
            if (r < acc) {
                pos = j;
                break;
            }
        }
        cand.split_pos[b] = pos;
        cand.sched[b] = rng.next_double() < dist.bern[b] ? 1 : 0;
    }
    build_candidate_actions(cand, state, cfg);
    return cand;
}

// Rescale oversubscribed bandwidth requests onto the budget. Admission
// already grants exactly this allocation, so the repaired candidate keeps
// the parent's physics while shedding the budget hinge; its score therefore
// never falls below the parent's.
CemCandidate budget_repair(const CemCandidate& parent,
                           const StateVector& state, const SimConfig& cfg) {
    CemCandidate cand = parent;
    int n = static_cast<int>(state.gains.size());
    int horizon = static_cast<int>(cand.sched.size()) / n;
    bool changed = false;
    for (int k = 0; k < horizon; ++k) {
        double requested = 0.0;
        for (int t = 0; t < n; ++t) {
            const TerminalAction& a = cand.actions[k].per_terminal[t];
            if (a.scheduled) {
                requested += a.bandwidth_hz;
            }
        }
        if (requested <= cfg.bandwidth_budget_hz || requested <= 0.0) {
            continue;
        }
        changed = true;
        double scale = cfg.bandwidth_budget_hz / requested;
        for (int t = 0; t < n; ++t) {
            std::size_t base = (static_cast<std::size_t>(k) * n + t) * 3;
            const TerminalAction& a = cand.actions[k].per_terminal[t];
            if (!a.scheduled) {
                continue;
            }
            double share = std::clamp(
                scale * a.bandwidth_hz / cfg.bandwidth_budget_hz, 1e-12,
                1.0 - 1e-12);
            cand.u[base] = std::atanh(2.0 * share - 1.0);
        }
    }
    if (changed) {
        build_candidate_actions(cand, state, cfg);
    }
    return cand;
}

// Deterministic twin-informed proposals, one per participation count m:
// schedule the m terminals with the best predicted rates at equal shares,
// full power, and per-terminal split/compression picked to maximize the
// kept payload that still finishes inside a safety margin of the deadline.
// CEM selects among and then polishes these the same way it treats any
// sampled candidate.
std::vector<CemCandidate> heuristic_seeds(const StateVector& state,
                                          const TwinSnapshot& snap,
                                          const SimConfig& cfg) {
    int n = static_cast<int>(state.gains.size());
    int horizon = cfg.horizon;
    int n_splits = static_cast<int>(cfg.split_set.size());
    const double margin = 0.85 * cfg.deadline_s;

    std::vector<CemCandidate> seeds;
    for (int m = 1; m <= n; ++m) {
        double share_b = cfg.bandwidth_budget_hz / m;
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) {
            order[i] = i;
        }
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            double ra = snap.net.rate_corr[a] *
                        rate(share_b, cfg.power_max_w, state.gains[a],
                             snap.net.fading_power_est[a],
                             cfg.noise_psd_w_per_hz);
            double rb = snap.net.rate_corr[b] *
                        rate(share_b, cfg.power_max_w, state.gains[b],
                             snap.net.fading_power_est[b],
                             cfg.noise_psd_w_per_hz);
            return ra > rb;
        });

        CemCandidate cand;
        std::size_t blocks = static_cast<std::size_t>(horizon) * n;
        cand.u.assign(3 * blocks, std::atanh(-(1.0 - 1e-9)));
        cand.split_pos.assign(blocks, 0);
        cand.sched.assign(blocks, 0);

        for (int rank = 0; rank < m; ++rank) {
            int i = order[rank];
            double r = snap.net.rate_corr[i] *
                       rate(share_b, cfg.power_max_w, state.gains[i],
                            snap.net.fading_power_est[i],
                            cfg.noise_psd_w_per_hz);
            const TerminalProfile& prof = snap.profiles[i];
            // best split: maximize the kept fraction that fits the margin
            int best_pos = 0;
            double best_kept = -1.0;
            for (int sp = 0; sp < n_splits; ++sp) {
                double cp =
                    cp_delay(prof.batch_size, snap.geometry.macs_per_sample[sp],
                             prof.ops_per_cycle, prof.cpu_hz);
                double budget_s = margin - cp;
                double kept = 0.0;
                if (budget_s > 0.0 && r > 0.0) {
                    kept = budget_s * r /
                           (2.0 * prof.batch_size *
                            snap.geometry.act_bits_per_sample[sp]);
                }
                kept = std::clamp(kept, 0.0, 1.0);
                if (kept > best_kept + 1e-12) {
                    best_kept = kept;
                    best_pos = sp;
                }
            }
            double q = std::clamp(1.0 - best_kept, 0.0, cfg.compression_max);
            double share_q =
                cfg.compression_max > 0.0 ? q / cfg.compression_max : 0.0;
            auto to_u = [](double share) {
                return std::atanh(
                    std::clamp(2.0 * share - 1.0, -(1.0 - 1e-9), 1.0 - 1e-9));
            };
            for (int k = 0; k < horizon; ++k) {
                std::size_t b = static_cast<std::size_t>(k) * n + i;
                cand.u[3 * b] = to_u(share_b / cfg.bandwidth_budget_hz);
                cand.u[3 * b + 1] = to_u(1.0 - 1e-9);  // full power
                cand.u[3 * b + 2] = to_u(share_q);
                cand.split_pos[b] = best_pos;
                cand.sched[b] = 1;
            }
        }
        build_candidate_actions(cand, state, cfg);
        seeds.push_back(std::move(cand));
    }
    return seeds;
}

CemCandidate mean_candidate(const CemDistribution& dist,
                            const StateVector& state, const SimConfig& cfg) {
    CemCandidate cand;
    std::size_t blocks = dist.bern.size();
    cand.u = dist.mean;
    cand.split_pos.resize(blocks);
    cand.sched.resize(blocks);
    int S = dist.n_splits;
    for (std::size_t b = 0; b < blocks; ++b) {
        std::span<const double> row(dist.cat.data() + b * S,
                                    static_cast<std::size_t>(S));
        cand.split_pos[b] = argmax_index(row);
        cand.sched[b] = dist.bern[b] >= 0.5 ? 1 : 0;
    }
    build_candidate_actions(cand, state, cfg);
    return cand;
}

void refit_distribution(CemDistribution& dist,
                        std::span<const CemCandidate* const> elites) {
    std::size_t blocks = dist.bern.size();
    int S = dist.n_splits;
    double count = static_cast<double>(elites.size());
    for (std::size_t i = 0; i < 3 * blocks; ++i) {
        double m = 0.0;
        double m2 = 0.0;
        for (const CemCandidate* e : elites) {
            m += e->u[i];
            m2 += e->u[i] * e->u[i];
        }
        m /= count;
        m2 /= count;
        dist.mean[i] = m;
        dist.stdev[i] =
            std::max(std::sqrt(std::max(0.0, m2 - m * m)), kCemStdFloor);
    }
    for (std::size_t b = 0; b < blocks; ++b) {
        // Laplace +1 smoothing keeps every split reachable
        std::vector<double> counts(S, 1.0);
        double on = 0.0;
        for (const CemCandidate* e : elites) {
            counts[e->split_pos[b]] += 1.0;
            on += e->sched[b] ? 1.0 : 0.0;
        }
        double total = count + S;
        for (int j = 0; j < S; ++j) {
            dist.cat[b * S + j] = counts[j] / total;
        }
        dist.bern[b] = std::clamp(on / count, kCemBernMin, kCemBernMax);
    }
}

}  // namespace

double score_sequence(std::span<const SystemAction> actions,
                      const StateVector& state, const TwinSnapshot& snap,
                      const Actor& actor, const Critic& critic,
                      const SimConfig& cfg,
                      std::span<const ActorNoise> value_noises,
                      double temperature) {
    RewardWeights w = RewardWeights::from_config(cfg);
    TwinRolloutResult roll = twin_rollout(snap, state, actions, w);
    double ret = discounted_return(roll.rewards, cfg.discount);
    if (!std::isfinite(ret)) {
        return -kInf;
    }
    double v = terminal_value(actor, critic, roll.terminal_state, cfg,
                              value_noises, temperature);
    return ret + std::pow(cfg.discount,
                          static_cast<double>(actions.size())) *
                     v;
}

int planner_thread_count() {
    static const int cached = [] {
        const char* env = std::getenv("TILP_THREADS");
        if (env != nullptr) {
            int v = std::atoi(env);
            if (v > 0) {
                return v;
            }
        }
        unsigned hw = std::thread::hardware_concurrency();
        return static_cast<int>(std::min(hw, 8u));
    }();
    return std::max(1, cached);
}

CemResult cem_plan(const StateVector& state, const TwinSnapshot& snap,
                   const Actor& actor, const Critic& critic,
                   const SimConfig& cfg, RngStream& rng) {
    CemDistribution dist = CemDistribution::from_actor(actor, state, cfg);

    // common terminal-value noise shared by all candidates: scores become
    // exactly comparable across candidates and iterations
    RngStream value_rng = rng.fork(1);
    std::vector<ActorNoise> value_noises;
    for (int i = 0; i < kTerminalValueSamples; ++i) {
        value_noises.push_back(
            draw_actor_noise(actor.n_terminals, actor.n_splits, value_rng));
    }
    RngStream sample_rng = rng.fork(2);

    const double temp = SacHyper{}.gumbel_temp;
    CemResult result;
    std::vector<CemCandidate> population(cfg.cem_population);
    CemCandidate best;
    best.score = -kInf;

    std::vector<CemCandidate> seeds = heuristic_seeds(state, snap, cfg);

    for (int iter = 0; iter < cfg.cem_iters; ++iter) {
        for (int c = 0; c < cfg.cem_population; ++c) {
            if (iter == 0 && c == 0) {
                // seed the search with the prior's mean repeat
                population[c] = mean_candidate(dist, state, cfg);
            } else if (iter == 0 && c - 1 < static_cast<int>(seeds.size()) &&
                       c < cfg.cem_population) {
                population[c] = seeds[c - 1];
            } else if (iter > 0 && c == 0 && cfg.cem_population > 1) {
                // seed the budget-repaired incumbent
                population[c] = budget_repair(best, state, cfg);
            } else {
                population[c] = sample_candidate(dist, state, cfg, sample_rng);
            }
        }

        int workers = std::min(planner_thread_count(),
                               cfg.cem_population);
        auto score_range = [&](int lo, int hi) {
            for (int c = lo; c < hi; ++c) {
                population[c].score = score_sequence(
                    population[c].actions, state, snap, actor, critic, cfg,
                    value_noises, temp);
            }
        };
        if (workers <= 1) {
            score_range(0, cfg.cem_population);
        } else {
            std::vector<std::thread> pool;
            int chunk = (cfg.cem_population + workers - 1) / workers;
            for (int wk = 0; wk < workers; ++wk) {
                int lo = wk * chunk;
                int hi = std::min(cfg.cem_population, lo + chunk);
                if (lo < hi) {
                    pool.emplace_back(score_range, lo, hi);
                }
            }
            for (std::thread& th : pool) {
                th.join();
            }
        }

        if (iter == 0) {
            result.prior_score = population[0].score;
        }

        std::vector<int> order(cfg.cem_population);
        for (int c = 0; c < cfg.cem_population; ++c) {
            order[c] = c;
        }
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return population[a].score > population[b].score;
        });
        if (best.actions.empty() || population[order[0]].score > best.score) {
            best = population[order[0]];
        }

        std::vector<const CemCandidate*> elites;
        double elite_sum = 0.0;
        for (int e = 0; e < cfg.cem_elites; ++e) {
            elites.push_back(&population[order[e]]);
            elite_sum += population[order[e]].score;
        }
        refit_distribution(dist, elites);

        double pop_mean = 0.0;
        int finite = 0;
        for (const CemCandidate& c : population) {
            if (std::isfinite(c.score)) {
                pop_mean += c.score;
                ++finite;
            }
        }
        pop_mean = finite > 0 ? pop_mean / finite : 0.0;
        double pop_var = 0.0;
        for (const CemCandidate& c : population) {
            if (std::isfinite(c.score)) {
                pop_var += (c.score - pop_mean) * (c.score - pop_mean);
            }
        }
        CemIterDiag diag;
        diag.best_score = best.score;
        diag.mean_elite_score = elite_sum / cfg.cem_elites;
        diag.pop_std = finite > 1 ? std::sqrt(pop_var / finite) : 0.0;
        result.iters.push_back(diag);
    }

    // final repair pass so the executed request never oversubscribes what
    // admission would grant anyway
    CemCandidate repaired = budget_repair(best, state, cfg);
    if (repaired.u != best.u) {
        repaired.score = score_sequence(repaired.actions, state, snap, actor,
                                        critic, cfg, value_noises, temp);
        if (repaired.score >= best.score) {
            best = std::move(repaired);
        }
    }

    result.action = best.actions.front();
    result.best_score = best.score;
    return result;
}

void ReplayBuffer::push(ReplayEntry e) {
    if (entries.size() < capacity) {
        entries.push_back(std::move(e));
    } else {
        entries[write_pos] = std::move(e);
    }
    write_pos = (write_pos + 1) % capacity;
}

const ReplayEntry& ReplayBuffer::sample(RngStream& rng) const {
    return entries[rng.next_below(entries.size())];
}

std::vector<ReplayEntry> sample_batch(const ReplayBuffer& real,
                                      const ReplayBuffer& imagined,
                                      int batch_size, RngStream& rng) {
    std::vector<ReplayEntry> batch;
    if (real.size() == 0 && imagined.size() == 0) {
        return batch;
    }
    if (imagined.size() == 0 || real.size() == 0) {
        const ReplayBuffer& only = real.size() > 0 ? real : imagined;
        for (int i = 0; i < batch_size; ++i) {
            batch.push_back(only.sample(rng));
        }
        return batch;
    }
    int half = batch_size / 2;
    for (int i = 0; i < half; ++i) {
        batch.push_back(real.sample(rng));
    }
    for (int i = half; i < batch_size; ++i) {
        batch.push_back(imagined.sample(rng));
    }
    return batch;
}

FrozenSamples freeze_samples(const Actor& actor,
                             std::span<const StateVector> states,
                             std::span<const ActorNoise> noises,
                             const SimConfig& cfg) {
    FrozenSamples frozen;
    int head = actor.head_size();
    int S = actor.n_splits;
    for (std::size_t i = 0; i < states.size(); ++i) {
        std::vector<double> x = encode_state(states[i], cfg);
        std::vector<double> out = actor.net.forward(x);
        for (int t = 0; t < actor.n_terminals; ++t) {
            const double* slice =
                out.data() + static_cast<std::size_t>(t) * head;
            std::vector<double> perturbed(S);
            for (int j = 0; j < S; ++j) {
                perturbed[j] = slice[6 + j] + noises[i].gumbel[S * t + j];
            }
            frozen.split_choice.push_back(argmax_index(perturbed));
            double sig = sigmoid(slice[6 + S]);
            bool z = noises[i].usched[t] < sig;
            frozen.sched.push_back(z ? 1 : 0);
            frozen.sched_offset.push_back((z ? 1.0 : 0.0) - sig);
        }
    }
    return frozen;
}

double actor_objective(const Actor& actor, const Critic& critic,
                       std::span<const StateVector> states,
                       std::span<const ActorNoise> noises,
                       const FrozenSamples& frozen, double alpha,
                       double temperature, const SimConfig& cfg,
                       std::vector<double>* grad_out) {
    int head = actor.head_size();
    int S = actor.n_splits;
    int N = actor.n_terminals;
    double batch = static_cast<double>(states.size());
    double loss = 0.0;
    if (grad_out) {
        grad_out->assign(actor.net.param_count(), 0.0);
    }
    std::vector<double> critic_grad_scratch(critic.net.param_count(), 0.0);

    for (std::size_t i = 0; i < states.size(); ++i) {
        std::vector<double> x = encode_state(states[i], cfg);
        Mlp::Cache actor_cache;
        std::vector<double> out = actor.net.forward(x, &actor_cache);

        double logp = 0.0;
        std::vector<double> enc(encoded_action_dim(N, S));
        std::vector<ContinuousPiece> cont(static_cast<std::size_t>(3) * N);
        std::vector<double> split_probs(static_cast<std::size_t>(S) * N);
        std::vector<double> relaxed(static_cast<std::size_t>(S) * N);
        std::vector<double> sched_sig(N);
        int enc_stride = 4 + S;
        for (int t = 0; t < N; ++t) {
            const double* slice =
                out.data() + static_cast<std::size_t>(t) * head;
            for (int c = 0; c < 3; ++c) {
                ContinuousPiece p = continuous_piece(
                    slice[c], slice[3 + c], noises[i].eps[3 * t + c],
                    continuous_bound(c, cfg));
                logp += p.logp;
                enc[t * enc_stride + c] = p.enc;
                cont[3 * t + c] = p;
            }
            std::span<const double> logits(slice + 6,
                                           static_cast<std::size_t>(S));
            std::span<double> probs(split_probs.data() +
                                        static_cast<std::size_t>(S) * t,
                                    static_cast<std::size_t>(S));
            softmax_into(logits, probs);
            int k = frozen.split_choice[i * N + t];
            logp += std::log(std::max(probs[k], 1e-300));
            std::vector<double> pert(S);
            for (int j = 0; j < S; ++j) {
                pert[j] =
                    (logits[j] + noises[i].gumbel[S * t + j]) / temperature;
            }
            std::span<double> yrow(relaxed.data() +
                                       static_cast<std::size_t>(S) * t,
                                   static_cast<std::size_t>(S));
            softmax_into(pert, yrow);
            for (int j = 0; j < S; ++j) {
                enc[t * enc_stride + 3 + j] = yrow[j];
            }
            double logit_s = slice[6 + S];
            double sig = sigmoid(logit_s);
            sched_sig[t] = sig;
            bool z = frozen.sched[i * N + t] != 0;
            logp += z ? -softplus(-logit_s) : -softplus(logit_s);
            enc[t * enc_stride + 3 + S] =
                sig + frozen.sched_offset[i * N + t];
        }

        std::vector<double> critic_in(x.size() + enc.size());
        std::copy(x.begin(), x.end(), critic_in.begin());
        std::copy(enc.begin(), enc.end(),
                  critic_in.begin() + static_cast<long>(x.size()));
        Mlp::Cache critic_cache;
        double q = critic.net.forward(critic_in, &critic_cache)[0];

        loss += (alpha * logp - q) / batch;
        if (!grad_out) {
            continue;
        }

        // dL/dQ = -1/batch; critic params are constants here, we only need
        // the gradient w.r.t. the action encoding
        std::array<double, 1> dq{-1.0 / batch};
        std::fill(critic_grad_scratch.begin(), critic_grad_scratch.end(), 0.0);
        std::vector<double> dinput =
            critic.net.backward(critic_cache, dq, critic_grad_scratch);
        double dlogp = alpha / batch;

        std::vector<double> dout(out.size(), 0.0);
        for (int t = 0; t < N; ++t) {
            double* dslice = dout.data() + static_cast<std::size_t>(t) * head;
            const double* denc =
                dinput.data() + x.size() + static_cast<std::size_t>(t) * enc_stride;
            for (int c = 0; c < 3; ++c) {
                const ContinuousPiece& p = cont[3 * t + c];
                dslice[c] += dlogp * p.dlogp_dm + denc[c] * p.denc_dm;
                if (p.ls_gate) {
                    dslice[3 + c] +=
                        dlogp * p.dlogp_dls + denc[c] * p.denc_dls;
                }
            }
            std::span<const double> probs(split_probs.data() +
                                              static_cast<std::size_t>(S) * t,
                                          static_cast<std::size_t>(S));
            std::span<const double> yrow(relaxed.data() +
                                             static_cast<std::size_t>(S) * t,
                                         static_cast<std::size_t>(S));
            int k = frozen.split_choice[i * N + t];
            double ydot = 0.0;
            for (int j = 0; j < S; ++j) {
                ydot += denc[3 + j] * yrow[j];
            }
            for (int j = 0; j < S; ++j) {
                dslice[6 + j] += dlogp * ((j == k ? 1.0 : 0.0) - probs[j]);
                dslice[6 + j] +=
                    yrow[j] * (denc[3 + j] - ydot) / temperature;
            }
            double sig = sched_sig[t];
            double z = frozen.sched[i * N + t] != 0 ? 1.0 : 0.0;
            dslice[6 + S] += dlogp * (z - sig);
            dslice[6 + S] += denc[3 + S] * sig * (1.0 - sig);
        }
        actor.net.backward(actor_cache, dout, *grad_out);
    }
    return loss;
}

std::vector<double> critic_targets(const Actor& actor, const Critic& critic,
                                   std::span<const ReplayEntry> batch,
                                   const SacHyper& hyper,
                                   const SimConfig& cfg, RngStream& rng) {
    std::vector<double> targets;
    targets.reserve(batch.size());
    for (const ReplayEntry& e : batch) {
        double y = e.reward;
        if (!e.done) {
            SampledAction next = actor_sample(actor, e.next_state, cfg, rng,
                                              hyper.gumbel_temp);
            std::vector<double> x2 = encode_state(e.next_state, cfg);
            std::vector<double> input(x2.size() + next.encoding.size());
            std::copy(x2.begin(), x2.end(), input.begin());
            std::copy(next.encoding.begin(), next.encoding.end(),
                      input.begin() + static_cast<long>(x2.size()));
            double qt = critic.target.forward(input)[0];
            y += cfg.discount * (qt - hyper.alpha * next.log_prob);
        }
        targets.push_back(y);
    }
    return targets;
}

double critic_objective(const Critic& critic,
                        std::span<const ReplayEntry> batch,
                        std::span<const double> targets,
                        const SimConfig& cfg, std::vector<double>* grad_out) {
    if (grad_out) {
        grad_out->assign(critic.net.param_count(), 0.0);
    }
    double loss = 0.0;
    double batch_size = static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::vector<double> x = encode_state(batch[i].state, cfg);
        std::vector<double> a = encode_action(batch[i].action, cfg);
        std::vector<double> input(x.size() + a.size());
        std::copy(x.begin(), x.end(), input.begin());
        std::copy(a.begin(), a.end(),
                  input.begin() + static_cast<long>(x.size()));
        Mlp::Cache cache;
        double q = critic.net.forward(input, &cache)[0];
        double err = q - targets[i];
        loss += err * err / batch_size;
        if (grad_out) {
            std::array<double, 1> dq{2.0 * err / batch_size};
            critic.net.backward(cache, dq, *grad_out);
        }
    }
    return loss;
}

SacResult sac_update(Actor& actor, Critic& critic, AdamState& actor_opt,
                     AdamState& critic_opt,
                     std::span<const ReplayEntry> batch,
                     const SacHyper& hyper, const SimConfig& cfg,
                     RngStream& rng) {
    SacResult res;
    if (batch.empty()) {
        return res;
    }
    std::vector<double> targets =
        critic_targets(actor, critic, batch, hyper, cfg, rng);
    std::vector<double> critic_grad;
    res.critic_loss =
        critic_objective(critic, batch, targets, cfg, &critic_grad);

    std::vector<StateVector> states;
    states.reserve(batch.size());
    for (const ReplayEntry& e : batch) {
        states.push_back(e.state);
    }
    std::vector<ActorNoise> noises;
    noises.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        noises.push_back(
            draw_actor_noise(actor.n_terminals, actor.n_splits, rng));
    }
    FrozenSamples frozen = freeze_samples(actor, states, noises, cfg);
    std::vector<double> actor_grad;
    res.actor_loss =
        actor_objective(actor, critic, states, noises, frozen, hyper.alpha,
                        hyper.gumbel_temp, cfg, &actor_grad);

    if (!std::isfinite(res.critic_loss) || !std::isfinite(res.actor_loss)) {
        return res;  // leave every parameter untouched
    }
    clip_by_norm(critic_grad, hyper.clip_norm);
    critic_opt.apply(critic.net.params, critic_grad, hyper.lr);
    clip_by_norm(actor_grad, hyper.clip_norm);
    actor_opt.apply(actor.net.params, actor_grad, hyper.lr);
    soft_update(critic.target.params, critic.net.params, hyper.tau);
    res.applied = true;
    return res;
}

std::vector<ReplayEntry> imagine_rollout(const Actor& actor,
                                         const TwinSnapshot& snap,
                                         const StateVector& state, int steps,
                                         const SimConfig& cfg,
                                         const RewardWeights& w,
                                         const SacHyper& hyper,
                                         RngStream& rng) {
    std::vector<ReplayEntry> entries;
    StateVector cur = state;
    for (int u = 0; u < steps; ++u) {
        SampledAction sa =
            actor_sample(actor, cur, cfg, rng, hyper.gumbel_temp);
        PredictedOutcome pred = predict_round(snap, cur, sa.action);
        RewardBreakdown rb =
            reward(pred.dgamma_hat, pred.latency_hat, pred.energy_hat,
                   pred.violation_hat, w, cfg);
        StateVector next = twin_transition(snap, cur, sa.action, pred);
        ReplayEntry e;
        e.state = cur;
        e.action = sa.action;
        e.reward = rb.r_total;
        e.next_state = next;
        e.done = false;
        e.imagined = true;
        entries.push_back(std::move(e));
        cur = std::move(next);
    }
    return entries;
}

}  // namespace tilp
