#include "tilp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace tilp {
namespace {

namespace stream_id {
constexpr std::uint64_t kProfiles = 1;
constexpr std::uint64_t kData = 2;
constexpr std::uint64_t kModel = 3;
constexpr std::uint64_t kFading = 4;
constexpr std::uint64_t kPolicy = 5;
constexpr std::uint64_t kCem = 6;
constexpr std::uint64_t kBatch = 7;
constexpr std::uint64_t kMask = 8;
constexpr std::uint64_t kBaseline = 9;
constexpr std::uint64_t kSacNoise = 10;
constexpr std::uint64_t kImagine = 11;
constexpr std::uint64_t kSacSample = 12;
}  // namespace stream_id

constexpr double kLearningRate = 0.1;  // client and server SGD step
constexpr int kSacBatchSize = 64;
constexpr int kSacMinBuffer = 16;
constexpr int kEvalSetSize = 400;

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double l1_net_residual(const PredictedOutcome& predicted,
                       const RoundOutcome& realized,
                       const SystemAction& action) {
    double res = std::abs(predicted.latency_hat - realized.latency_s);
    for (std::size_t i = 0; i < action.per_terminal.size(); ++i) {
        if (action.per_terminal[i].scheduled) {
            res += std::abs(predicted.energy_hat[i] - realized.energy_j[i]);
        }
    }
    return res;
}

double train_window_rmse(const TrainTwinParams& params) {
    if (params.window.empty()) {
        return 0.0;
    }
    double acc = 0.0;
    for (const TrainSample& s : params.window) {
        double err = train_twin_predict(params, s.features) - s.dloss;
        acc += err * err;
    }
    return std::sqrt(acc / static_cast<double>(params.window.size()));
}

}  // namespace

std::string policy_kind_name(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::kTilp: return "tilp";
        case PolicyKind::kActorOnly: return "actor_only";
        case PolicyKind::kRandomFeasible: return "random_feasible";
        case PolicyKind::kStaticEqual: return "static_equal";
        case PolicyKind::kGreedyChannel: return "greedy_channel";
    }
    return "unknown";
}

std::optional<PolicyKind> parse_policy_kind(const std::string& name) {
    if (name == "tilp") return PolicyKind::kTilp;
    if (name == "actor_only") return PolicyKind::kActorOnly;
    if (name == "random_feasible") return PolicyKind::kRandomFeasible;
    if (name == "static_equal") return PolicyKind::kStaticEqual;
    if (name == "greedy_channel") return PolicyKind::kGreedyChannel;
    return std::nullopt;
}

std::vector<TerminalProfile> make_profiles(const SimConfig& cfg,
                                           RngStream rng) {
    std::vector<TerminalProfile> profiles(cfg.n_terminals);
    for (TerminalProfile& p : profiles) {
        p.distance_m = rng.next_uniform(10.0, 200.0);
        // G0 = 1e-3 at 1 m with exponent 3.5 puts the gain near 1e-10 at
        // 100 m
        p.large_scale_gain = 1.0e-3 * std::pow(p.distance_m, -3.5);
        p.ops_per_cycle = rng.next_uniform(3.0e-5, 8.0e-5);
        p.cpu_hz = 1.5e9;
        p.energy_coeff = rng.next_uniform(5.0e-25, 2.0e-24);
        p.batch_size = 16;
        p.dataset_size = 512;
    }
    return profiles;
}

Environment make_environment(const SimConfig& cfg) {
    RngStream root(cfg.master_seed, 0);
    Environment env;
    env.profiles = make_profiles(cfg, root.fork(stream_id::kProfiles));
    RngStream data_rng = root.fork(stream_id::kData);
    env.data = make_sharded_data(cfg.n_terminals,
                                 env.profiles.front().dataset_size,
                                 kEvalSetSize, 16, 4, data_rng);
    RngStream model_rng = root.fork(stream_id::kModel);
    env.model = LayeredModel::make(default_layer_widths(), model_rng);
    env.geometry =
        build_geometry(env.model.layer_widths, cfg.split_set,
                       env.profiles.front().batch_size, kDefaultPayloadScale);
    return env;
}

int rta(std::span<const double> gamma_trace, double theta) {
    for (std::size_t t = 0; t < gamma_trace.size(); ++t) {
        if (gamma_trace[t] >= theta) {
            return static_cast<int>(t) + 1;
        }
    }
    return kRtaUnreached;
}

AggregateMetrics aggregate_metrics(std::span<const RoundRecord> rounds) {
    AggregateMetrics agg;
    for (const RoundRecord& r : rounds) {
        agg.energy_total_j += r.energy_j;
        agg.latency_avg_s += r.latency_s;
        agg.volume_total_bits += r.volume_bits;
        agg.violation_avg += r.violation;
    }
    if (!rounds.empty()) {
        agg.latency_avg_s /= static_cast<double>(rounds.size());
        agg.violation_avg /= static_cast<double>(rounds.size());
    }
    return agg;
}

SystemAction baseline_action(PolicyKind kind, const StateVector& state,
                             const SimConfig& cfg,
                             const PayloadGeometry& geom,
                             std::span<const TerminalProfile> profiles,
                             RngStream& rng) {
    int n = state.n_terminals();
    int n_splits = static_cast<int>(cfg.split_set.size());
    SystemAction action;
    action.per_terminal.resize(n);

    switch (kind) {
        case PolicyKind::kRandomFeasible: {
            for (TerminalAction& a : action.per_terminal) {
                a.scheduled = rng.next_double() < 0.5;
                a.bandwidth_hz = rng.next_uniform(0.0, cfg.bandwidth_budget_hz);
                a.power_w = rng.next_uniform(0.0, cfg.power_max_w);
                a.compression = rng.next_uniform(0.0, cfg.compression_max);
                a.split_layer = cfg.split_set[rng.next_below(n_splits)];
            }
            break;
        }
        case PolicyKind::kStaticEqual: {
            for (TerminalAction& a : action.per_terminal) {
                a.scheduled = true;
                a.bandwidth_hz = cfg.bandwidth_budget_hz / n;
                a.power_w = cfg.power_max_w / 2.0;
                a.split_layer = cfg.split_set[n_splits / 2];
                a.compression = cfg.compression_max / 2.0;
            }
            break;
        }
        case PolicyKind::kGreedyChannel: {
            // schedule the better half of the channel, split shallow within
            // memory, and compress only as much as the deadline demands
            std::vector<int> order(n);
            for (int i = 0; i < n; ++i) {
                order[i] = i;
            }
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                return state.gains[a] * state.fading_power[a] >
                       state.gains[b] * state.fading_power[b];
            });
            int picked = (n + 1) / 2;
            double score_sum = 0.0;
            for (int i = 0; i < picked; ++i) {
                score_sum += state.gains[order[i]] *
                             state.fading_power[order[i]];
            }
            int split = cfg.split_set.front();
            for (int s : cfg.split_set) {
                if (memory_ok(geom, s, cfg.memory_budget_bytes).ok) {
                    split = s;
                    break;
                }
            }
            int gi = geom.index_of(split);
            for (int i = 0; i < picked; ++i) {
                int t = order[i];
                TerminalAction& a = action.per_terminal[t];
                a.scheduled = true;
                double score = state.gains[t] * state.fading_power[t];
                a.bandwidth_hz =
                    score_sum > 0.0
                        ? cfg.bandwidth_budget_hz * score / score_sum
                        : cfg.bandwidth_budget_hz / picked;
                a.power_w = cfg.power_max_w;
                a.split_layer = split;
                double r = rate(a.bandwidth_hz, a.power_w,
                                state.gains[t], state.fading_power[t],
                                cfg.noise_psd_w_per_hz);
                double cp =
                    cp_delay(profiles[t].batch_size,
                             geom.macs_per_sample[gi],
                             profiles[t].ops_per_cycle, profiles[t].cpu_hz);
                a.compression = cfg.compression_max;
                for (int g = 0; g < 10; ++g) {
                    double q = cfg.compression_max * g / 9.0;
                    double tx = tx_delay(profiles[t].batch_size,
                                         geom.act_bits_per_sample[gi], q, r);
                    if (cp + 2.0 * tx <= cfg.deadline_s) {
                        a.compression = q;
                        break;
                    }
                }
            }
            break;
        }
        default:
            throw std::invalid_argument("baseline_action: not a baseline kind");
    }
    return project_action(std::move(action), cfg, state.gains);
}

EpisodeResult run_episode(const SimConfig& cfg, const PolicySpec& policy,
                          const RunOptions& opts) {
    {
        std::vector<std::string> errs = validate_config(cfg);
        if (!errs.empty()) {
            std::string msg = "run_episode: invalid config:";
            for (const std::string& e : errs) {
                msg += " [" + e + "]";
            }
            throw std::invalid_argument(msg);
        }
    }
    const int n = cfg.n_terminals;
    const bool learning = policy.kind == PolicyKind::kTilp ||
                          policy.kind == PolicyKind::kActorOnly;

    RngStream root(cfg.master_seed, 0);
    Environment env = make_environment(cfg);
    std::vector<double> gains(n);
    for (int i = 0; i < n; ++i) {
        gains[i] = env.profiles[i].large_scale_gain;
    }

    LayeredModel canonical = env.model;
    std::vector<std::vector<DenseLayer>> prefixes(n);

    RngStream fading_rng = root.fork(stream_id::kFading);
    ChannelState channel =
        ChannelState::init(n, cfg.fading_corr, fading_rng);

    NetTwinParams net_params = NetTwinParams::init(n);
    TrainTwinParams train_params;
    train_params.window_capacity = 5 * cfg.agg_interval;
    TaskTwinParams task_params;

    const double gamma0 = evaluate_success(canonical, env.data.eval_inputs,
                                           env.data.eval_labels);
    const double loss0 = evaluate_loss(canonical, env.data.eval_inputs,
                                       env.data.eval_labels);
    task_params.gamma_cached = gamma0;
    // prior success-per-loss-decrease slope; Loop 3 re-estimates it from
    // realized evaluations
    task_params.sensitivity = 0.3;
    double gamma_belief = gamma0;
    double gamma_held = gamma0;
    double loss_prev = loss0;
    double cum_dloss = 0.0;

    RngStream policy_rng = root.fork(stream_id::kPolicy);
    const int n_splits = static_cast<int>(cfg.split_set.size());
    Actor actor = Actor::make(n, n_splits, encoded_state_dim(n), policy_rng);
    Critic critic = Critic::make(encoded_state_dim(n),
                                 encoded_action_dim(n, n_splits), policy_rng);
    AdamState actor_opt;
    AdamState critic_opt;
    SacHyper hyper;
    ReplayBuffer real_buf;
    ReplayBuffer imag_buf;
    const RewardWeights w = RewardWeights::from_config(cfg);

    std::vector<double> prev_b(n, 0.0);
    std::vector<double> grad_norms(n, 0.0);

    bool has_pending = false;
    StateVector pending_state;
    SystemAction pending_action;
    double pending_reward = 0.0;

    EpisodeResult result;
    result.report.gamma_trace.reserve(cfg.n_rounds);
    result.report.reward_trace.reserve(cfg.n_rounds);

    for (int t = 1; t <= cfg.n_rounds; ++t) {
        const char* phase = "phase I";
        try {
            if (t > 1) {
                channel = step_fading(channel, fading_rng);
            }
            StateVector state =
                assemble_state(gains, channel.fading_power, prev_b,
                               loss_prev, grad_norms, gamma_belief);

            if (has_pending && learning) {
                ReplayEntry e;
                e.state = pending_state;
                e.action = pending_action;
                e.reward = pending_reward;
                e.next_state = state;
                e.done = false;
                e.imagined = false;
                real_buf.push(std::move(e));
                has_pending = false;
            }

            TwinSnapshot snap{net_params, train_params, task_params,
                              env.geometry, env.profiles, cfg};

            SystemAction action;
            if (policy.kind == PolicyKind::kTilp) {
                RngStream cem_rng = root.fork(stream_id::kCem)
                                        .fork(static_cast<std::uint64_t>(t));
                CemResult cem =
                    cem_plan(state, snap, actor, critic, cfg, cem_rng);
                action = cem.action;
                for (std::size_t it = 0; it < cem.iters.size(); ++it) {
                    result.cem_diag.push_back(
                        {t, static_cast<int>(it) + 1,
                         cem.iters[it].best_score,
                         cem.iters[it].mean_elite_score,
                         cem.iters[it].pop_std});
                }
            } else if (policy.kind == PolicyKind::kActorOnly) {
                action = actor_mean(actor, state, cfg);
            } else {
                RngStream base_rng =
                    root.fork(stream_id::kBaseline)
                        .fork(static_cast<std::uint64_t>(t));
                action = baseline_action(policy.kind, state, cfg,
                                         env.geometry, env.profiles,
                                         base_rng);
            }
            result.actions_hard_feasible =
                result.actions_hard_feasible &&
                satisfies_hard_constraints(action, cfg);

            PredictedOutcome predicted = predict_round(snap, state, action);

            phase = "phase II";
            RoundPhysics phys =
                compute_round_physics(action, env.profiles, env.geometry,
                                      channel.fading_power, cfg, opts.bias);

            // split-learning round over the terminals that finish their
            // exchange inside the deadline: a straggler past the deadline
            // cannot deliver its activation or receive its gradient, so its
            // update is lost and it keeps running the stale model
            std::vector<int> sched;
            for (int i : action.scheduled_indices()) {
                if (phys.cp_s[i] + 2.0 * phys.tx_s[i] <= cfg.deadline_s) {
                    sched.push_back(i);
                }
            }
            std::vector<Matrix> batches(sched.size());
            std::vector<std::vector<int>> labels(sched.size());
            std::vector<ClientForwardCache> caches(sched.size());
            std::vector<Matrix> payloads(sched.size());
            std::vector<CompressionMask> masks(sched.size());
            double batch_total = 0.0;
            for (int i : sched) {
                batch_total += env.profiles[i].batch_size;
            }
            std::vector<ServerTerminalInput> inputs;
            for (std::size_t s = 0; s < sched.size(); ++s) {
                int i = sched[s];
                const TerminalAction& a = action.per_terminal[i];
                int depth = a.split_layer;
                // deepen from the canonical copy, or shed layers, so the
                // active prefix always matches the commanded split
                while (static_cast<int>(prefixes[i].size()) < depth) {
                    prefixes[i].push_back(
                        canonical.layers[prefixes[i].size()]);
                }
                prefixes[i].resize(depth);

                RngStream batch_rng =
                    root.fork(stream_id::kBatch)
                        .fork(static_cast<std::uint64_t>(t))
                        .fork(static_cast<std::uint64_t>(i));
                const Matrix& shard = env.data.shard_inputs[i];
                const std::vector<int>& shard_labels =
                    env.data.shard_labels[i];
                int k = env.profiles[i].batch_size;
                batches[s] = Matrix(k, shard.cols);
                labels[s].resize(k);
                for (int r = 0; r < k; ++r) {
                    int pick = static_cast<int>(
                        batch_rng.next_below(shard.rows));
                    std::copy(shard.row(pick).begin(), shard.row(pick).end(),
                              batches[s].row(r).begin());
                    labels[s][r] = shard_labels[pick];
                }
                Matrix split_act =
                    client_forward(batches[s], prefixes[i], &caches[s]);
                RngStream mask_rng =
                    root.fork(stream_id::kMask)
                        .fork(static_cast<std::uint64_t>(t))
                        .fork(static_cast<std::uint64_t>(i));
                CompressResult comp =
                    compress(split_act, a.compression, mask_rng);
                payloads[s] = std::move(comp.payload);
                masks[s] = std::move(comp.mask);

                ServerTerminalInput input;
                input.split_layer = a.split_layer;
                input.activation = &payloads[s];
                input.labels = &labels[s];
                input.mask = &masks[s];
                input.compression = a.compression;
                input.weight = env.profiles[i].batch_size / batch_total;
                inputs.push_back(input);
            }
            double loss_t = loss_prev;  // nobody completed: model unchanged
            if (!inputs.empty()) {
                ServerStepResult srv =
                    server_step(canonical, inputs, kLearningRate);
                for (std::size_t s = 0; s < sched.size(); ++s) {
                    int i = sched[s];
                    grad_norms[i] =
                        client_step(caches[s], srv.split_grads[s],
                                    prefixes[i], kLearningRate, true);
                }
                loss_t = srv.loss;
            }
            double dloss = loss_prev - loss_t;
            cum_dloss += dloss;

            double viol = violation(action, phys.cp_s, phys.tx_s,
                                    env.geometry, cfg);

            phase = "phase III";
            RoundOutcome realized;
            realized.latency_s = phys.latency_s;
            realized.energy_j = phys.energy_j;
            realized.cp_s = phys.cp_s;
            realized.tx_s = phys.tx_s;
            realized.dloss = dloss;
            realized.dgamma = 0.0;
            realized.violation = viol;
            realized.volume_bits = phys.volume_bits;

            if (!policy.freeze_loop1) {
                double pre = l1_net_residual(predicted, realized, action);
                calibrate_net(net_params, predicted, realized, action,
                              channel.fading_power);
                TwinSnapshot post_snap{net_params, train_params, task_params,
                                       env.geometry, env.profiles, cfg};
                PredictedOutcome post =
                    predict_round(post_snap, state, action);
                result.cal_trace.push_back(
                    {t, 1, pre, l1_net_residual(post, realized, action)});
            }

            std::vector<std::uint8_t> completers(n, 0);
            for (int i : sched) {
                completers[i] = 1;
            }
            push_train_sample(
                train_params,
                train_features(action, state, env.profiles, completers),
                dloss);

            if (t % cfg.agg_interval == 0) {
                std::vector<double> agg_weights(n);
                for (int i = 0; i < n; ++i) {
                    agg_weights[i] = env.profiles[i].batch_size;
                }
                std::vector<DenseLayer> averaged =
                    fed_average(prefixes, agg_weights);
                for (std::size_t d = 0; d < averaged.size(); ++d) {
                    canonical.layers[d] = averaged[d];
                }
                if (!policy.freeze_loop2 && !train_params.window.empty()) {
                    double pre = train_window_rmse(train_params);
                    calibrate_train(train_params);
                    result.cal_trace.push_back(
                        {t, 2, pre, train_window_rmse(train_params)});
                }
            }

            bool evaluated = false;
            double gamma_t = 0.0;
            if (t % cfg.eval_interval == 0 || t == cfg.n_rounds) {
                gamma_t = evaluate_success(canonical, env.data.eval_inputs,
                                           env.data.eval_labels);
                evaluated = true;
                realized.dgamma = gamma_t - gamma_held;
                if (!policy.freeze_loop3) {
                    double pre = std::abs(gamma_belief - gamma_t);
                    calibrate_task(task_params, gamma_belief, gamma_t,
                                   cum_dloss);
                    result.cal_trace.push_back(
                        {t, 3, pre,
                         std::abs(task_params.gamma_cached - gamma_t)});
                    gamma_belief = task_params.gamma_cached;
                } else {
                    gamma_belief = std::clamp(
                        gamma_belief + predicted.dgamma_hat, 0.0, 1.0);
                }
                gamma_held = gamma_t;
                cum_dloss = 0.0;
            } else {
                gamma_belief = std::clamp(
                    gamma_belief + predicted.dgamma_hat, 0.0, 1.0);
            }

            double r_task_value =
                evaluated ? realized.dgamma : predicted.dgamma_hat;
            if (policy.loss_driven_reward) {
                r_task_value = loss0 != 0.0 ? dloss / loss0 : dloss;
            }
            RewardBreakdown rb = reward(r_task_value, phys.latency_s,
                                        phys.energy_j, viol, w, cfg);
            double eps = epsilon_cal(predicted, realized, action);

            if (learning) {
                if (std::isfinite(rb.r_total)) {
                    pending_state = state;
                    pending_action = action;
                    // clip replay targets so one badly violating round
                    // cannot dominate the critic's regression scale
                    pending_reward = std::clamp(rb.r_total, -5.0, 5.0);
                    has_pending = true;
                }
                RngStream imagine_rng =
                    root.fork(stream_id::kImagine)
                        .fork(static_cast<std::uint64_t>(t));
                std::vector<ReplayEntry> imagined =
                    imagine_rollout(actor, snap, state, cfg.imagine_len, cfg,
                                    w, hyper, imagine_rng);
                for (ReplayEntry& e : imagined) {
                    if (std::isfinite(e.reward)) {
                        e.reward = std::clamp(e.reward, -5.0, 5.0);
                        imag_buf.push(std::move(e));
                    }
                }
                if (static_cast<int>(real_buf.size()) >= kSacMinBuffer &&
                    static_cast<int>(imag_buf.size()) >= kSacMinBuffer) {
                    RngStream sample_rng =
                        root.fork(stream_id::kSacSample)
                            .fork(static_cast<std::uint64_t>(t));
                    std::vector<ReplayEntry> batch = sample_batch(
                        real_buf, imag_buf, kSacBatchSize, sample_rng);
                    RngStream sac_rng =
                        root.fork(stream_id::kSacNoise)
                            .fork(static_cast<std::uint64_t>(t));
                    sac_update(actor, critic, actor_opt, critic_opt, batch,
                               hyper, cfg, sac_rng);
                }
            }

            for (int i = 0; i < n; ++i) {
                prev_b[i] = action.per_terminal[i].bandwidth_hz;
            }
            loss_prev = loss_t;

            double sched_energy = 0.0;
            for (int i : sched) {
                sched_energy += phys.energy_j[i];
            }
            RoundRecord rec;
            rec.round = t;
            rec.gamma_hat = gamma_belief;
            rec.has_gamma_real = evaluated;
            rec.gamma_real = gamma_t;
            rec.loss = loss_t;
            rec.dloss = dloss;
            rec.latency_s = phys.latency_s;
            rec.energy_j = sched_energy;
            rec.volume_bits = phys.volume_bits;
            rec.violation = viol;
            rec.r_task = rb.r_task;
            rec.r_comm = rb.r_comm;
            rec.r_pen = rb.r_pen;
            rec.r_total = rb.r_total;
            rec.eps_cal = eps;
            rec.pred_latency_s = predicted.latency_hat;
            result.rounds.push_back(rec);
            result.scheduled_counts.push_back(action.scheduled_count());
            result.completed_counts.push_back(static_cast<int>(sched.size()));
            if (result.scheduled_per_terminal.empty()) {
                result.scheduled_per_terminal.assign(n, 0);
                result.completed_per_terminal.assign(n, 0);
            }
            for (int i = 0; i < n; ++i) {
                if (action.per_terminal[i].scheduled) {
                    result.scheduled_per_terminal[i]++;
                }
            }
            for (int i : sched) {
                result.completed_per_terminal[i]++;
            }
            double kept = 0.0;
            for (int i : sched) {
                kept += 1.0 - action.per_terminal[i].compression;
            }
            result.kept_fraction.push_back(
                sched.empty() ? 0.0 : kept / static_cast<double>(sched.size()));

            result.report.gamma_trace.push_back(gamma_held);
            result.report.reward_trace.push_back(rb.r_total);
        } catch (const std::exception& ex) {
            throw std::runtime_error("round " + std::to_string(t) + ", " +
                                     phase + ": " + ex.what());
        }
    }

    if (has_pending && learning) {
        ReplayEntry e;
        e.state = pending_state;
        e.action = pending_action;
        e.reward = pending_reward;
        e.next_state = pending_state;
        e.done = true;
        e.imagined = false;
        real_buf.push(std::move(e));
    }

    result.final_loss = loss_prev;
    {
        // sync the canonical model one last time, then measure its loss
        // over the union of the training shards
        std::vector<double> agg_weights(n);
        for (int i = 0; i < n; ++i) {
            agg_weights[i] = env.profiles[i].batch_size;
        }
        std::vector<DenseLayer> averaged = fed_average(prefixes, agg_weights);
        LayeredModel synced = canonical;
        for (std::size_t d = 0; d < averaged.size(); ++d) {
            synced.layers[d] = averaged[d];
        }
        double acc = 0.0;
        int total = 0;
        for (int i = 0; i < n; ++i) {
            int rows = env.data.shard_inputs[i].rows;
            acc += evaluate_loss(synced, env.data.shard_inputs[i],
                                 env.data.shard_labels[i]) *
                   rows;
            total += rows;
        }
        result.final_global_loss = total > 0 ? acc / total : 0.0;
    }
    result.report.final_gamma = gamma_held;
    result.report.rta_60 = rta(result.report.gamma_trace, 0.6);
    result.report.rta_70 = rta(result.report.gamma_trace, 0.7);
    result.report.rta_80 = rta(result.report.gamma_trace, 0.8);
    AggregateMetrics agg = aggregate_metrics(result.rounds);
    result.report.energy_total_j = agg.energy_total_j;
    result.report.latency_avg_s = agg.latency_avg_s;
    result.report.volume_total_bits = agg.volume_total_bits;
    result.report.violation_avg = agg.violation_avg;
    return result;
}

std::string round_csv_text(std::span<const RoundRecord> rounds) {
    std::ostringstream out;
    out << "round,gamma_hat,gamma_real_or_blank,loss,dloss,latency_s,"
           "energy_j,volume_bits,violation,r_task,r_comm,r_pen,r_total,"
           "eps_cal\n";
    for (const RoundRecord& r : rounds) {
        out << r.round << "," << fmt_double(r.gamma_hat) << ",";
        if (r.has_gamma_real) {
            out << fmt_double(r.gamma_real);
        }
        out << "," << fmt_double(r.loss) << "," << fmt_double(r.dloss) << ","
            << fmt_double(r.latency_s) << "," << fmt_double(r.energy_j)
            << "," << fmt_double(r.volume_bits) << ","
            << fmt_double(r.violation) << "," << fmt_double(r.r_task) << ","
            << fmt_double(r.r_comm) << "," << fmt_double(r.r_pen) << ","
            << fmt_double(r.r_total) << "," << fmt_double(r.eps_cal) << "\n";
    }
    return out.str();
}

bool write_round_csv(const std::string& path,
                     std::span<const RoundRecord> rounds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        return false;
    }
    out << round_csv_text(rounds);
    return static_cast<bool>(out);
}

bool write_cem_diag_csv(const std::string& path,
                        std::span<const CemDiagRow> rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        return false;
    }
    out << "round,iter,best_score,mean_elite_score,pop_std\n";
    for (const CemDiagRow& r : rows) {
        out << r.round << "," << r.iter << "," << fmt_double(r.best_score)
            << "," << fmt_double(r.mean_elite_score) << ","
            << fmt_double(r.pop_std) << "\n";
    }
    return static_cast<bool>(out);
}

bool write_cal_trace_csv(const std::string& path,
                         std::span<const CalibrationTraceRow> rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        return false;
    }
    out << "round,loop,residual_pre,residual_post\n";
    for (const CalibrationTraceRow& r : rows) {
        out << r.round << "," << r.loop << "," << fmt_double(r.residual_pre)
            << "," << fmt_double(r.residual_post) << "\n";
    }
    return static_cast<bool>(out);
}

std::string summary_json_text(const MetricsReport& report,
                              std::uint64_t seed,
                              const std::string& policy_name,
                              const std::string& cfg_hash) {
    nlohmann::ordered_json j;
    j["final_gamma"] = report.final_gamma;
    auto rta_field = [](int v) -> nlohmann::ordered_json {
        if (v == kRtaUnreached) {
            return kRtaUnreachedToken;
        }
        return v;
    };
    j["rta_60"] = rta_field(report.rta_60);
    j["rta_70"] = rta_field(report.rta_70);
    j["rta_80"] = rta_field(report.rta_80);
    j["energy_total_j"] = report.energy_total_j;
    j["latency_avg_s"] = report.latency_avg_s;
    j["volume_total_bits"] = report.volume_total_bits;
    j["violation_avg"] = report.violation_avg;
    j["seed"] = seed;
    j["policy"] = policy_name;
    j["config_hash"] = cfg_hash;
    return j.dump(2) + "\n";
}

bool write_summary_json(const std::string& path, const MetricsReport& report,
                        std::uint64_t seed, const std::string& policy_name,
                        const std::string& cfg_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        return false;
    }
    out << summary_json_text(report, seed, policy_name, cfg_hash);
    return static_cast<bool>(out);
}

namespace {

double median_of(std::vector<double> v) {
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    std::size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

std::string run_suite(const std::string& manifest_path,
                      const std::string& out_dir, bool overwrite) {
    namespace fs = std::filesystem;
    std::ifstream mf(manifest_path);
    if (!mf) {
        return "cannot open manifest: " + manifest_path;
    }
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const std::exception& ex) {
        return std::string("manifest parse error: ") + ex.what();
    }
    if (!manifest.is_array()) {
        return "manifest must be a JSON array of run specs";
    }

    fs::path out(out_dir);
    if (fs::exists(out) && !fs::is_empty(out) && !overwrite) {
        return "output directory exists and is not empty (use overwrite): " +
               out_dir;
    }
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) {
        return "cannot create output directory: " + out_dir;
    }

    fs::path manifest_dir = fs::path(manifest_path).parent_path();

    struct RowOut {
        std::string label;
        std::string policy;
        std::vector<MetricsReport> reports;
    };
    std::vector<RowOut> table;

    for (const nlohmann::json& spec : manifest) {
        if (!spec.contains("config") || !spec.contains("policy") ||
            !spec.contains("seeds")) {
            return "each run spec needs config, policy and seeds";
        }
        fs::path cfg_path(spec["config"].get<std::string>());
        if (cfg_path.is_relative()) {
            cfg_path = manifest_dir / cfg_path;
        }
        ConfigLoadResult loaded = load_config_file(cfg_path.string());
        if (!loaded.ok()) {
            std::string msg = "config errors in " + cfg_path.string() + ":";
            for (const std::string& e : loaded.errors) {
                msg += " [" + e + "]";
            }
            return msg;
        }
        std::optional<PolicyKind> kind =
            parse_policy_kind(spec["policy"].get<std::string>());
        if (!kind) {
            return "unknown policy: " + spec["policy"].get<std::string>();
        }
        PolicySpec pol;
        pol.kind = *kind;
        pol.freeze_loop1 = spec.value("freeze_loop1", false);
        pol.freeze_loop2 = spec.value("freeze_loop2", false);
        pol.freeze_loop3 = spec.value("freeze_loop3", false);
        pol.loss_driven_reward = spec.value("loss_driven_reward", false);
        std::string label =
            spec.value("label", cfg_path.stem().string());

        RowOut row;
        row.label = label;
        row.policy = policy_kind_name(pol.kind);
        for (const nlohmann::json& seed_json : spec["seeds"]) {
            SimConfig cfg = loaded.config;
            cfg.master_seed = seed_json.get<std::uint64_t>();
            EpisodeResult res = run_episode(cfg, pol);
            std::string stem = label + "_" + row.policy + "_seed" +
                               std::to_string(cfg.master_seed);
            write_round_csv((out / (stem + ".csv")).string(), res.rounds);
            write_summary_json((out / (stem + ".json")).string(), res.report,
                               cfg.master_seed, row.policy,
                               config_hash(cfg));
            if (!res.cem_diag.empty()) {
                write_cem_diag_csv((out / (stem + "_cem.csv")).string(),
                                   res.cem_diag);
            }
            if (!res.cal_trace.empty()) {
                write_cal_trace_csv((out / (stem + "_cal.csv")).string(),
                                    res.cal_trace);
            }
            row.reports.push_back(res.report);
        }
        table.push_back(std::move(row));
    }

    std::ofstream summary(out / "combined_summary.csv", std::ios::binary);
    summary << "label,policy,runs,final_gamma_median,rta_60_median,"
               "rta_70_median,rta_80_median,energy_total_j_median,"
               "latency_avg_s_median,volume_total_bits_median,"
               "violation_avg_median\n";
    auto rta_median = [](const std::vector<MetricsReport>& reports,
                         int MetricsReport::*field) -> std::string {
        std::vector<double> vals;
        for (const MetricsReport& r : reports) {
            int v = r.*field;
            vals.push_back(v == kRtaUnreached
                               ? std::numeric_limits<double>::infinity()
                               : v);
        }
        double med = median_of(vals);
        if (!std::isfinite(med)) {
            return kRtaUnreachedToken;
        }
        return fmt_double(med);
    };
    for (const RowOut& row : table) {
        std::vector<double> gammas;
        std::vector<double> energies;
        std::vector<double> latencies;
        std::vector<double> volumes;
        std::vector<double> violations;
        for (const MetricsReport& r : row.reports) {
            gammas.push_back(r.final_gamma);
            energies.push_back(r.energy_total_j);
            latencies.push_back(r.latency_avg_s);
            volumes.push_back(r.volume_total_bits);
            violations.push_back(r.violation_avg);
        }
        summary << row.label << "," << row.policy << ","
                << row.reports.size() << "," << fmt_double(median_of(gammas))
                << "," << rta_median(row.reports, &MetricsReport::rta_60)
                << "," << rta_median(row.reports, &MetricsReport::rta_70)
                << "," << rta_median(row.reports, &MetricsReport::rta_80)
                << "," << fmt_double(median_of(energies)) << ","
                << fmt_double(median_of(latencies)) << ","
                << fmt_double(median_of(volumes)) << ","
                << fmt_double(median_of(violations)) << "\n";
    }
    if (!summary) {
        return "failed writing combined summary";
    }
    return "";
}

}  // namespace tilp
