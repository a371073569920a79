#include "tilp/twin.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tilp {
namespace {

constexpr double kCalibrationDamping = 0.3;
constexpr double kCorrectionMin = 0.1;
constexpr double kCorrectionMax = 10.0;
constexpr double kTaskDamping = 0.5;
constexpr double kDlossEps = 1e-6;
constexpr double kRidgePenalty = 1e-3;
constexpr double kGradNormDecay = 0.98;

double damped_ratio(double corr, double realized, double predicted) {
    if (predicted <= 0.0 || realized <= 0.0) {
        return corr;  // no usable ratio this round
    }
    double next = corr * std::pow(realized / predicted, kCalibrationDamping);
    return std::clamp(next, kCorrectionMin, kCorrectionMax);
}

// solve (A + penalty*I) x = b for a small symmetric system, in place
std::array<double, kTrainFeatureDim> solve_ridge(
    std::array<std::array<double, kTrainFeatureDim>, kTrainFeatureDim> a,
    std::array<double, kTrainFeatureDim> b) {
    constexpr int n = kTrainFeatureDim;
    for (int i = 0; i < n; ++i) {
        a[i][i] += kRidgePenalty;
    }
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) {
                pivot = r;
            }
        }
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        double diag = a[col][col];
        for (int r = col + 1; r < n; ++r) {
            double f = a[r][col] / diag;
            for (int c = col; c < n; ++c) {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    std::array<double, n> x{};
    for (int r = n - 1; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < n; ++c) {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    return x;
}

}  // namespace

NetTwinParams NetTwinParams::init(int n_terminals) {
    NetTwinParams p;
    p.rate_corr.assign(n_terminals, 1.0);
    p.energy_corr.assign(n_terminals, 1.0);
    p.fading_power_est.assign(n_terminals, 1.0);
    return p;
}

TrainFeatures train_features(const SystemAction& action,
                             const StateVector& state,
                             std::span<const TerminalProfile> profiles,
                             std::span<const std::uint8_t> participating) {
    int n = static_cast<int>(action.per_terminal.size());
    auto takes_part = [&](int i) {
        return action.per_terminal[i].scheduled &&
               (i >= static_cast<int>(participating.size()) ||
                participating[i] != 0);
    };
    double batch_total = 0.0;
    for (int i = 0; i < n; ++i) {
        if (takes_part(i)) {
            batch_total += profiles[i].batch_size;
        }
    }
    double kept = 0.0;
    double depth_sum = 0.0;
    int count = 0;
    for (int i = 0; i < n; ++i) {
        if (!takes_part(i)) {
            continue;
        }
        const TerminalAction& a = action.per_terminal[i];
        double omega = batch_total > 0.0
                           ? profiles[i].batch_size / batch_total
                           : 0.0;
        kept += omega * (1.0 - a.compression);
        depth_sum += a.split_layer;
        ++count;
    }
    double norm_mean = 0.0;
    for (double g : state.grad_norms) {
        norm_mean += g;
    }
    norm_mean /= std::max<std::size_t>(1, state.grad_norms.size());

    TrainFeatures f{};
    f[0] = 1.0;
    f[1] = kept;
    f[2] = norm_mean;
    f[3] = state.loss;
    f[4] = count > 0 ? depth_sum / count : 0.0;
    f[5] = static_cast<double>(count) / std::max(1, n);
    return f;
}

double train_twin_predict(const TrainTwinParams& params,
                          const TrainFeatures& f) {
    double acc = 0.0;
    for (int i = 0; i < kTrainFeatureDim; ++i) {
        acc += params.weights[i] * f[i];
    }
    return acc;
}

PredictedOutcome predict_round(const TwinSnapshot& snap,
                               const StateVector& state,
                               const SystemAction& action) {
    const SimConfig& cfg = snap.cfg;
    int n = static_cast<int>(action.per_terminal.size());
    PredictedOutcome out;
    out.rate_hat.assign(n, 0.0);
    out.cp_hat.assign(n, 0.0);
    out.tx_hat.assign(n, 0.0);
    out.energy_hat.assign(n, 0.0);

    // the twin carries the base station's own admission rule
    double admit = bandwidth_admission_scale(action, cfg);

    std::vector<DelayPair> scheduled;
    for (int i = 0; i < n; ++i) {
        const TerminalAction& a = action.per_terminal[i];
        if (!a.scheduled) {
            continue;
        }
        const TerminalProfile& prof = snap.profiles[i];
        int gi = snap.geometry.index_of(a.split_layer);
        out.rate_hat[i] =
            snap.net.rate_corr[i] *
            rate(admit * a.bandwidth_hz, a.power_w, prof.large_scale_gain,
                 snap.net.fading_power_est[i], cfg.noise_psd_w_per_hz);
        out.tx_hat[i] =
            tx_delay(prof.batch_size, snap.geometry.act_bits_per_sample[gi],
                     a.compression, out.rate_hat[i]);
        out.cp_hat[i] = cp_delay(prof.batch_size,
                                 snap.geometry.macs_per_sample[gi],
                                 prof.ops_per_cycle, prof.cpu_hz);
        out.energy_hat[i] =
            snap.net.energy_corr[i] *
            terminal_energy(prof.energy_coeff, prof.cpu_hz, prof.batch_size,
                            snap.geometry.macs_per_sample[gi], a.power_w,
                            out.tx_hat[i]);
        scheduled.push_back({out.cp_hat[i], out.tx_hat[i]});
    }
    out.latency_hat = round_latency(scheduled);
    // participation belief: terminals the twin expects to finish in time
    std::vector<std::uint8_t> expected(n, 0);
    for (int i = 0; i < n; ++i) {
        expected[i] = action.per_terminal[i].scheduled &&
                              out.cp_hat[i] + 2.0 * out.tx_hat[i] <=
                                  cfg.deadline_s
                          ? 1
                          : 0;
    }
    out.dloss_hat = train_twin_predict(
        snap.train, train_features(action, state, snap.profiles, expected));
    double gain = snap.task.sensitivity * std::max(0.0, out.dloss_hat);
    out.dgamma_hat =
        std::clamp(gain, 0.0, std::max(0.0, 1.0 - state.gamma_hat));
    out.violation_hat =
        violation(action, out.cp_hat, out.tx_hat, snap.geometry, cfg);
    return out;
}

void calibrate_net(NetTwinParams& params, const PredictedOutcome& predicted,
                   const RoundOutcome& realized, const SystemAction& action,
                   std::span<const double> realized_fading_power) {
    for (std::size_t i = 0; i < action.per_terminal.size(); ++i) {
        if (!action.per_terminal[i].scheduled) {
            continue;
        }
        if (std::isfinite(realized.tx_s[i]) &&
            std::isfinite(predicted.tx_hat[i])) {
            // higher realized delay means the rate model was optimistic
            params.rate_corr[i] = damped_ratio(
                params.rate_corr[i], predicted.tx_hat[i], realized.tx_s[i]);
        }
        if (std::isfinite(realized.energy_j[i]) &&
            std::isfinite(predicted.energy_hat[i])) {
            params.energy_corr[i] =
                damped_ratio(params.energy_corr[i], realized.energy_j[i],
                             predicted.energy_hat[i]);
        }
    }
    for (std::size_t i = 0; i < params.fading_power_est.size() &&
                            i < realized_fading_power.size();
         ++i) {
        params.fading_power_est[i] = realized_fading_power[i];
    }
}

void push_train_sample(TrainTwinParams& params, const TrainFeatures& f,
                       double realized_dloss) {
    params.window.push_back({f, realized_dloss});
    while (static_cast<int>(params.window.size()) > params.window_capacity) {
        params.window.pop_front();
    }
}

void calibrate_train(TrainTwinParams& params) {
    if (params.window.empty()) {
        return;
    }
    std::array<std::array<double, kTrainFeatureDim>, kTrainFeatureDim> xtx{};
    std::array<double, kTrainFeatureDim> xty{};
    for (const TrainSample& s : params.window) {
        for (int i = 0; i < kTrainFeatureDim; ++i) {
            xty[i] += s.features[i] * s.dloss;
            for (int j = 0; j < kTrainFeatureDim; ++j) {
                xtx[i][j] += s.features[i] * s.features[j];
            }
        }
    }
    params.weights = solve_ridge(xtx, xty);
    // expected progress is monotone in kept payload and participation;
    // short noisy windows must not flip these signs
    params.weights[1] = std::max(0.0, params.weights[1]);
    params.weights[5] = std::max(0.0, params.weights[5]);
}

void calibrate_task(TaskTwinParams& params, double /*gamma_hat*/,
                    double gamma_realized, double cum_dloss) {
    double prev_anchor = params.gamma_cached;
    params.gamma_cached = std::clamp(gamma_realized, 0.0, 1.0);
    if (cum_dloss <= kDlossEps) {
        return;  // no attributable training progress; keep sensitivity
    }
    double target = (gamma_realized - prev_anchor) / cum_dloss;
    double next = params.sensitivity +
                  kTaskDamping * (target - params.sensitivity);
    params.sensitivity = std::max(0.0, next);
}

namespace {

// absolute difference that treats two equal infinities as agreement
double abs_diff(double a, double b) {
    if (a == b) {
        return 0.0;
    }
    return std::abs(a - b);
}

}  // namespace

double epsilon_cal(const PredictedOutcome& predicted,
                   const RoundOutcome& realized, const SystemAction& action) {
    double eps = abs_diff(predicted.latency_hat, realized.latency_s);
    for (std::size_t i = 0; i < action.per_terminal.size(); ++i) {
        if (!action.per_terminal[i].scheduled) {
            continue;
        }
        eps += abs_diff(predicted.energy_hat[i], realized.energy_j[i]);
        eps += abs_diff(predicted.cp_hat[i], realized.cp_s[i]);
        eps += abs_diff(predicted.tx_hat[i], realized.tx_s[i]);
    }
    eps += abs_diff(predicted.dgamma_hat, realized.dgamma);
    eps += abs_diff(predicted.violation_hat, realized.violation);
    return eps;
}

StateVector twin_transition(const TwinSnapshot& snap, StateVector state,
                            const SystemAction& action,
                            const PredictedOutcome& pred) {
    // the twin has no future-fading oracle, so the channel belief is held;
    // learning beliefs integrate the predicted decrements
    state.loss -= pred.dloss_hat;
    state.gamma_hat = std::clamp(state.gamma_hat + pred.dgamma_hat, 0.0, 1.0);
    for (double& g : state.grad_norms) {
        g *= kGradNormDecay;
    }
    for (std::size_t i = 0; i < state.prev_bandwidth_hz.size(); ++i) {
        state.prev_bandwidth_hz[i] = action.per_terminal[i].bandwidth_hz;
    }
    for (std::size_t i = 0; i < state.fading_power.size(); ++i) {
        state.fading_power[i] = snap.net.fading_power_est[i];
    }
    return state;
}

TwinRolloutResult twin_rollout(const TwinSnapshot& snap, StateVector state,
                               std::span<const SystemAction> actions,
                               const RewardWeights& w) {
    TwinRolloutResult res;
    for (const SystemAction& action : actions) {
        PredictedOutcome pred = predict_round(snap, state, action);
        RewardBreakdown rb =
            reward(pred.dgamma_hat, pred.latency_hat, pred.energy_hat,
                   pred.violation_hat, w, snap.cfg);
        res.rewards.push_back(rb.r_total);
        state = twin_transition(snap, std::move(state), action, pred);
        res.steps.push_back(std::move(pred));
    }
    res.terminal_state = std::move(state);
    return res;
}

}  // namespace tilp
