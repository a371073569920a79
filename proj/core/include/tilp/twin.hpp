#pragma once

#include <array>
#include <deque>
#include <span>
#include <vector>

#include "tilp/action.hpp"
#include "tilp/config.hpp"
#include "tilp/mdp.hpp"
#include "tilp/netphys.hpp"

namespace tilp {

/// Network sub-twin parameters: per-terminal multiplicative corrections on
/// the rate and energy models plus the twin's belief of each terminal's
/// instantaneous fading power. Corrections start at one (trust the closed
/// forms) and are pulled toward the realized/predicted ratio each round.
struct NetTwinParams {
    std::vector<double> rate_corr;
    std::vector<double> energy_corr;
    std::vector<double> fading_power_est;

    static NetTwinParams init(int n_terminals);
};

inline constexpr int kTrainFeatureDim = 6;
using TrainFeatures = std::array<double, kTrainFeatureDim>;

struct TrainSample {
    TrainFeatures features{};
    double dloss = 0.0;
};

/// Training sub-twin: a ridge regressor from action/state features to the
/// one-round loss decrease, refit over a sliding window of realized rounds.
struct TrainTwinParams {
    std::array<double, kTrainFeatureDim> weights{};
    std::deque<TrainSample> window;
    int window_capacity = 25;
};

/// Task sub-twin: the last calibrated success anchor plus a sensitivity
/// linking predicted loss decrease to predicted success gain, which gives
/// the planner a task signal between expensive evaluations.
struct TaskTwinParams {
    double gamma_cached = 0.0;
    double sensitivity = 0.0;
};

/// Frozen copies of everything one planning call reads. Rollouts never
/// mutate a snapshot, so any number of them may share it concurrently.
struct TwinSnapshot {
    NetTwinParams net;
    TrainTwinParams train;
    TaskTwinParams task;
    PayloadGeometry geometry;
    std::vector<TerminalProfile> profiles;
    SimConfig cfg;
};

/// Twin-predicted observables for one candidate round. tx/latency may carry
/// the +inf infeasibility sentinel; everything else stays finite.
struct PredictedOutcome {
    std::vector<double> rate_hat;
    std::vector<double> cp_hat;
    std::vector<double> tx_hat;
    std::vector<double> energy_hat;
    double latency_hat = 0.0;
    double dloss_hat = 0.0;
    double dgamma_hat = 0.0;
    double violation_hat = 0.0;
};

/// Feature map consumed by the training sub-twin: bias, participation-
/// weighted kept fraction, mean client gradient norm, current loss, mean
/// split depth over the participants, and the participating fraction. A
/// terminal participates when it is scheduled and finishes inside the
/// deadline; the twin derives the mask from its own delay predictions, the
/// calibration window stores the realized one.
TrainFeatures train_features(const SystemAction& action,
                             const StateVector& state,
                             std::span<const TerminalProfile> profiles,
                             std::span<const std::uint8_t> participating);

double train_twin_predict(const TrainTwinParams& params,
                          const TrainFeatures& f);

/// Predict one round under the frozen twin: corrected rates/delays/energies
/// through the physical closed forms, regressor loss decrease, a success
/// gain clamped so the running estimate stays a probability, and the
/// violation aggregate on the predicted quantities.
PredictedOutcome predict_round(const TwinSnapshot& snap,
                               const StateVector& state,
                               const SystemAction& action);

/// Loop-1 update: damped multiplicative pull of the per-terminal rate and
/// energy corrections toward the realized/predicted ratios, plus adoption
/// of the realized fading powers as the new channel belief. Ratios with a
/// zero denominator are skipped.
void calibrate_net(NetTwinParams& params, const PredictedOutcome& predicted,
                   const RoundOutcome& realized, const SystemAction& action,
                   std::span<const double> realized_fading_power);

void push_train_sample(TrainTwinParams& params, const TrainFeatures& f,
                       double realized_dloss);

/// Loop-2 update: ridge regression (penalty 1e-3) of realized loss
/// decreases on the window features.
void calibrate_train(TrainTwinParams& params);

/// Loop-3 update: re-anchor the cached success rate and pull sensitivity
/// halfway toward the observed gain per unit of accumulated loss decrease.
/// A vanishing cumulative decrease leaves sensitivity untouched.
void calibrate_task(TaskTwinParams& params, double gamma_hat,
                    double gamma_realized, double cum_dloss);

/// l1-aggregated calibration discrepancy between a prediction and the
/// realized outcome: latency, per-scheduled-terminal energies and delays,
/// success increment and violation, each in its natural unit.
double epsilon_cal(const PredictedOutcome& predicted,
                   const RoundOutcome& realized, const SystemAction& action);

/// Belief-state transition after one predicted round: fading belief held,
/// loss belief decremented, success belief accumulated, gradient-norm
/// beliefs decayed, previous-bandwidth block set from the action.
StateVector twin_transition(const TwinSnapshot& snap, StateVector state,
                            const SystemAction& action,
                            const PredictedOutcome& pred);

struct TwinRolloutResult {
    std::vector<double> rewards;
    std::vector<PredictedOutcome> steps;
    StateVector terminal_state;
};

/// Roll a K-step action sequence inside the frozen twin. The fading belief
/// is held constant, the loss belief decreases by each predicted decrement,
/// the success belief accumulates the predicted gains, and gradient-norm
/// beliefs decay geometrically. Deterministic in (snapshot, state, actions).
TwinRolloutResult twin_rollout(const TwinSnapshot& snap, StateVector state,
                               std::span<const SystemAction> actions,
                               const RewardWeights& w);

/// One calibration event for the diagnostics CSV.
struct CalibrationTraceRow {
    int round = 0;
    int loop = 0;
    double residual_pre = 0.0;
    double residual_post = 0.0;
};

}  // namespace tilp
