#pragma once

#include <span>
#include <vector>

#include "tilp/action.hpp"
#include "tilp/config.hpp"
#include "tilp/netphys.hpp"

namespace tilp {

/// The planner's observation: a network block (gains, fading powers,
/// previous bandwidths), a training block (loss, client gradient norms) and
/// a task block (latest success estimate).
struct StateVector {
    std::vector<double> gains;
    std::vector<double> fading_power;
    std::vector<double> prev_bandwidth_hz;
    double loss = 0.0;
    std::vector<double> grad_norms;
    double gamma_hat = 0.0;

    int n_terminals() const { return static_cast<int>(gains.size()); }
};

StateVector assemble_state(std::span<const double> gains,
                           std::span<const double> fading_power,
                           std::span<const double> prev_bandwidth_hz,
                           double loss, std::span<const double> grad_norms,
                           double gamma_hat);

/// Reward prices plus the energy normalizer, which is always derived from
/// the config as n_terminals * power_max * deadline.
struct RewardWeights {
    double w_delta = 0.5;
    double w_e = 0.5;
    double w_pen = 1.0;
    double e_max = 0.0;

    static RewardWeights from_config(const SimConfig& cfg);
};

struct RewardBreakdown {
    double r_task = 0.0;
    double r_comm = 0.0;
    double r_pen = 0.0;
    double r_total = 0.0;
    double violation = 0.0;
};

/// Aggregate softened-constraint violation: per-scheduled-terminal deadline
/// and memory hinges plus the total-bandwidth hinge. Zero iff every
/// softened constraint holds; an infinite transmission delay propagates to
/// an infinite violation.
double violation(const SystemAction& action, std::span<const double> cp_s,
                 std::span<const double> tx_s, const PayloadGeometry& geom,
                 const SimConfig& cfg);

/// Per-round reward: task improvement plus latency/energy headroom minus
/// the weighted violation. Infinite latency collapses r_comm and r_total to
/// -inf so such actions rank below every feasible one.
RewardBreakdown reward(double dgamma, double latency_s,
                       std::span<const double> energies_j,
                       double violation_value, const RewardWeights& w,
                       const SimConfig& cfg);

/// Sum of gamma^k * rewards[k], k zero-based.
double discounted_return(std::span<const double> rewards, double gamma);

/// Coordinate-wise Lipschitz constant of the reward in the twin-observable
/// quantities: max{w_delta/deadline, w_e/e_max, 1, w_pen}.
double lipschitz_bound(const RewardWeights& w, const SimConfig& cfg);

}  // namespace tilp
