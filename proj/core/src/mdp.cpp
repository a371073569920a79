#include "tilp/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tilp {

StateVector assemble_state(std::span<const double> gains,
                           std::span<const double> fading_power,
                           std::span<const double> prev_bandwidth_hz,
                           double loss, std::span<const double> grad_norms,
                           double gamma_hat) {
    if (gains.size() != fading_power.size() ||
        gains.size() != prev_bandwidth_hz.size() ||
        gains.size() != grad_norms.size()) {
        throw std::invalid_argument("assemble_state: per-terminal blocks disagree");
    }
    StateVector s;
    s.gains.assign(gains.begin(), gains.end());
    s.fading_power.assign(fading_power.begin(), fading_power.end());
    s.prev_bandwidth_hz.assign(prev_bandwidth_hz.begin(),
                               prev_bandwidth_hz.end());
    s.loss = loss;
    s.grad_norms.assign(grad_norms.begin(), grad_norms.end());
    s.gamma_hat = std::clamp(gamma_hat, 0.0, 1.0);
    return s;
}

RewardWeights RewardWeights::from_config(const SimConfig& cfg) {
    RewardWeights w;
    w.w_delta = cfg.w_delta;
    w.w_e = cfg.w_e;
    w.w_pen = cfg.w_pen;
    w.e_max = cfg.n_terminals * cfg.power_max_w * cfg.deadline_s;
    return w;
}

double violation(const SystemAction& action, std::span<const double> cp_s,
                 std::span<const double> tx_s, const PayloadGeometry& geom,
                 const SimConfig& cfg) {
    double v = 0.0;
    double bandwidth_sum = 0.0;
    for (std::size_t i = 0; i < action.per_terminal.size(); ++i) {
        const TerminalAction& a = action.per_terminal[i];
        if (!a.scheduled) {
            continue;
        }
        bandwidth_sum += a.bandwidth_hz;
        v += std::max(0.0, cp_s[i] + 2.0 * tx_s[i] - cfg.deadline_s);
        double mem = geom.mem_bytes[geom.index_of(a.split_layer)];
        v += std::max(0.0, mem - cfg.memory_budget_bytes);
    }
    v += std::max(0.0, bandwidth_sum - cfg.bandwidth_budget_hz);
    return v;
}

RewardBreakdown reward(double dgamma, double latency_s,
                       std::span<const double> energies_j,
                       double violation_value, const RewardWeights& w,
                       const SimConfig& cfg) {
    RewardBreakdown r;
    r.r_task = dgamma;
    r.violation = violation_value;
    r.r_pen = w.w_pen * violation_value;
    if (!std::isfinite(latency_s)) {
        r.r_comm = -std::numeric_limits<double>::infinity();
        r.r_total = -std::numeric_limits<double>::infinity();
        return r;
    }
    double energy_sum = 0.0;
    for (double e : energies_j) {
        energy_sum += e;
    }
    r.r_comm = w.w_delta * (1.0 - latency_s / cfg.deadline_s) +
               w.w_e * (1.0 - energy_sum / w.e_max);
    r.r_total = r.r_task + r.r_comm - r.r_pen;
    return r;
}

double discounted_return(std::span<const double> rewards, double gamma) {
    double acc = 0.0;
    double g = 1.0;
    for (double r : rewards) {
        acc += g * r;
        g *= gamma;
    }
    return acc;
}

double lipschitz_bound(const RewardWeights& w, const SimConfig& cfg) {
    return std::max({w.w_delta / cfg.deadline_s, w.w_e / w.e_max, 1.0,
                     w.w_pen});
}

}  // namespace tilp
