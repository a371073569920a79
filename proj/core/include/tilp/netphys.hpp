#pragma once

#include <complex>
#include <span>
#include <vector>

#include "tilp/action.hpp"
#include "tilp/config.hpp"
#include "tilp/rng.hpp"

namespace tilp {

/// Small-scale fading state of every terminal. fading_power caches
/// |fading|^2 element-wise.
struct ChannelState {
    std::vector<std::complex<double>> fading;
    std::vector<double> fading_power;
    double corr = 0.9;

    static ChannelState init(int n_terminals, double corr, RngStream& rng);
};

/// AR(1) evolution H' = corr * H + sqrt(1 - corr^2) * eps with eps a
/// standard complex normal. The stationary second moment E|H|^2 = 1 is
/// preserved for any corr in [0, 1].
ChannelState step_fading(const ChannelState& ch, RngStream& rng);

/// Shannon rate in bits/s over an orthogonal band: b * log2(1 + g*|H|^2*p /
/// (n0*b)). Zero bandwidth or power gives zero rate.
double rate(double b_hz, double p_w, double gain, double fading_power,
            double n0);

/// One-way payload delay batch*act_bits*(1-q)/rate. An empty payload takes
/// zero time; a positive payload over a dead channel returns +inf.
double tx_delay(int batch, double act_bits, double q, double rate_bps);

/// On-device forward/backward time batch*macs/(ops_per_cycle*cpu_hz).
double cp_delay(int batch, double macs, double ops_per_cycle, double cpu_hz);

struct DelayPair {
    double cp = 0.0;
    double tx = 0.0;
};

/// Straggler-dominated round time: max over scheduled terminals of
/// cp + 2*tx (uplink plus downlink). The list must be non-empty.
double round_latency(std::span<const DelayPair> delays);

/// kappa*cpu_hz^2*batch*macs + p*tx: local computation energy plus radiated
/// communication energy.
double terminal_energy(double kappa, double cpu_hz, int batch, double macs,
                       double p_w, double tx_s);

/// Per-split-layer payload and workload tables, aligned with the admissible
/// split set.
struct PayloadGeometry {
    std::vector<int> split_layers;            // the admissible set
    std::vector<double> act_bits_per_sample;  // activation payload per sample
    std::vector<double> macs_per_sample;      // client-side work per sample
    std::vector<double> mem_bytes;            // client-side memory footprint

    int index_of(int split_layer) const;
};

struct MemoryCheck {
    bool ok = true;
    double overshoot_bytes = 0.0;
};

MemoryCheck memory_ok(const PayloadGeometry& geom, int split_layer,
                      double budget_bytes);

/// Optional multiplicative disturbances applied to the physical round, used
/// to emulate unmodeled protocol overheads the twin has to calibrate away.
struct PhysBias {
    double latency_scale = 1.0;
    double energy_scale = 1.0;
};

/// Proportional grant scaling the base station applies when the scheduled
/// bandwidth requests oversubscribe the budget (1 when within budget).
double bandwidth_admission_scale(const SystemAction& action,
                                 const SimConfig& cfg);

/// Everything the physical layer realizes in one round for a given action.
/// Per-terminal vectors carry zeros at unscheduled indices.
struct RoundPhysics {
    std::vector<double> rate_bps;
    std::vector<double> cp_s;
    std::vector<double> tx_s;
    std::vector<double> energy_j;
    double latency_s = 0.0;
    double volume_bits = 0.0;  // uplink payload actually transmitted
};

RoundPhysics compute_round_physics(const SystemAction& action,
                                   std::span<const TerminalProfile> profiles,
                                   const PayloadGeometry& geom,
                                   std::span<const double> fading_power,
                                   const SimConfig& cfg,
                                   const PhysBias& bias = {});

/// Realized observables of one executed round, the calibration and reward
/// counterpart of a twin prediction.
struct RoundOutcome {
    double latency_s = 0.0;
    std::vector<double> energy_j;
    std::vector<double> cp_s;
    std::vector<double> tx_s;
    double dloss = 0.0;
    double dgamma = 0.0;
    double violation = 0.0;
    double volume_bits = 0.0;
};

}  // namespace tilp
