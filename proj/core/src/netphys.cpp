#include "tilp/netphys.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tilp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

ChannelState ChannelState::init(int n_terminals, double corr, RngStream& rng) {
    ChannelState ch;
    ch.corr = corr;
    ch.fading.resize(n_terminals);
    ch.fading_power.resize(n_terminals);
    for (int n = 0; n < n_terminals; ++n) {
        ch.fading[n] = rng.next_complex_normal();
        ch.fading_power[n] = std::norm(ch.fading[n]);
    }
    return ch;
}

ChannelState step_fading(const ChannelState& ch, RngStream& rng) {
    ChannelState out = ch;
    double rho = ch.corr;
    double mix = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    for (std::size_t n = 0; n < out.fading.size(); ++n) {
        std::complex<double> eps = rng.next_complex_normal();
        out.fading[n] = rho * ch.fading[n] + mix * eps;
        out.fading_power[n] = std::norm(out.fading[n]);
    }
    return out;
}

double rate(double b_hz, double p_w, double gain, double fading_power,
            double n0) {
    if (b_hz <= 0.0 || p_w <= 0.0) {
        return 0.0;
    }
    double snr = gain * fading_power * p_w / (n0 * b_hz);
    return b_hz * std::log2(1.0 + snr);
}

double tx_delay(int batch, double act_bits, double q, double rate_bps) {
    double payload = static_cast<double>(batch) * act_bits * (1.0 - q);
    if (payload <= 0.0) {
        return 0.0;
    }
    if (rate_bps <= 0.0) {
        return kInf;
    }
    return payload / rate_bps;
}

double cp_delay(int batch, double macs, double ops_per_cycle, double cpu_hz) {
    return static_cast<double>(batch) * macs / (ops_per_cycle * cpu_hz);
}

double round_latency(std::span<const DelayPair> delays) {
    if (delays.empty()) {
        throw std::invalid_argument(
            "round_latency: empty scheduled set (schedule repair missed)");
    }
    double worst = -kInf;
    for (const DelayPair& d : delays) {
        worst = std::max(worst, d.cp + 2.0 * d.tx);
    }
    return worst;
}

double terminal_energy(double kappa, double cpu_hz, int batch, double macs,
                       double p_w, double tx_s) {
    if (!std::isfinite(tx_s)) {
        return kInf;
    }
    return kappa * cpu_hz * cpu_hz * static_cast<double>(batch) * macs +
           p_w * tx_s;
}

int PayloadGeometry::index_of(int split_layer) const {
    for (std::size_t i = 0; i < split_layers.size(); ++i) {
        if (split_layers[i] == split_layer) {
            return static_cast<int>(i);
        }
    }
    throw std::invalid_argument("PayloadGeometry: split layer " +
                                std::to_string(split_layer) +
                                " not in the admissible set");
}

MemoryCheck memory_ok(const PayloadGeometry& geom, int split_layer,
                      double budget_bytes) {
    double need = geom.mem_bytes[geom.index_of(split_layer)];
    MemoryCheck res;
    res.ok = need <= budget_bytes;
    res.overshoot_bytes = std::max(0.0, need - budget_bytes);
    return res;
}

double bandwidth_admission_scale(const SystemAction& action,
                                 const SimConfig& cfg) {
    double requested = 0.0;
    for (const TerminalAction& a : action.per_terminal) {
        if (a.scheduled) {
            requested += a.bandwidth_hz;
        }
    }
    if (requested <= cfg.bandwidth_budget_hz || requested <= 0.0) {
        return 1.0;
    }
    return cfg.bandwidth_budget_hz / requested;
}

RoundPhysics compute_round_physics(const SystemAction& action,
                                   std::span<const TerminalProfile> profiles,
                                   const PayloadGeometry& geom,
                                   std::span<const double> fading_power,
                                   const SimConfig& cfg,
                                   const PhysBias& bias) {
    std::size_t n = action.per_terminal.size();
    RoundPhysics phys;
    phys.rate_bps.assign(n, 0.0);
    phys.cp_s.assign(n, 0.0);
    phys.tx_s.assign(n, 0.0);
    phys.energy_j.assign(n, 0.0);

    // the spectrum is orthogonally shared: grants beyond the budget are
    // scaled back proportionally at admission
    double admit = bandwidth_admission_scale(action, cfg);

    std::vector<DelayPair> scheduled;
    for (std::size_t i = 0; i < n; ++i) {
        const TerminalAction& a = action.per_terminal[i];
        if (!a.scheduled) {
            continue;
        }
        const TerminalProfile& prof = profiles[i];
        int gi = geom.index_of(a.split_layer);
        phys.rate_bps[i] = rate(admit * a.bandwidth_hz, a.power_w,
                                prof.large_scale_gain, fading_power[i],
                                cfg.noise_psd_w_per_hz);
        phys.tx_s[i] = bias.latency_scale *
                       tx_delay(prof.batch_size, geom.act_bits_per_sample[gi],
                                a.compression, phys.rate_bps[i]);
        phys.cp_s[i] = cp_delay(prof.batch_size, geom.macs_per_sample[gi],
                                prof.ops_per_cycle, prof.cpu_hz);
        phys.energy_j[i] =
            bias.energy_scale *
            terminal_energy(prof.energy_coeff, prof.cpu_hz, prof.batch_size,
                            geom.macs_per_sample[gi], a.power_w, phys.tx_s[i]);
        phys.volume_bits += static_cast<double>(prof.batch_size) *
                            geom.act_bits_per_sample[gi] *
                            (1.0 - a.compression);
        scheduled.push_back({phys.cp_s[i], phys.tx_s[i]});
    }
    phys.latency_s = round_latency(scheduled);
    return phys;
}

}  // namespace tilp
