#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tilp {

/// Run-wide simulation parameters. Field names double as the keys of the
/// key=value config file format, one key per line, '#' starts a comment.
struct SimConfig {
    int n_terminals = 8;
    int n_rounds = 200;
    double deadline_s = 5.0;
    double bandwidth_budget_hz = 1.0e8;
    double power_max_w = 0.2;
    double compression_max = 0.9;
    double memory_budget_bytes = 1.2e9;
    double noise_psd_w_per_hz = 3.9810717055349565e-21;  // -174 dBm/Hz
    std::vector<int> split_set = {1, 2, 3, 4, 5};
    int agg_interval = 5;    // federated-averaging period, rounds
    int eval_interval = 20;  // held-out evaluation period, rounds
    int horizon = 4;         // planning look-ahead, rounds
    int cem_population = 64;
    int cem_elites = 8;
    int cem_iters = 3;
    int imagine_len = 5;  // imagined rollout length, steps
    double discount = 0.95;
    // headroom prices scaled so the comm terms match the per-round task
    // gain in expectation at desk scale
    double w_delta = 1e-4;
    double w_e = 1e-4;
    double w_pen = 0.02;  // constraint-violation price
    double fading_corr = 0.9;
    std::uint64_t master_seed = 1;

    /// Small profile sized so a full run finishes in seconds to minutes.
    static SimConfig desk_default();
    /// Full-scale profile (50 terminals, 1000 rounds).
    static SimConfig full_scale_default();
};

/// Per-terminal hardware and data characteristics, fixed over a run.
struct TerminalProfile {
    double distance_m = 50.0;
    double large_scale_gain = 1.0e-9;  // path-loss gain, <= 1
    double ops_per_cycle = 5.0e-5;     // effective work units per cycle
    double cpu_hz = 1.5e9;
    double energy_coeff = 1.0e-24;  // switched-capacitance-like coefficient
    int batch_size = 16;
    int dataset_size = 512;
};

/// Empty result means the config is valid; otherwise one message per
/// violated field, each message starting with the field name.
std::vector<std::string> validate_config(const SimConfig& cfg);

struct ConfigLoadResult {
    SimConfig config;
    std::vector<std::string> errors;  // empty on success
    bool ok() const { return errors.empty(); }
};

/// Parse the key=value text format. Unknown keys are load errors; keys not
/// present keep their default values.
ConfigLoadResult parse_config(const std::string& text);
ConfigLoadResult load_config_file(const std::string& path);

/// Canonical serialization; parse_config(save_config(c)) reproduces c
/// exactly, including every floating-point bit.
std::string save_config(const SimConfig& cfg);
bool write_config_file(const SimConfig& cfg, const std::string& path);

/// FNV-1a over the canonical serialization, hex-encoded.
std::string config_hash(const SimConfig& cfg);

}  // namespace tilp
