#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tilp/config.hpp"
#include "tilp/fsl.hpp"
#include "tilp/mdp.hpp"
#include "tilp/netphys.hpp"
#include "tilp/planner.hpp"
#include "tilp/twin.hpp"

namespace tilp {

enum class PolicyKind {
    kTilp,
    kActorOnly,
    kRandomFeasible,
    kStaticEqual,
    kGreedyChannel,
};

std::string policy_kind_name(PolicyKind kind);
std::optional<PolicyKind> parse_policy_kind(const std::string& name);

/// Which policy runs an episode, plus the ablation switches. The freeze
/// flags disable one calibration loop each while the sub-twins keep
/// predicting; loss_driven_reward swaps the task term of the reward for the
/// normalized training-loss decrement.
struct PolicySpec {
    PolicyKind kind = PolicyKind::kTilp;
    bool freeze_loop1 = false;
    bool freeze_loop2 = false;
    bool freeze_loop3 = false;
    bool loss_driven_reward = false;
};

inline constexpr int kRtaUnreached = -1;
inline constexpr const char* kRtaUnreachedToken = "--";

struct MetricsReport {
    double final_gamma = 0.0;
    int rta_60 = kRtaUnreached;
    int rta_70 = kRtaUnreached;
    int rta_80 = kRtaUnreached;
    double energy_total_j = 0.0;
    double latency_avg_s = 0.0;
    double volume_total_bits = 0.0;
    double violation_avg = 0.0;
    std::vector<double> gamma_trace;   // per round, last evaluation held
    std::vector<double> reward_trace;  // per round, realized total reward
};

struct RoundRecord {
    int round = 0;
    double gamma_hat = 0.0;
    bool has_gamma_real = false;
    double gamma_real = 0.0;
    double loss = 0.0;
    double dloss = 0.0;
    double latency_s = 0.0;
    double energy_j = 0.0;
    double volume_bits = 0.0;
    double violation = 0.0;
    double r_task = 0.0;
    double r_comm = 0.0;
    double r_pen = 0.0;
    double r_total = 0.0;
    double eps_cal = 0.0;
    double pred_latency_s = 0.0;
};

struct CemDiagRow {
    int round = 0;
    int iter = 0;
    double best_score = 0.0;
    double mean_elite_score = 0.0;
    double pop_std = 0.0;
};

struct EpisodeResult {
    MetricsReport report;
    std::vector<RoundRecord> rounds;
    std::vector<CemDiagRow> cem_diag;
    std::vector<CalibrationTraceRow> cal_trace;
    double final_loss = 0.0;         // last round's mini-batch training loss
    double final_global_loss = 0.0;  // synced model's loss over all shards
    bool actions_hard_feasible = true;  // every executed action passed C4-C8
    // per-round scheduling telemetry
    std::vector<int> scheduled_counts;
    std::vector<int> completed_counts;  // finished inside the deadline
    std::vector<double> kept_fraction;  // mean 1-q over completers
    // per-terminal totals over the episode
    std::vector<int> scheduled_per_terminal;
    std::vector<int> completed_per_terminal;
};

struct RunOptions {
    PhysBias bias;
};

/// Everything derived deterministically from the config before round one.
struct Environment {
    std::vector<TerminalProfile> profiles;
    ShardedData data;
    PayloadGeometry geometry;
    LayeredModel model;
};

std::vector<TerminalProfile> make_profiles(const SimConfig& cfg,
                                           RngStream rng);
Environment make_environment(const SimConfig& cfg);

/// Run one full training episode under the given policy: plan (or apply a
/// baseline rule), execute the physical round and the split-learning
/// update, then calibrate the sub-twins at their time scales. Identical
/// (config, policy, options) inputs reproduce the result bit for bit.
EpisodeResult run_episode(const SimConfig& cfg, const PolicySpec& policy,
                          const RunOptions& opts = {});

/// First 1-based round whose held success value reaches theta, or
/// kRtaUnreached.
int rta(std::span<const double> gamma_trace, double theta);

struct AggregateMetrics {
    double energy_total_j = 0.0;
    double latency_avg_s = 0.0;
    double volume_total_bits = 0.0;
    double violation_avg = 0.0;
};

AggregateMetrics aggregate_metrics(std::span<const RoundRecord> rounds);

/// The non-learning comparison policies.
SystemAction baseline_action(PolicyKind kind, const StateVector& state,
                             const SimConfig& cfg,
                             const PayloadGeometry& geom,
                             std::span<const TerminalProfile> profiles,
                             RngStream& rng);

std::string round_csv_text(std::span<const RoundRecord> rounds);
bool write_round_csv(const std::string& path,
                     std::span<const RoundRecord> rounds);
bool write_cem_diag_csv(const std::string& path,
                        std::span<const CemDiagRow> rows);
bool write_cal_trace_csv(const std::string& path,
                         std::span<const CalibrationTraceRow> rows);

std::string summary_json_text(const MetricsReport& report,
                              std::uint64_t seed,
                              const std::string& policy_name,
                              const std::string& cfg_hash);
bool write_summary_json(const std::string& path, const MetricsReport& report,
                        std::uint64_t seed, const std::string& policy_name,
                        const std::string& cfg_hash);

/// Execute every (config, policy, seed) combination of a JSON manifest and
/// write per-run CSV/JSON files plus a combined median summary table.
/// Refuses to reuse a non-empty output directory unless overwrite is set.
/// Returns an empty string on success, otherwise the error message.
std::string run_suite(const std::string& manifest_path,
                      const std::string& out_dir, bool overwrite);

}  // namespace tilp
