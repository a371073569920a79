// Command-line front end: run one episode, run a manifest suite, or
// validate a config file.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tilp/config.hpp"
#include "tilp/harness.hpp"

namespace {

int cmd_check(const std::string& config_path) {
    tilp::ConfigLoadResult loaded = tilp::load_config_file(config_path);
    for (const std::string& e : loaded.errors) {
        std::cerr << "load error: " << e << "\n";
    }
    if (!loaded.ok()) {
        return 1;
    }
    std::vector<std::string> errs = tilp::validate_config(loaded.config);
    for (const std::string& e : errs) {
        std::cerr << "invalid: " << e << "\n";
    }
    if (!errs.empty()) {
        return 1;
    }
    std::cout << "ok (hash " << tilp::config_hash(loaded.config) << ")\n";
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& policy_name,
            std::uint64_t seed, const std::string& out_dir,
            const tilp::PolicySpec& flags) {
    tilp::ConfigLoadResult loaded = tilp::load_config_file(config_path);
    if (!loaded.ok()) {
        for (const std::string& e : loaded.errors) {
            std::cerr << "load error: " << e << "\n";
        }
        return 1;
    }
    auto kind = tilp::parse_policy_kind(policy_name);
    if (!kind) {
        std::cerr << "unknown policy: " << policy_name << "\n";
        return 1;
    }
    tilp::SimConfig cfg = loaded.config;
    cfg.master_seed = seed;
    tilp::PolicySpec policy = flags;
    policy.kind = *kind;

    std::filesystem::create_directories(out_dir);
    tilp::EpisodeResult res;
    try {
        res = tilp::run_episode(cfg, policy);
    } catch (const std::exception& ex) {
        std::cerr << "run failed: " << ex.what() << "\n";
        return 1;
    }
    namespace fs = std::filesystem;
    fs::path out(out_dir);
    bool ok = tilp::write_round_csv((out / "rounds.csv").string(), res.rounds);
    ok = tilp::write_summary_json((out / "summary.json").string(), res.report,
                                  seed, policy_name,
                                  tilp::config_hash(cfg)) &&
         ok;
    if (!res.cem_diag.empty()) {
        ok = tilp::write_cem_diag_csv((out / "cem_diag.csv").string(),
                                      res.cem_diag) &&
             ok;
    }
    if (!res.cal_trace.empty()) {
        ok = tilp::write_cal_trace_csv((out / "cal_trace.csv").string(),
                                       res.cal_trace) &&
             ok;
    }
    if (!ok) {
        std::cerr << "failed writing results to " << out_dir << "\n";
        return 1;
    }
    std::cout << "final_gamma=" << res.report.final_gamma
              << " violation_avg=" << res.report.violation_avg
              << " latency_avg_s=" << res.report.latency_avg_s << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tilp: twin-in-the-loop resource planner for federated "
                 "split learning"};
    app.require_subcommand(1);

    std::string config_path;
    std::string policy_name = "tilp";
    std::string out_dir = "out";
    std::string manifest_path;
    std::uint64_t seed = 1;
    bool overwrite = false;
    tilp::PolicySpec flags;

    CLI::App* run = app.add_subcommand("run", "run one episode");
    run->add_option("--config", config_path, "config file")->required();
    run->add_option("--policy", policy_name,
                    "tilp|actor_only|random_feasible|static_equal|"
                    "greedy_channel");
    run->add_option("--seed", seed, "master seed");
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_flag("--freeze-loop1", flags.freeze_loop1,
                  "disable network calibration");
    run->add_flag("--freeze-loop2", flags.freeze_loop2,
                  "disable training calibration");
    run->add_flag("--freeze-loop3", flags.freeze_loop3,
                  "disable task calibration");
    run->add_flag("--loss-driven-reward", flags.loss_driven_reward,
                  "replace the task reward with the loss decrement");

    CLI::App* suite = app.add_subcommand("suite", "run a manifest of runs");
    suite->add_option("--manifest", manifest_path, "JSON manifest")
        ->required();
    suite->add_option("--out", out_dir, "output directory")->required();
    suite->add_flag("--overwrite", overwrite,
                    "allow reuse of a non-empty output directory");

    CLI::App* check = app.add_subcommand("check", "validate a config file");
    check->add_option("--config", config_path, "config file")->required();

    CLI11_PARSE(app, argc, argv);

    if (app.got_subcommand(check)) {
        return cmd_check(config_path);
    }
    if (app.got_subcommand(run)) {
        return cmd_run(config_path, policy_name, seed, out_dir, flags);
    }
    std::string err = tilp::run_suite(manifest_path, out_dir, overwrite);
    if (!err.empty()) {
        std::cerr << err << "\n";
        return 1;
    }
    std::cout << "suite complete: " << out_dir << "\n";
    return 0;
}
