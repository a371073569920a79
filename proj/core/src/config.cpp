#include "tilp/config.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tilp {
namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) {
        return "";
    }
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(s);
    while (std::getline(ss, cur, ',')) {
        out.push_back(trim(cur));
    }
    return out;
}

bool parse_double(const std::string& s, double& out) {
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end != s.c_str() && *end == '\0';
}

bool parse_int(const std::string& s, int& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

SimConfig SimConfig::desk_default() {
    return SimConfig{};
}

SimConfig SimConfig::full_scale_default() {
    SimConfig cfg;
    cfg.n_terminals = 50;
    cfg.n_rounds = 1000;
    cfg.memory_budget_bytes = 8.0e9;
    cfg.agg_interval = 10;
    cfg.eval_interval = 50;
    cfg.horizon = 16;
    cfg.cem_population = 200;
    cfg.cem_elites = 25;
    cfg.cem_iters = 5;
    cfg.imagine_len = 10;
    cfg.w_delta = 0.5;
    cfg.w_e = 0.5;
    return cfg;
}

std::vector<std::string> validate_config(const SimConfig& cfg) {
    std::vector<std::string> errs;
    auto require = [&errs](bool ok, const std::string& msg) {
        if (!ok) {
            errs.push_back(msg);
        }
    };
    require(cfg.n_terminals >= 1, "n_terminals: must be >= 1");
    require(cfg.n_rounds >= 1, "n_rounds: must be >= 1");
    require(cfg.deadline_s > 0.0, "deadline_s: must be > 0");
    require(cfg.bandwidth_budget_hz > 0.0, "bandwidth_budget_hz: must be > 0");
    require(cfg.power_max_w > 0.0, "power_max_w: must be > 0");
    require(cfg.compression_max >= 0.0 && cfg.compression_max <= 1.0,
            "compression_max: must lie in [0, 1]");
    require(cfg.memory_budget_bytes > 0.0, "memory_budget_bytes: must be > 0");
    require(cfg.noise_psd_w_per_hz > 0.0, "noise_psd_w_per_hz: must be > 0");
    if (cfg.split_set.empty()) {
        errs.push_back("split_set: must be non-empty");
    } else {
        for (std::size_t i = 1; i < cfg.split_set.size(); ++i) {
            if (cfg.split_set[i] <= cfg.split_set[i - 1]) {
                errs.push_back("split_set: must be strictly increasing");
                break;
            }
        }
        if (cfg.split_set.front() < 1) {
            errs.push_back("split_set: entries must be >= 1");
        }
    }
    require(cfg.agg_interval >= 1, "agg_interval: must be >= 1");
    require(cfg.eval_interval >= 1, "eval_interval: must be >= 1");
    require(cfg.horizon >= 1, "horizon: must be >= 1");
    require(cfg.cem_population >= 1, "cem_population: must be >= 1");
    require(cfg.cem_elites >= 1 && cfg.cem_elites <= cfg.cem_population,
            "cem_elites: must lie in [1, cem_population]");
    require(cfg.cem_iters >= 1, "cem_iters: must be >= 1");
    require(cfg.imagine_len >= 1, "imagine_len: must be >= 1");
    require(cfg.discount > 0.0 && cfg.discount < 1.0,
            "discount: must lie in the open interval (0, 1)");
    require(cfg.w_delta > 0.0, "reward_weights: w_delta must be > 0");
    require(cfg.w_e > 0.0, "reward_weights: w_e must be > 0");
    require(cfg.w_pen > 0.0, "reward_weights: w_pen must be > 0");
    require(cfg.fading_corr >= 0.0 && cfg.fading_corr <= 1.0,
            "fading_corr: must lie in [0, 1]");
    return errs;
}

ConfigLoadResult parse_config(const std::string& text) {
    ConfigLoadResult res;
    SimConfig& cfg = res.config;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            res.errors.push_back("line " + std::to_string(lineno) +
                                 ": expected key=value");
            continue;
        }
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        bool ok = true;
        if (key == "n_terminals") {
            ok = parse_int(val, cfg.n_terminals);
        } else if (key == "n_rounds") {
            ok = parse_int(val, cfg.n_rounds);
        } else if (key == "deadline_s") {
            ok = parse_double(val, cfg.deadline_s);
        } else if (key == "bandwidth_budget_hz") {
            ok = parse_double(val, cfg.bandwidth_budget_hz);
        } else if (key == "power_max_w") {
            ok = parse_double(val, cfg.power_max_w);
        } else if (key == "compression_max") {
            ok = parse_double(val, cfg.compression_max);
        } else if (key == "memory_budget_bytes") {
            ok = parse_double(val, cfg.memory_budget_bytes);
        } else if (key == "noise_psd_w_per_hz") {
            ok = parse_double(val, cfg.noise_psd_w_per_hz);
        } else if (key == "split_set") {
            cfg.split_set.clear();
            for (const std::string& tok : split_commas(val)) {
                int v = 0;
                if (!parse_int(tok, v)) {
                    ok = false;
                    break;
                }
                cfg.split_set.push_back(v);
            }
        } else if (key == "agg_interval") {
            ok = parse_int(val, cfg.agg_interval);
        } else if (key == "eval_interval") {
            ok = parse_int(val, cfg.eval_interval);
        } else if (key == "horizon") {
            ok = parse_int(val, cfg.horizon);
        } else if (key == "cem_population") {
            ok = parse_int(val, cfg.cem_population);
        } else if (key == "cem_elites") {
            ok = parse_int(val, cfg.cem_elites);
        } else if (key == "cem_iters") {
            ok = parse_int(val, cfg.cem_iters);
        } else if (key == "imagine_len") {
            ok = parse_int(val, cfg.imagine_len);
        } else if (key == "discount") {
            ok = parse_double(val, cfg.discount);
        } else if (key == "reward_weights") {
            std::vector<std::string> toks = split_commas(val);
            ok = toks.size() == 3 && parse_double(toks[0], cfg.w_delta) &&
                 parse_double(toks[1], cfg.w_e) &&
                 parse_double(toks[2], cfg.w_pen);
        } else if (key == "fading_corr") {
            ok = parse_double(val, cfg.fading_corr);
        } else if (key == "master_seed") {
            ok = parse_u64(val, cfg.master_seed);
        } else {
            res.errors.push_back("line " + std::to_string(lineno) +
                                 ": unknown key '" + key + "'");
            continue;
        }
        if (!ok) {
            res.errors.push_back("line " + std::to_string(lineno) +
                                 ": bad value for '" + key + "'");
        }
    }
    return res;
}

ConfigLoadResult load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        ConfigLoadResult res;
        res.errors.push_back("cannot open config file: " + path);
        return res;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string save_config(const SimConfig& cfg) {
    std::ostringstream out;
    out << "n_terminals=" << cfg.n_terminals << "\n";
    out << "n_rounds=" << cfg.n_rounds << "\n";
    out << "deadline_s=" << format_double(cfg.deadline_s) << "\n";
    out << "bandwidth_budget_hz=" << format_double(cfg.bandwidth_budget_hz)
        << "\n";
    out << "power_max_w=" << format_double(cfg.power_max_w) << "\n";
    out << "compression_max=" << format_double(cfg.compression_max) << "\n";
    out << "memory_budget_bytes=" << format_double(cfg.memory_budget_bytes)
        << "\n";
    out << "noise_psd_w_per_hz=" << format_double(cfg.noise_psd_w_per_hz)
        << "\n";
    out << "split_set=";
    for (std::size_t i = 0; i < cfg.split_set.size(); ++i) {
        if (i) {
            out << ",";
        }
        out << cfg.split_set[i];
    }
    out << "\n";
    out << "agg_interval=" << cfg.agg_interval << "\n";
    out << "eval_interval=" << cfg.eval_interval << "\n";
    out << "horizon=" << cfg.horizon << "\n";
    out << "cem_population=" << cfg.cem_population << "\n";
    out << "cem_elites=" << cfg.cem_elites << "\n";
    out << "cem_iters=" << cfg.cem_iters << "\n";
    out << "imagine_len=" << cfg.imagine_len << "\n";
    out << "discount=" << format_double(cfg.discount) << "\n";
    out << "reward_weights=" << format_double(cfg.w_delta) << ","
        << format_double(cfg.w_e) << "," << format_double(cfg.w_pen) << "\n";
    out << "fading_corr=" << format_double(cfg.fading_corr) << "\n";
    out << "master_seed=" << cfg.master_seed << "\n";
    return out.str();
}

bool write_config_file(const SimConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        return false;
    }
    out << save_config(cfg);
    return static_cast<bool>(out);
}

std::string config_hash(const SimConfig& cfg) {
    std::string text = save_config(cfg);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

}  // namespace tilp
