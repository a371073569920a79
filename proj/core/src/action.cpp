#include "tilp/action.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace tilp {

int SystemAction::scheduled_count() const {
    int n = 0;
    for (const TerminalAction& a : per_terminal) {
        n += a.scheduled ? 1 : 0;
    }
    return n;
}

std::vector<int> SystemAction::scheduled_indices() const {
    std::vector<int> idx;
    for (std::size_t i = 0; i < per_terminal.size(); ++i) {
        if (per_terminal[i].scheduled) {
            idx.push_back(static_cast<int>(i));
        }
    }
    return idx;
}

int nearest_split(int layer, std::span<const int> split_set) {
    int best = split_set.front();
    int best_dist = std::abs(layer - best);
    for (int s : split_set) {
        int d = std::abs(layer - s);
        if (d < best_dist) {
            best = s;
            best_dist = d;
        }
    }
    return best;
}

SystemAction project_action(SystemAction raw, const SimConfig& cfg,
                            std::span<const double> gains) {
    for (TerminalAction& a : raw.per_terminal) {
        a.power_w = std::clamp(a.power_w, 0.0, cfg.power_max_w);
        a.bandwidth_hz = std::clamp(a.bandwidth_hz, 0.0, cfg.bandwidth_budget_hz);
        a.compression = std::clamp(a.compression, 0.0, cfg.compression_max);
        a.split_layer = nearest_split(a.split_layer, cfg.split_set);
    }
    // repair the schedule before zeroing radios so the forced terminal
    // keeps its clipped bandwidth and power
    if (raw.scheduled_count() == 0 && !raw.per_terminal.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < raw.per_terminal.size(); ++i) {
            if (i < gains.size() && best < gains.size() &&
                gains[i] > gains[best]) {
                best = i;
            }
        }
        raw.per_terminal[best].scheduled = true;
    }
    for (TerminalAction& a : raw.per_terminal) {
        if (!a.scheduled) {
            a.bandwidth_hz = 0.0;
            a.power_w = 0.0;
        }
    }
    return raw;
}

bool satisfies_hard_constraints(const SystemAction& action,
                                const SimConfig& cfg) {
    if (action.scheduled_count() < 1) {
        return false;
    }
    for (const TerminalAction& a : action.per_terminal) {
        if (a.power_w < 0.0 || a.power_w > cfg.power_max_w) {
            return false;
        }
        if (a.bandwidth_hz < 0.0 || a.bandwidth_hz > cfg.bandwidth_budget_hz) {
            return false;
        }
        if (a.compression < 0.0 || a.compression > cfg.compression_max) {
            return false;
        }
        if (std::find(cfg.split_set.begin(), cfg.split_set.end(),
                      a.split_layer) == cfg.split_set.end()) {
            return false;
        }
        if (!a.scheduled && (a.bandwidth_hz != 0.0 || a.power_w != 0.0)) {
            return false;
        }
    }
    return true;
}

}  // namespace tilp
