#pragma once

#include <span>
#include <vector>

#include "tilp/config.hpp"

namespace tilp {

/// One terminal's five control decisions for a round.
struct TerminalAction {
    double bandwidth_hz = 0.0;
    double power_w = 0.0;
    int split_layer = 1;       // member of SimConfig::split_set
    double compression = 0.0;  // fraction of the payload discarded
    bool scheduled = false;
};

/// The full per-round decision: one TerminalAction per terminal.
struct SystemAction {
    std::vector<TerminalAction> per_terminal;

    int scheduled_count() const;
    std::vector<int> scheduled_indices() const;
};

/// Nearest member of the admissible split set; ties break to the smaller
/// value.
int nearest_split(int layer, std::span<const int> split_set);

/// Repair an arbitrary action into the hard-feasible set: clip power,
/// bandwidth and compression to their boxes, project splits onto the split
/// set, zero the radio of unscheduled terminals, and force exactly one
/// terminal on (the one with the best large-scale gain, lowest index on
/// ties) when no terminal is scheduled. The total-bandwidth budget is
/// deliberately left unenforced; it is penalized downstream instead.
SystemAction project_action(SystemAction raw, const SimConfig& cfg,
                            std::span<const double> gains);

/// True iff the action satisfies every hard constraint project_action
/// guarantees (power/bandwidth/compression boxes, split membership,
/// unscheduled radios off, at least one terminal scheduled).
bool satisfies_hard_constraints(const SystemAction& action,
                                const SimConfig& cfg);

}  // namespace tilp
