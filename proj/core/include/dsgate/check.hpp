#pragma once

#include <string>
#include <vector>

#include "dsgate/grad_check.hpp"

namespace dsgate {

struct OpCheckLine {
    std::string name;
    GradCheckReport report;  // worst case over the trials
};

// Finite-difference sweep over every registered op (op_trials random inputs
// each, drawn from [0.1, 2]) plus full gated blocks across block_configs
// random configurations in eval mode.
std::vector<OpCheckLine> gradcheck_battery(std::uint64_t seed, int op_trials, int block_configs,
                                           double step, double tolerance);

}  // namespace dsgate
