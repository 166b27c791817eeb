#pragma once

#include <functional>
#include <vector>

#include "dsgate/autodiff.hpp"

namespace dsgate {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    std::size_t checked = 0;  // number of coordinates compared
};

// Builds a scalar from leaf variables created over `point`; must be pure.
using ScalarFn = std::function<Var(const std::vector<Var>& params)>;

// Compares the analytical gradient of f at `point` against central
// differences (f(p+h) - f(p-h)) / 2h with h = step * (1 + |p|), coordinate by
// coordinate. rel_err = |a - n| / max(|a|, |n|, 1e-8). Throws EvalError if f
// evaluates to a non-finite value.
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor4>& point, double step,
                           double tolerance);

}  // namespace dsgate
