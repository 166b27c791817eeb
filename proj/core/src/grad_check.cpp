#include "dsgate/grad_check.hpp"

#include <cmath>

namespace dsgate {

namespace {

double eval_scalar(const ScalarFn& f, const std::vector<Tensor4>& point) {
    std::vector<Var> leaves;
    leaves.reserve(point.size());
    for (const Tensor4& t : point) leaves.push_back(Var::constant(t));
    const Var out = f(leaves);
    if (out.value().size() != 1) {
        throw ShapeError("grad_check: f must return a scalar, got " + out.value().dims().str());
    }
    const double v = out.value()[0];
    if (!std::isfinite(v)) throw EvalError("grad_check: f evaluated to a non-finite value");
    return v;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor4>& point, double step,
                           double tolerance) {
    if (!(step > 0.0)) throw DomainError("grad_check: step must be > 0");

    // Analytical pass.
    std::vector<Var> leaves;
    leaves.reserve(point.size());
    for (const Tensor4& t : point) leaves.push_back(Var::leaf(t));
    const Var out = f(leaves);
    if (out.value().size() != 1) {
        throw ShapeError("grad_check: f must return a scalar, got " + out.value().dims().str());
    }
    if (!std::isfinite(out.value()[0])) {
        throw EvalError("grad_check: f evaluated to a non-finite value");
    }
    out.backward();

    GradCheckReport report;
    std::vector<Tensor4> probe = point;
    for (std::size_t pi = 0; pi < point.size(); ++pi) {
        const Tensor4& analytic = leaves[pi].grad();
        for (std::size_t i = 0; i < point[pi].size(); ++i) {
            const double p = point[pi][i];
            const double h = step * (1.0 + std::fabs(p));
            probe[pi].data()[i] = p + h;
            const double fp = eval_scalar(f, probe);
            probe[pi].data()[i] = p - h;
            const double fm = eval_scalar(f, probe);
            probe[pi].data()[i] = p;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[i];
            const double rel =
                std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            report.max_rel_err = std::max(report.max_rel_err, rel);
            ++report.checked;
        }
    }
    report.pass = report.max_rel_err <= tolerance;
    return report;
}

}  // namespace dsgate
