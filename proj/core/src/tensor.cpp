#include "dsgate/tensor.hpp"

#include <cmath>
#include <sstream>

namespace dsgate {

std::string Dims::str() const {
    std::ostringstream os;
    os << "(" << b << "," << c << "," << h << "," << w << ")";
    return os.str();
}

namespace {

void check_extents(const Dims& d) {
    if (d.b < 1 || d.c < 1 || d.h < 1 || d.w < 1) {
        throw ShapeError("tensor extents must all be >= 1, got " + d.str());
    }
}

}  // namespace

Tensor4::Tensor4(Dims dims, double fill) : dims_(dims) {
    check_extents(dims_);
    data_.assign(dims_.count(), fill);
}

Tensor4::Tensor4(Dims dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
    check_extents(dims_);
    if (data_.size() != dims_.count()) {
        throw ShapeError("data length " + std::to_string(data_.size()) +
                         " does not match extents " + dims_.str());
    }
}

bool Tensor4::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor4::require_finite(const std::string& what) const {
    if (!all_finite()) {
        throw EvalError("non-finite value in " + what);
    }
}

bool identical(const Tensor4& a, const Tensor4& b) {
    if (!(a.dims() == b.dims())) return false;
    return a.data() == b.data();
}

double max_abs_diff(const Tensor4& a, const Tensor4& b) {
    require_same_dims(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::fabs(a[i] - b[i]));
    }
    return m;
}

void require_same_dims(const Tensor4& a, const Tensor4& b, const char* op) {
    if (!(a.dims() == b.dims())) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.dims().str() + " vs " +
                         b.dims().str());
    }
}

}  // namespace dsgate
