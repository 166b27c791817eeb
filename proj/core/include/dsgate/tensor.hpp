#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsgate/errors.hpp"

namespace dsgate {

// Extents of a rank-4 tensor in (batch, channel, height, width) order.
struct Dims {
    std::int64_t b = 1;
    std::int64_t c = 1;
    std::int64_t h = 1;
    std::int64_t w = 1;

    std::size_t count() const {
        return static_cast<std::size_t>(b) * static_cast<std::size_t>(c) *
               static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }
    bool operator==(const Dims&) const = default;
    std::string str() const;
};

// Dense rank-4 tensor of 64-bit reals, row-major with the width index fastest.
// Extents are always >= 1 and the payload length always equals b*c*h*w.
class Tensor4 {
public:
    Tensor4() : dims_{1, 1, 1, 1}, data_(1, 0.0) {}
    explicit Tensor4(Dims dims, double fill = 0.0);
    Tensor4(Dims dims, std::vector<double> data);

    const Dims& dims() const { return dims_; }
    std::size_t size() const { return data_.size(); }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    double& at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[index(b, c, h, w)];
    }
    double at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[index(b, c, h, w)];
    }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return static_cast<std::size_t>(((b * dims_.c + c) * dims_.h + h) * dims_.w + w);
    }

    void fill(double v) { data_.assign(data_.size(), v); }
    bool all_finite() const;

    // Throws EvalError naming `what` if any entry is non-finite.
    void require_finite(const std::string& what) const;

private:
    Dims dims_;
    std::vector<double> data_;
};

// Exact elementwise equality (bitwise for finite doubles).
bool identical(const Tensor4& a, const Tensor4& b);

// max |a - b| over all entries; shapes must match.
double max_abs_diff(const Tensor4& a, const Tensor4& b);

void require_same_dims(const Tensor4& a, const Tensor4& b, const char* op);

}  // namespace dsgate
