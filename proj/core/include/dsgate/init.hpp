#pragma once

#include <random>

#include "dsgate/tensor.hpp"

namespace dsgate {

// Uniform init in [-k, k] with k = 1/sqrt(fan_in), drawn in row-major order.
Tensor4 uniform_fan_in(Dims dims, std::int64_t fan_in, std::mt19937_64& rng);

}  // namespace dsgate
