#include "dsgate/init.hpp"

#include <cmath>

namespace dsgate {

Tensor4 uniform_fan_in(Dims dims, std::int64_t fan_in, std::mt19937_64& rng) {
    const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-k, k);
    Tensor4 t(dims, 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

}  // namespace dsgate
