#pragma once

#include <random>

#include "dsgate/tensor.hpp"

namespace dsgate::testing {

inline Tensor4 random_tensor(Dims dims, std::mt19937_64& rng, double lo = 0.1, double hi = 2.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor4 t(dims, 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

// Random tensor whose per-channel top-two entries are separated by at least
// `gap`, so central differences never cross a max tie.
inline Tensor4 random_tensor_maxgap(Dims dims, std::mt19937_64& rng, double gap = 1e-2) {
    for (;;) {
        Tensor4 t = random_tensor(dims, rng);
        bool ok = true;
        for (std::int64_t b = 0; b < dims.b && ok; ++b)
            for (std::int64_t c = 0; c < dims.c && ok; ++c) {
                double top = -1e300, second = -1e300;
                for (std::int64_t h = 0; h < dims.h; ++h)
                    for (std::int64_t w = 0; w < dims.w; ++w) {
                        const double v = t.at(b, c, h, w);
                        if (v > top) {
                            second = top;
                            top = v;
                        } else if (v > second) {
                            second = v;
                        }
                    }
                if (top - second < gap) ok = false;
            }
        if (ok) return t;
    }
}

}  // namespace dsgate::testing
