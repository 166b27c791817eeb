#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dsgate/tensor.hpp"

namespace dsgate {

// Synergy response mu*d + mu + d (same surface as (d+1)(mu+1) - 1) of the
// channel mean mu and peak-to-mean difference d. Monotone increasing in both
// arguments for mu > -1, d >= 0.
double dso_apply(double mu, double d);

// Analytical partials (d+1, mu+1); exact, the map is bilinear.
struct DsoGrad {
    double dmu;
    double dd;
};
DsoGrad dso_apply_grad(double mu, double d);

// Per-(batch, channel) statistics of a feature map.
struct ChannelStats {
    Tensor4 mu;   // spatial mean, (B,C,1,1)
    Tensor4 m;    // spatial max, (B,C,1,1)
    Tensor4 d;    // m - mu, always >= 0
    Tensor4 phi;  // synergy response of (mu, d)
};

ChannelStats channel_stats(const Tensor4& x);

enum class Region { small, large, mixed, background };

const char* region_name(Region r);

// Stand-ins for the soft boundaries of the decision space: a relative band of
// width band_ratio around d = mu, split by the response threshold.
struct RegionConfig {
    double band_ratio = 0.2;     // in (0,1)
    double phi_threshold = 1.0;

    void validate() const;
};

// Inside the band |d-mu| <= band_ratio*(d+|mu|): mixed when phi exceeds the
// threshold, otherwise background. Above the d=mu boundary: small (sparse,
// locally salient). Below: large (broad, uniform).
Region classify_point(double mu, double d, const RegionConfig& cfg = {});

// One label per (b,c), batch-major order.
std::vector<Region> classify_regions(const ChannelStats& stats, const RegionConfig& cfg = {});

struct SurfacePoint {
    double mu;
    double d;
    double phi;
    Region label;
};

// Uniform steps x steps grid over [mu_min,mu_max] x [d_min,d_max], mu-major.
// Both ranges need min < max and steps >= 2.
std::vector<SurfacePoint> surface_grid(double mu_min, double mu_max, int mu_steps, double d_min,
                                       double d_max, int d_steps, const RegionConfig& cfg = {});

// CSV with header `mu,d,phi,label`; labels serialized lowercase.
void write_surface_csv(std::ostream& os, const std::vector<SurfacePoint>& grid);

}  // namespace dsgate
