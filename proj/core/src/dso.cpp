#include "dsgate/dso.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace dsgate {

// Expanded form: exact on both axes (mu*0 + mu + 0 == mu in floating point,
// which the factored (d+1)(mu+1)-1 is not).
double dso_apply(double mu, double d) { return mu * d + mu + d; }

DsoGrad dso_apply_grad(double mu, double d) { return {d + 1.0, mu + 1.0}; }

ChannelStats channel_stats(const Tensor4& x) {
    const Dims xd = x.dims();
    const Dims sd{xd.b, xd.c, 1, 1};
    ChannelStats s{Tensor4(sd), Tensor4(sd), Tensor4(sd), Tensor4(sd)};
    const double inv = 1.0 / static_cast<double>(xd.h * xd.w);
    for (std::int64_t b = 0; b < xd.b; ++b)
        for (std::int64_t c = 0; c < xd.c; ++c) {
            double acc = 0.0;
            double best = x.at(b, c, 0, 0);
            for (std::int64_t h = 0; h < xd.h; ++h)
                for (std::int64_t w = 0; w < xd.w; ++w) {
                    const double v = x.at(b, c, h, w);
                    acc += v;
                    if (v > best) best = v;
                }
            const double mu = acc * inv;
            const double d = best - mu;
            s.mu.at(b, c, 0, 0) = mu;
            s.m.at(b, c, 0, 0) = best;
            s.d.at(b, c, 0, 0) = d;
            s.phi.at(b, c, 0, 0) = dso_apply(mu, d);
        }
    return s;
}

const char* region_name(Region r) {
    switch (r) {
        case Region::small: return "small";
        case Region::large: return "large";
        case Region::mixed: return "mixed";
        case Region::background: return "background";
    }
    return "?";
}

void RegionConfig::validate() const {
    if (!(band_ratio > 0.0 && band_ratio < 1.0)) {
        throw ConfigError("band_ratio must be in (0,1), got " + std::to_string(band_ratio));
    }
}

Region classify_point(double mu, double d, const RegionConfig& cfg) {
    cfg.validate();
    if (std::fabs(d - mu) <= cfg.band_ratio * (d + std::fabs(mu) + 1e-12)) {
        return dso_apply(mu, d) > cfg.phi_threshold ? Region::mixed : Region::background;
    }
    return d > mu ? Region::small : Region::large;
}

std::vector<Region> classify_regions(const ChannelStats& stats, const RegionConfig& cfg) {
    std::vector<Region> out;
    out.reserve(stats.mu.size());
    for (std::size_t i = 0; i < stats.mu.size(); ++i) {
        out.push_back(classify_point(stats.mu[i], stats.d[i], cfg));
    }
    return out;
}

std::vector<SurfacePoint> surface_grid(double mu_min, double mu_max, int mu_steps, double d_min,
                                       double d_max, int d_steps, const RegionConfig& cfg) {
    cfg.validate();
    if (mu_steps < 2 || d_steps < 2) {
        throw DomainError("surface_grid: steps must be >= 2");
    }
    if (!(mu_min < mu_max) || !(d_min < d_max)) {
        throw DomainError("surface_grid: degenerate range (min must be < max)");
    }
    std::vector<SurfacePoint> grid;
    grid.reserve(static_cast<std::size_t>(mu_steps) * static_cast<std::size_t>(d_steps));
    for (int i = 0; i < mu_steps; ++i) {
        const double mu = mu_min + (mu_max - mu_min) * i / static_cast<double>(mu_steps - 1);
        for (int j = 0; j < d_steps; ++j) {
            const double d = d_min + (d_max - d_min) * j / static_cast<double>(d_steps - 1);
            grid.push_back({mu, d, dso_apply(mu, d), classify_point(mu, d, cfg)});
        }
    }
    return grid;
}

void write_surface_csv(std::ostream& os, const std::vector<SurfacePoint>& grid) {
    os << "mu,d,phi,label\n";
    char buf[96];
    for (const SurfacePoint& p : grid) {
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,", p.mu, p.d, p.phi);
        os << buf << region_name(p.label) << "\n";
    }
}

}  // namespace dsgate
