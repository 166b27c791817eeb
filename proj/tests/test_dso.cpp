#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "dsgate/dso.hpp"
#include "dsgate/grad_check.hpp"
#include "helpers.hpp"

using namespace dsgate;
using dsgate::testing::random_tensor;

TEST_CASE("synergy operator anchor values") {
    CHECK(dso_apply(0.0, 0.0) == 0.0);
    CHECK(dso_apply(1.0, 1.0) == 3.0);
    for (double v : {0.3, 1.7, 42.0}) {
        CHECK(dso_apply(v, 0.0) == doctest::Approx(v).epsilon(1e-15));
        CHECK(dso_apply(0.0, v) == doctest::Approx(v).epsilon(1e-15));
    }
    const DsoGrad g = dso_apply_grad(2.0, 5.0);
    CHECK(g.dmu == 6.0);
    CHECK(g.dd == 3.0);
}

TEST_CASE("factored and expanded forms agree within 1e-12 on the grid") {
    for (int i = 0; i <= 60; ++i)
        for (int j = 0; j <= 60; ++j) {
            const double mu = 3.0 * i / 60.0;
            const double d = 3.0 * j / 60.0;
            const double factored = (d + 1.0) * (mu + 1.0) - 1.0;
            CHECK(std::fabs(dso_apply(mu, d) - factored) <= 1e-12);
        }
}

TEST_CASE("axis identities hold exactly, including non-representable sums") {
    for (double v = 0.0; v <= 3.0; v += 0.05) {  // accumulates rounding on purpose
        CHECK(dso_apply(v, 0.0) == v);
        CHECK(dso_apply(0.0, v) == v);
    }
}

TEST_CASE("strict monotonicity on the non-negative quadrant") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> coord(0.0, 5.0);
    std::uniform_real_distribution<double> delta(1e-9, 1.0);
    for (int t = 0; t < 1000; ++t) {
        const double mu = coord(rng), d = coord(rng), eps = delta(rng);
        CHECK(dso_apply(mu + eps, d) > dso_apply(mu, d));
        CHECK(dso_apply(mu, d + eps) > dso_apply(mu, d));
    }
}

TEST_CASE("synergy: each statistic amplifies the other's marginal gain") {
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> coord(0.0, 5.0);
    std::uniform_real_distribution<double> delta(1e-6, 1.0);
    for (int t = 0; t < 1000; ++t) {
        const double mu = coord(rng);
        const double d1 = coord(rng);
        const double d2 = d1 + delta(rng);
        const double eps = delta(rng);
        CHECK(dso_apply(mu + eps, d2) - dso_apply(mu, d2) >
              dso_apply(mu + eps, d1) - dso_apply(mu, d1));
        // and symmetrically in the other argument
        const double mu2 = mu + delta(rng);
        CHECK(dso_apply(mu2, d1 + eps) - dso_apply(mu2, d1) >
              dso_apply(mu, d1 + eps) - dso_apply(mu, d1));
    }
}

TEST_CASE("superadditive excess equals the product term") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> coord(0.0, 4.0);
    for (int t = 0; t < 500; ++t) {
        const double mu = coord(rng), d = coord(rng);
        const double excess = dso_apply(mu, d) - mu - d;
        CHECK(excess >= 0.0);
        CHECK(excess == doctest::Approx(mu * d).epsilon(1e-12));
    }
    CHECK(dso_apply(0.0, 2.5) - 0.0 - 2.5 == 0.0);
    CHECK(dso_apply(2.5, 0.0) - 2.5 - 0.0 == 0.0);
}

TEST_CASE("dso backward matches central differences") {
    std::mt19937_64 rng(43);
    for (int t = 0; t < 50; ++t) {
        const std::vector<Tensor4> point{random_tensor({1, 3, 1, 1}, rng),
                                         random_tensor({1, 3, 1, 1}, rng)};
        const Tensor4 c = random_tensor({1, 3, 1, 1}, rng, -1.0, 1.0);
        const auto f = [&](const std::vector<Var>& p) {
            return weighted_sum(dso_combine(p[0], p[1]), c);
        };
        const auto report = grad_check(f, point, 1e-4, 1e-6);
        CHECK(report.pass);
    }
}

TEST_CASE("channel statistics of the micro tensors") {
    SUBCASE("hand-evaluated 2x2 map") {
        const ChannelStats s = channel_stats(Tensor4({1, 1, 2, 2}, {0.0, 0.0, 0.0, 4.0}));
        CHECK(s.mu[0] == 1.0);
        CHECK(s.m[0] == 4.0);
        CHECK(s.d[0] == 3.0);
        CHECK(s.phi[0] == 7.0);  // (3+1)(1+1)-1
    }
    SUBCASE("constant input has zero sparsity and phi == mu") {
        const ChannelStats s = channel_stats(Tensor4({2, 3, 4, 4}, 0.8));
        for (std::size_t i = 0; i < s.mu.size(); ++i) {
            CHECK(s.mu[i] == doctest::Approx(0.8).epsilon(1e-15));
            CHECK(s.d[i] == doctest::Approx(0.0).epsilon(1e-15));
            CHECK(s.phi[i] == doctest::Approx(0.8).epsilon(1e-12));
        }
    }
    SUBCASE("all-zero input") {
        const ChannelStats s = channel_stats(Tensor4({1, 2, 3, 3}, 0.0));
        for (std::size_t i = 0; i < s.mu.size(); ++i) {
            CHECK(s.mu[i] == 0.0);
            CHECK(s.d[i] == 0.0);
            CHECK(s.phi[i] == 0.0);
        }
    }
}

TEST_CASE("channel statistics invariants over random tensors") {
    std::mt19937_64 rng(47);
    std::uniform_real_distribution<double> shift_dist(-3.0, 3.0);
    for (int t = 0; t < 300; ++t) {
        const Tensor4 x = random_tensor({2, 4, 3, 5}, rng, -4.0, 4.0);
        const ChannelStats s = channel_stats(x);
        for (std::size_t i = 0; i < s.d.size(); ++i) {
            CHECK(s.d[i] >= 0.0);
            CHECK(s.d[i] == s.m[i] - s.mu[i]);
            CHECK(std::fabs(s.phi[i] - (s.mu[i] * s.d[i] + s.mu[i] + s.d[i])) <= 1e-12);
        }
        // Constant shift of a whole channel moves mu exactly, leaves d alone.
        const double shift = shift_dist(rng);
        Tensor4 shifted = x;
        for (std::int64_t h = 0; h < 3; ++h)
            for (std::int64_t w = 0; w < 5; ++w) shifted.at(1, 2, h, w) += shift;
        const ChannelStats s2 = channel_stats(shifted);
        CHECK(s2.mu.at(1, 2, 0, 0) == doctest::Approx(s.mu.at(1, 2, 0, 0) + shift).epsilon(1e-12));
        CHECK(std::fabs(s2.d.at(1, 2, 0, 0) - s.d.at(1, 2, 0, 0)) <= 1e-12);
    }
}

TEST_CASE("region rule reproduces the worked classifications") {
    const RegionConfig cfg;
    CHECK(classify_point(0.1, 2.0, cfg) == Region::small);
    CHECK(classify_point(2.0, 2.0, cfg) == Region::mixed);       // phi = 8 > 1
    CHECK(classify_point(0.05, 0.05, cfg) == Region::background);  // phi ~ 0.1
    CHECK(classify_point(2.0, 0.1, cfg) == Region::large);
}

TEST_CASE("classify_regions covers every (b,c) pair in order") {
    Tensor4 x({1, 2, 2, 2}, {0.0, 0.0, 0.0, 0.0,      // channel 0: background
                             0.0, 0.0, 0.0, 4.0});    // channel 1: d=3 > mu=1
    const auto labels = classify_regions(channel_stats(x), {});
    REQUIRE(labels.size() == 2);
    CHECK(labels[0] == Region::background);
    CHECK(labels[1] == Region::small);
}

TEST_CASE("region config validation") {
    RegionConfig bad;
    bad.band_ratio = 1.0;
    CHECK_THROWS_AS(classify_point(0.0, 0.0, bad), ConfigError);
}

TEST_CASE("surface grid anchors, ordering, and errors") {
    const auto grid = surface_grid(0.0, 3.0, 61, 0.0, 3.0, 61, {});
    REQUIRE(grid.size() == 61u * 61u);
    CHECK(grid[0].mu == 0.0);
    CHECK(grid[0].d == 0.0);
    CHECK(grid[0].phi == 0.0);

    // phi = mu^2 + 2mu is strictly increasing along the d = mu boundary.
    double prev = -1.0;
    for (int i = 0; i < 61; ++i) {
        const auto& p = grid[static_cast<std::size_t>(i * 61 + i)];
        CHECK(p.mu == p.d);
        CHECK(p.phi == doctest::Approx(p.mu * p.mu + 2.0 * p.mu).epsilon(1e-12));
        CHECK(p.phi > prev);
        prev = p.phi;
    }
    // (1,1) lies on the grid at 0.05 spacing
    const auto& mid = grid[static_cast<std::size_t>(20 * 61 + 20)];
    CHECK(mid.mu == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mid.phi == doctest::Approx(3.0).epsilon(1e-12));

    CHECK_THROWS_AS(surface_grid(1.0, 1.0, 10, 0.0, 1.0, 10, {}), DomainError);
    CHECK_THROWS_AS(surface_grid(0.0, 1.0, 1, 0.0, 1.0, 10, {}), DomainError);
}

TEST_CASE("surface CSV serialization") {
    std::ostringstream os;
    write_surface_csv(os, surface_grid(0.0, 1.0, 2, 0.0, 1.0, 2, {}));
    const std::string text = os.str();
    CHECK(text.substr(0, 15) == "mu,d,phi,label\n");
    CHECK(text.find("0,0,0,background") != std::string::npos);
    CHECK(text.find("1,1,3,mixed") != std::string::npos);
}
