#include <cmath>
#include <random>

#include "doctest.h"
#include "dsgate/c2f.hpp"
#include "dsgate/grad_check.hpp"
#include "helpers.hpp"

using namespace dsgate;
using dsgate::testing::random_tensor;

namespace {

C2fConfig small_cfg(bool dsg, bool msg) {
    C2fConfig cfg;
    cfg.c_in = 4;
    cfg.c_out = 4;
    cfg.n = 2;
    cfg.use_dsg = dsg;
    cfg.use_msg = msg;
    return cfg;
}

std::vector<Tensor4> flatten(const BlockParams& p) {
    std::vector<Tensor4> out;
    for (const auto& [name, t] : p.named()) out.push_back(*t);
    return out;
}

BlockParams unflatten(const C2fConfig& cfg, const std::vector<Var>& vars) {
    BlockParams p = zero_block(cfg);
    auto named = p.named();
    REQUIRE(named.size() == vars.size());
    for (std::size_t i = 0; i < vars.size(); ++i) *named[i].second = vars[i].value();
    return p;
}

// Rebuilds BlockVars over externally supplied leaves, in named() order.
BlockVars vars_from(const C2fConfig& cfg, const std::vector<Var>& leaves) {
    BlockVars v;
    std::size_t i = 0;
    v.conv1_w = leaves[i++];
    v.conv1_b = leaves[i++];
    for (std::int64_t k = 0; k < cfg.n; ++k) {
        BottleneckVars bk;
        bk.w1 = leaves[i++];
        bk.b1 = leaves[i++];
        bk.w2 = leaves[i++];
        bk.b2 = leaves[i++];
        v.bottlenecks.push_back(bk);
    }
    v.conv2_w = leaves[i++];
    v.conv2_b = leaves[i++];
    if (cfg.use_dsg) {
        DsgVars dv;
        dv.weight = leaves[i++];
        dv.bias = leaves[i++];
        v.dsg = dv;
    }
    if (cfg.use_msg) {
        MsgVars mv;
        mv.gate_w = leaves[i++];
        mv.gate_b = leaves[i++];
        mv.scale_w = leaves[i++];
        mv.scale_b = leaves[i++];
        mv.temp_w = leaves[i++];
        mv.temp_b = leaves[i++];
        v.msg = mv;
    }
    REQUIRE(i == leaves.size());
    return v;
}

}  // namespace

TEST_CASE("bottleneck: zero parameters") {
    std::mt19937_64 rng(3);
    const Tensor4 x = random_tensor({2, 3, 4, 4}, rng, -2.0, 2.0);
    BottleneckVars zero{Var::constant(Tensor4({3, 3, 3, 3}, 0.0)),
                        Var::constant(Tensor4({1, 3, 1, 1}, 0.0)),
                        Var::constant(Tensor4({3, 3, 3, 3}, 0.0)),
                        Var::constant(Tensor4({1, 3, 1, 1}, 0.0))};
    SUBCASE("shortcut passes the input through (silu(0) = 0)") {
        const Var out = bottleneck_forward(Var::constant(x), zero, true, Act::silu);
        CHECK(identical(out.value(), x));
    }
    SUBCASE("no shortcut yields all zeros") {
        const Var out = bottleneck_forward(Var::constant(x), zero, false, Act::silu);
        for (std::size_t i = 0; i < out.value().size(); ++i) CHECK(out.value()[i] == 0.0);
    }
}

TEST_CASE("bottleneck gradients match finite differences") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 5; ++t) {
        const std::vector<Tensor4> point{
            random_tensor({1, 2, 3, 3}, rng),  // x
            random_tensor({2, 2, 3, 3}, rng, -0.5, 0.5), random_tensor({1, 2, 1, 1}, rng),
            random_tensor({2, 2, 3, 3}, rng, -0.5, 0.5), random_tensor({1, 2, 1, 1}, rng)};
        const Tensor4 c = random_tensor({1, 2, 3, 3}, rng, -1.0, 1.0);
        for (bool shortcut : {true, false}) {
            const auto f = [&](const std::vector<Var>& p) {
                const BottleneckVars bv{p[1], p[2], p[3], p[4]};
                return weighted_sum(bottleneck_forward(p[0], bv, shortcut, Act::silu), c);
            };
            CHECK(grad_check(f, point, 1e-4, 1e-5).pass);
        }
    }
}

TEST_CASE("shape law: output spatial extents equal input extents") {
    std::mt19937_64 rng(7);
    C2fConfig cfg;
    cfg.c_in = 8;
    cfg.c_out = 8;
    cfg.n = 2;
    cfg.use_dsg = true;
    cfg.use_msg = true;
    CHECK(cfg.cat_channels() == 16);  // 4 * (2 + 2)
    const BlockParams params = init_block(cfg, rng);
    NoiseSource noise(1, NoiseSource::Mode::eval);
    const Var x = Var::constant(random_tensor({2, 8, 16, 16}, rng));
    const Var out = c2f_ds_forward(x, bind(params, false), cfg, noise);
    CHECK(out.value().dims() == Dims{2, 8, 16, 16});

    const Var x2 = Var::constant(random_tensor({1, 8, 5, 7}, rng));
    CHECK(c2f_ds_forward(x2, bind(params, false), cfg, noise).value().dims() == Dims{1, 8, 5, 7});
}

TEST_CASE("flag-off block equals the baseline bitwise") {
    std::mt19937_64 rng(11);
    const C2fConfig cfg = small_cfg(false, false);
    for (int t = 0; t < 10; ++t) {
        const BlockParams params = init_block(cfg, rng);
        const Var x = Var::constant(random_tensor({2, 4, 3, 3}, rng, -2.0, 2.0));
        NoiseSource noise(7, NoiseSource::Mode::train);
        const BlockVars vars = bind(params, false);
        const Tensor4 ds = c2f_ds_forward(x, vars, cfg, noise).value();
        const Tensor4 base = c2f_baseline_forward(x, vars, cfg).value();
        CHECK(identical(ds, base));
    }
}

TEST_CASE("zero-parameter DSG equals the baseline with the concatenation halved") {
    std::mt19937_64 rng(13);
    C2fConfig cfg = small_cfg(true, false);
    BlockParams params = init_block(cfg, rng);
    *params.dsg = DsgParams(cfg.width(), cfg.n);  // zero gate parameters
    const Tensor4 x = random_tensor({2, 4, 3, 3}, rng, -2.0, 2.0);
    NoiseSource noise(0, NoiseSource::Mode::eval);
    const Tensor4 ds = c2f_ds_forward(Var::constant(x), bind(params, false), cfg, noise).value();

    // Compose the baseline by hand with an explicit 0.5 multiply before conv2.
    const BlockVars v = bind(params, false);
    const Var t = activation(cfg.act, pointwise_conv(Var::constant(x), v.conv1_w, v.conv1_b));
    auto paths = split_channels(t, {cfg.hidden(), cfg.hidden()});
    Var cur = paths[1];
    for (const auto& bk : v.bottlenecks) {
        cur = bottleneck_forward(cur, bk, cfg.shortcut, cfg.act);
        paths.push_back(cur);
    }
    const Var x_cat = affine(concat_channels(paths), 0.5, 0.0);
    const Tensor4 composed =
        activation(cfg.act, pointwise_conv(x_cat, v.conv2_w, v.conv2_b)).value();
    CHECK(identical(ds, composed));
}

TEST_CASE("uniform MSG weights equal the baseline with paths scaled by a third") {
    std::mt19937_64 rng(17);
    C2fConfig cfg = small_cfg(false, true);
    BlockParams params = init_block(cfg, rng);
    *params.msg = MsgParams(cfg.width(), cfg.groups);  // zero parameters: uniform weights
    const Tensor4 x = random_tensor({2, 4, 3, 3}, rng, -2.0, 2.0);
    NoiseSource noise(0, NoiseSource::Mode::eval);
    const Tensor4 ds = c2f_ds_forward(Var::constant(x), bind(params, false), cfg, noise).value();

    const BlockVars v = bind(params, false);
    const Var t = activation(cfg.act, pointwise_conv(Var::constant(x), v.conv1_w, v.conv1_b));
    auto paths = split_channels(t, {cfg.hidden(), cfg.hidden()});
    Var cur = paths[1];
    for (const auto& bk : v.bottlenecks) {
        cur = bottleneck_forward(cur, bk, cfg.shortcut, cfg.act);
        paths.push_back(cur);
    }
    for (auto& p : paths) p = affine(p, 1.0 / 3.0, 0.0);
    const Tensor4 composed =
        activation(cfg.act,
                   pointwise_conv(concat_channels(paths), v.conv2_w, v.conv2_b))
            .value();
    CHECK(identical(ds, composed));
}

TEST_CASE("block parameter count agrees with enumeration and hand values") {
    std::mt19937_64 rng(19);
    for (bool dsg : {false, true})
        for (bool msg : {false, true}) {
            C2fConfig cfg;
            cfg.c_in = 8;
            cfg.c_out = 8;
            cfg.n = 2;
            cfg.use_dsg = dsg;
            cfg.use_msg = msg;
            const BlockParams params = init_block(cfg, rng);
            std::int64_t enumerated = 0;
            for (const auto& [name, t] : params.named()) {
                enumerated += static_cast<std::int64_t>(t->size());
            }
            const BlockParamCount count = block_param_count(cfg);
            CHECK(count.total == enumerated);
            if (dsg) CHECK(count.dsg == 144);   // 16*8 + 16
            if (msg) CHECK(count.msg == 81);    // 3*(3*8 + 3)
        }
}

TEST_CASE("full block gradient check, both gates, eval mode") {
    std::mt19937_64 rng(23);
    for (int t = 0; t < 3; ++t) {
        C2fConfig cfg;
        cfg.c_in = 4;
        cfg.c_out = 4;
        cfg.n = 1;
        cfg.use_dsg = true;
        cfg.use_msg = true;
        const BlockParams params = init_block(cfg, rng);
        const Tensor4 x = random_tensor({1, 4, 3, 3}, rng);
        std::vector<Tensor4> point = flatten(params);
        point.push_back(x);
        const Tensor4 c = random_tensor({1, 4, 3, 3}, rng, -1.0, 1.0);
        const auto f = [&](const std::vector<Var>& vars) {
            const std::vector<Var> leaves(vars.begin(), vars.end() - 1);
            const BlockVars bv = vars_from(cfg, leaves);
            NoiseSource noise(0, NoiseSource::Mode::eval);
            return weighted_sum(c2f_ds_forward(vars.back(), bv, cfg, noise), c);
        };
        const auto report = grad_check(f, point, 1e-4, 1e-5);
        CHECK(report.pass);
    }
}

TEST_CASE("config validation rejects inconsistent setups") {
    C2fConfig cfg;
    cfg.c_out = 1;  // hidden would floor to 0
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    C2fConfig g = small_cfg(false, true);
    g.groups = 7;  // n+2 = 4
    CHECK_THROWS_AS(g.validate(), ConfigError);

    const C2fConfig ok = small_cfg(true, true);
    BlockParams params = zero_block(ok);
    params.dsg.reset();
    NoiseSource noise(0, NoiseSource::Mode::eval);
    CHECK_THROWS_AS(
        c2f_ds_forward(Var::constant(Tensor4({1, 4, 2, 2})), bind(params, false), ok, noise),
        ConfigError);
}

TEST_CASE("round-trip of block parameters through a bundle directory") {
    std::mt19937_64 rng(29);
    const C2fConfig cfg = small_cfg(true, true);
    const BlockParams params = init_block(cfg, rng);
    const auto dir = std::filesystem::temp_directory_path() / "dsgate_block_bundle";
    save_bundle(dir, params.named());
    BlockParams loaded = zero_block(cfg);
    assign_named(loaded.named(), load_bundle(dir));
    for (std::size_t i = 0; i < params.named().size(); ++i) {
        CHECK(identical(*loaded.named()[i].second, *params.named()[i].second));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("helpers under test stay in sync with the manifest order") {
    std::mt19937_64 rng(31);
    const C2fConfig cfg = small_cfg(true, true);
    const BlockParams params = init_block(cfg, rng);
    const std::vector<Tensor4> flat = flatten(params);
    std::vector<Var> leaves;
    for (const Tensor4& t : flat) leaves.push_back(Var::constant(t));
    const BlockParams back = unflatten(cfg, leaves);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        CHECK(identical(*back.named()[i].second, flat[i]));
    }
}
