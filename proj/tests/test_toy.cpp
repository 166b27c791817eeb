#include <array>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "dsgate/dso.hpp"
#include "dsgate/train.hpp"

using namespace dsgate;

TEST_CASE("generated datasets are balanced, bounded, and deterministic") {
    const auto data = gen_dataset(7, 8);
    REQUIRE(data.size() == 8);
    std::array<int, 4> counts{};
    for (const auto& s : data) counts[static_cast<std::size_t>(s.label)]++;
    for (int c : counts) CHECK(c == 2);

    for (const auto& s : data) {
        CHECK(s.image.dims() == Dims{1, 1, 32, 32});
        for (std::size_t i = 0; i < s.image.size(); ++i) {
            CHECK(s.image[i] >= 0.0);
            CHECK(s.image[i] <= 1.0);
        }
    }

    const auto again = gen_dataset(7, 8);
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(data[i].label == again[i].label);
        CHECK(identical(data[i].image, again[i].image));
    }
    CHECK_FALSE(identical(gen_dataset(8, 8)[0].image, data[0].image));

    // balance within one sample for a non-multiple of four
    const auto odd = gen_dataset(1, 10);
    std::array<int, 4> odd_counts{};
    for (const auto& s : odd) odd_counts[static_cast<std::size_t>(s.label)]++;
    for (int c : odd_counts) CHECK((c == 2 || c == 3));

    CHECK_THROWS_AS(gen_dataset(1, 3), ConfigError);
}

TEST_CASE("class statistics behave like their regions") {
    const auto data = gen_dataset(101, 4000);
    int bg_low_d = 0, small_high_d = 0, bg_total = 0, small_total = 0;
    std::array<double, 4> mu_sum{}, d_sum{};
    std::array<int, 4> n{};
    for (const auto& s : data) {
        const ChannelStats st = channel_stats(s.image);
        const auto k = static_cast<std::size_t>(s.label);
        mu_sum[k] += st.mu[0];
        d_sum[k] += st.d[0];
        n[k]++;
        if (s.label == SceneClass::background) {
            bg_total++;
            if (st.d[0] < 0.15) bg_low_d++;
        }
        if (s.label == SceneClass::small) {
            small_total++;
            if (st.d[0] > 0.5) small_high_d++;
        }
    }
    CHECK(bg_total == 1000);
    CHECK(small_total == 1000);
    CHECK(bg_low_d >= 950);
    CHECK(small_high_d >= 950);

    // The four class centroids land in four distinct regions.
    const RegionConfig cfg;
    std::array<Region, 4> labels{};
    for (std::size_t k = 0; k < 4; ++k) {
        labels[k] = classify_point(mu_sum[k] / n[k], d_sum[k] / n[k], cfg);
    }
    CHECK(labels[static_cast<std::size_t>(SceneClass::background)] == Region::background);
    CHECK(labels[static_cast<std::size_t>(SceneClass::small)] == Region::small);
    CHECK(labels[static_cast<std::size_t>(SceneClass::large)] == Region::large);
    CHECK(labels[static_cast<std::size_t>(SceneClass::mixed)] == Region::mixed);
}

TEST_CASE("per-sample region labels separate small from background") {
    const auto data = gen_dataset(55, 4000);
    int small_hit = 0, bg_hit = 0;
    for (const auto& s : data) {
        const ChannelStats st = channel_stats(s.image);
        const Region r = classify_point(st.mu[0], st.d[0], {});
        if (s.label == SceneClass::small && r == Region::small) small_hit++;
        if (s.label == SceneClass::background && r == Region::background) bg_hit++;
    }
    CHECK(small_hit >= 950);
    CHECK(bg_hit >= 950);
}

TEST_CASE("dataset directory round-trip") {
    const auto dir = std::filesystem::temp_directory_path() / "dsgate_dataset";
    const auto data = gen_dataset(3, 8);
    save_dataset(dir, data);
    const auto back = load_dataset(dir);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back[i].label == data[i].label);
        CHECK(identical(back[i].image, data[i].image));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("zero training epochs return the initialization untouched") {
    const ToyConfig cfg;
    const auto data = gen_dataset(3, 32);
    TrainOptions opt;
    opt.epochs = 0;
    opt.seed = 5;
    const TrainResult r = train(cfg, data, data, opt);
    const ToyParams fresh = init_toy(cfg, 5);
    const auto got = r.params.named();
    const auto want = fresh.named();
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(identical(*got[i].second, *want[i].second));
    REQUIRE(r.metrics.records.size() == 1);
    CHECK(r.metrics.records[0].epoch == 0);
}

TEST_CASE("loss at initialization sits near ln 4") {
    const auto data = gen_dataset(11, 256);
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        TrainOptions opt;
        opt.epochs = 0;
        opt.seed = seed;
        const TrainResult r = train(ToyConfig{}, data, {}, opt);
        CHECK(std::fabs(r.metrics.records[0].loss - std::log(4.0)) <= 0.15);
    }
}

TEST_CASE("training runs are bitwise reproducible") {
    const auto tr = gen_dataset(21, 64);
    const auto va = gen_dataset(22, 32);
    TrainOptions opt;
    opt.epochs = 2;
    const TrainResult a = train(ToyConfig{}, tr, va, opt);
    const TrainResult b = train(ToyConfig{}, tr, va, opt);
    REQUIRE(a.metrics.records.size() == b.metrics.records.size());
    for (std::size_t i = 0; i < a.metrics.records.size(); ++i) {
        CHECK(a.metrics.records[i].loss == b.metrics.records[i].loss);
        CHECK(a.metrics.records[i].train_acc == b.metrics.records[i].train_acc);
        CHECK(a.metrics.records[i].val_acc == b.metrics.records[i].val_acc);
    }
    const auto pa = a.params.named();
    const auto pb = b.params.named();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(identical(*pa[i].second, *pb[i].second));
    CHECK(a.metrics.config_digest == b.metrics.config_digest);
}

TEST_CASE("gate parameters receive gradient on the first batch") {
    const ToyConfig cfg;
    const auto data = gen_dataset(7, 32);
    const ToyParams params = init_toy(cfg, 7);
    NoiseSource noise(mix_seed(7, 2), NoiseSource::Mode::train);

    Tensor4 images({32, 1, 32, 32}, 0.0);
    std::vector<int> labels;
    for (std::size_t i = 0; i < 32; ++i) {
        std::copy(data[i].image.data().begin(), data[i].image.data().end(),
                  images.data().begin() + i * 1024);
        labels.push_back(static_cast<int>(data[i].label));
    }
    const ToyVars vars = bind(params, true);
    const Var loss = cross_entropy_mean(toy_logits(Var::constant(images), vars, cfg, noise),
                                        labels);
    loss.backward();

    auto live = [](const Tensor4& g) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (std::fabs(g[i]) > 1e-8) return true;
        }
        return false;
    };
    REQUIRE(vars.block.dsg.has_value());
    REQUIRE(vars.block.msg.has_value());
    CHECK(live(vars.block.dsg->weight.grad()));
    CHECK(live(vars.block.msg->gate_w.grad()));
}

TEST_CASE("evaluation counts and tie-breaking") {
    const auto data = gen_dataset(9, 64);
    const ToyConfig cfg;

    SUBCASE("all-zero parameters predict class 0 everywhere") {
        const ToyParams zeros = zero_toy(cfg);
        const EvalResult r = evaluate(cfg, zeros, data);
        CHECK(r.accuracy == doctest::Approx(0.25));
        for (std::size_t t = 0; t < 4; ++t) {
            std::int64_t row = 0;
            for (std::int64_t v : r.confusion[t]) row += v;
            CHECK(row == 16);
            CHECK(r.confusion[t][0] == 16);  // argmax ties resolve to class 0
        }
    }
    SUBCASE("a short training run does not hurt training-set accuracy") {
        TrainOptions opt;
        opt.epochs = 3;
        const auto tr = gen_dataset(31, 128);
        const TrainResult run = train(cfg, tr, {}, opt);
        const double before = evaluate(cfg, init_toy(cfg, opt.seed), tr).accuracy;
        const double after = evaluate(cfg, run.params, tr).accuracy;
        CHECK(after >= before);
    }
}

TEST_CASE("toy parameter bundles round-trip through disk") {
    const ToyConfig cfg;
    const ToyParams params = init_toy(cfg, 13);
    const auto dir = std::filesystem::temp_directory_path() / "dsgate_toy_bundle";
    save_bundle(dir, params.named());
    const ToyParams back = toy_from_named(cfg, load_bundle(dir));
    const auto got = back.named();
    const auto want = params.named();
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].first == want[i].first);
        CHECK(identical(*got[i].second, *want[i].second));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("ablation rows share data and stay in range") {
    const auto tr = gen_dataset(41, 64);
    const auto va = gen_dataset(42, 32);
    TrainOptions opt;
    opt.epochs = 1;
    ToyConfig base;
    const auto rows = ablate("operator", {"mean", "max", "dso"}, base, tr, va, opt);
    REQUIRE(rows.size() == 3);
    for (const auto& row : rows) {
        CHECK(row.val_acc >= 0.0);
        CHECK(row.val_acc <= 1.0);
    }
    CHECK_THROWS_AS(ablate("width", {"1"}, base, tr, va, opt), ConfigError);
    CHECK_THROWS_AS(ablate("groups", {}, base, tr, va, opt), ConfigError);
}
