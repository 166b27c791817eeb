#include <benchmark/benchmark.h>

#include <random>

#include "dsgate/c2f.hpp"
#include "dsgate/dso.hpp"
#include "dsgate/train.hpp"

using namespace dsgate;

namespace {

Tensor4 random_tensor(Dims dims, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Tensor4 t(dims, 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

void BM_ChannelStats(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const Tensor4 x = random_tensor({8, 16, 32, 32}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(channel_stats(x));
    }
}
BENCHMARK(BM_ChannelStats);

void BM_Conv3x3Forward(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const Var x = Var::constant(random_tensor({8, 8, 32, 32}, rng));
    const Var w = Var::constant(random_tensor({8, 8, 3, 3}, rng));
    const Var b = Var::constant(random_tensor({1, 8, 1, 1}, rng));
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv3x3_same(x, w, b));
    }
}
BENCHMARK(BM_Conv3x3Forward);

void BM_BlockForward(benchmark::State& state) {
    const bool gated = state.range(0) != 0;
    std::mt19937_64 rng(3);
    C2fConfig cfg;
    cfg.c_in = 8;
    cfg.c_out = 8;
    cfg.n = 2;
    cfg.use_dsg = gated;
    cfg.use_msg = gated;
    const BlockParams params = init_block(cfg, rng);
    const BlockVars vars = bind(params, false);
    const Var x = Var::constant(random_tensor({8, 8, 32, 32}, rng));
    NoiseSource noise(0, NoiseSource::Mode::eval);
    for (auto _ : state) {
        benchmark::DoNotOptimize(c2f_ds_forward(x, vars, cfg, noise));
    }
}
BENCHMARK(BM_BlockForward)->Arg(0)->Arg(1);

void BM_TrainStep(benchmark::State& state) {
    const ToyConfig cfg;
    const auto data = gen_dataset(7, 32);
    TrainOptions opt;
    opt.epochs = 1;
    opt.batch = 32;
    for (auto _ : state) {
        benchmark::DoNotOptimize(train(cfg, data, {}, opt));
    }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
