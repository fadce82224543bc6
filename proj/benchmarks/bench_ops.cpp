#include <benchmark/benchmark.h>

#include <random>

#include "nst/imaging.hpp"
#include "nst/objective.hpp"
#include "nst/ops.hpp"

namespace {

nst::Tensor random_tensor(nst::Shape shape, std::uint64_t seed, bool grad = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(nst::shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return nst::Tensor(std::move(shape), std::move(v), grad);
}

void BM_Conv2dForward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto x = random_tensor({16, n, n}, 1);
    const auto w = random_tensor({16, 16, 3, 3}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(nst::conv2d(x, w, nst::Tensor()));
}
BENCHMARK(BM_Conv2dForward)->Arg(32)->Arg(64);

void BM_Conv2dBackward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto w = random_tensor({16, 16, 3, 3}, 2);
    for (auto _ : state) {
        auto x = random_tensor({16, n, n}, 1, true);
        benchmark::DoNotOptimize(nst::backward(nst::sum(nst::conv2d(x, w, nst::Tensor()))));
    }
}
BENCHMARK(BM_Conv2dBackward)->Arg(32)->Arg(64);

void BM_ObjectiveWithGradient(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const nst::LossNetwork net = nst::tiny_network(7);
    nst::TransferConfig config;
    nst::RgbImage img(size, size, 100);
    for (std::size_t i = 0; i < img.samples.size(); ++i) img.samples[i] = static_cast<std::uint8_t>(i * 31 % 251);
    const auto content = nst::preprocess(img, net);
    const auto ct = nst::extract_features(net, content, config.content_taps);
    const auto st =
        nst::make_style_target(nst::extract_features(net, content, config.style_taps), config.style_target_mode);
    for (auto _ : state) {
        nst::Tensor x(content.shape(), {content.data().begin(), content.data().end()}, true);
        benchmark::DoNotOptimize(nst::backward(nst::total_objective(x, config, ct, st, net).total));
    }
}
BENCHMARK(BM_ObjectiveWithGradient)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
