#include <benchmark/benchmark.h>

#include <random>

#include "bistnet/correspondence.hpp"
#include "bistnet/features.hpp"
#include "bistnet/msrb.hpp"
#include "bistnet/ops.hpp"

using namespace bistnet;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = d(rng);
  return Tensor::from_values(shape, v);
}

void BM_Conv2d3x3(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({side, side, 32}, 1);
  const Tensor w = random_tensor({3, 3, 32, 32}, 2);
  const Tensor b = Tensor::zeros({32});
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, {1, 1}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(side * side));
}
BENCHMARK(BM_Conv2d3x3)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Conv2d3x3Backward(benchmark::State& state) {
  const Tensor x = random_tensor({32, 32, 32}, 1);
  const Tensor w = random_tensor({3, 3, 32, 32}, 2);
  const Tensor b = Tensor::zeros({32});
  for (auto _ : state) {
    Tape tape;
    const Tensor leaf = w.with_grad();
    const Tensor loss = ops::sum(ops::conv2d(x, leaf, b, {1, 1}));
    benchmark::DoNotOptimize(tape.backward(loss));
  }
}
BENCHMARK(BM_Conv2d3x3Backward)->Unit(benchmark::kMillisecond);

// Coarse-level matching at 384x224 frames: a 48x28 grid on both sides.
void BM_Correspondence(benchmark::State& state) {
  const Tensor src = random_tensor({28, 48, 64}, 3);
  const Tensor ref = random_tensor({28, 48, 64}, 4);
  const Tensor ab = random_tensor({28, 48, 2}, 5);
  for (auto _ : state) {
    const auto c = corr::build_correspondence(src, ref);
    benchmark::DoNotOptimize(corr::warp_colors(c, ab));
  }
}
BENCHMARK(BM_Correspondence)->Unit(benchmark::kMillisecond);

void BM_FeatureExtraction(benchmark::State& state) {
  const auto weights = features::make_extractor(7);
  const Tensor frame = random_tensor({224, 384}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(features::extract_luminance(frame, weights));
}
BENCHMARK(BM_FeatureExtraction)->Unit(benchmark::kMillisecond);

void BM_MsrbForward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto model = msrb::MsrbModel::initialize(msrb::MsrbConfig{}, 1);
  const Tensor input = random_tensor({side, side, msrb::input_channels(19)}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(msrb::forward(model, input));
}
BENCHMARK(BM_MsrbForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
