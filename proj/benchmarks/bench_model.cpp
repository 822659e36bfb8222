#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "cps/model.hpp"
#include "cps/rng.hpp"

namespace {

cps::Tensor<float> random_batch(std::size_t n, const cps::Shape& sample) {
  cps::Shape shape{n};
  shape.insert(shape.end(), sample.begin(), sample.end());
  cps::Tensor<float> x(shape);
  auto rng = cps::make_rng(7, 0);
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = static_cast<float>(cps::uniform01(rng));
  return x;
}

void BM_ConvForward(benchmark::State& state) {
  const auto spec = cps::ModelSpec::preset("3-layer", {3, 32, 32}, 10);
  const auto params = cps::init_params(spec, 1);
  const auto x = random_batch(static_cast<std::size_t>(state.range(0)), spec.input_shape);
  for (auto _ : state) benchmark::DoNotOptimize(cps::forward(spec, params, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ConvForward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ConvBackward(benchmark::State& state) {
  const auto spec = cps::ModelSpec::preset("3-layer", {3, 32, 32}, 10);
  const auto params = cps::init_params(spec, 1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_batch(n, spec.input_shape);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 10);
  for (auto _ : state) benchmark::DoNotOptimize(cps::backward(spec, params, x, y));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ConvBackward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_DenseBackward(benchmark::State& state) {
  const cps::ModelSpec spec{cps::ArchKind::dense, {32, 32}, {16}, 4};
  const auto params = cps::init_params(spec, 1);
  const auto x = random_batch(32, spec.input_shape);
  std::vector<int> y(32);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 4);
  for (auto _ : state) benchmark::DoNotOptimize(cps::backward(spec, params, x, y));
}
BENCHMARK(BM_DenseBackward);

}  // namespace

BENCHMARK_MAIN();
