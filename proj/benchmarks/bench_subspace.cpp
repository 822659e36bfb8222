#include <benchmark/benchmark.h>

#include "cps/inference.hpp"
#include "cps/subspace.hpp"
#include "cps/synthetic.hpp"
#include "cps/task_interpolation.hpp"

namespace {

struct Fixture {
  cps::ModelSpec spec{cps::ArchKind::dense, {16}, {16}, 4};
  std::vector<cps::TaskSet> tasks = cps::make_synthetic_tasks({});
  cps::TrainConfig cfg{.learning_rate = 0.1, .max_epochs = 5, .early_stop_loss = 1e-9};
};

void BM_TrainCps(benchmark::State& state) {
  Fixture f;
  for (auto _ : state) benchmark::DoNotOptimize(cps::train_cps(f.spec, f.tasks, 1.0, f.cfg));
}
BENCHMARK(BM_TrainCps)->Unit(benchmark::kMillisecond);

void BM_Landscape(benchmark::State& state) {
  Fixture f;
  const auto subspace = cps::train_cps(f.spec, f.tasks, 1.0, f.cfg);
  const auto grid = cps::enumerate_task_grid(f.tasks, 3);
  const auto params = cps::grid_coeffs(static_cast<std::size_t>(state.range(0)), 3, false);
  for (auto _ : state) benchmark::DoNotOptimize(cps::landscape_map(subspace, grid, params));
  state.counters["cells"] = static_cast<double>(grid.size() * params.size());
}
BENCHMARK(BM_Landscape)->Arg(5)->Arg(11)->Unit(benchmark::kMillisecond);

}  // namespace
