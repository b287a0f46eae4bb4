#include <benchmark/benchmark.h>

#include "mediqa/eval/metrics.hpp"
#include "mediqa/rng.hpp"

namespace {

void BM_Srcc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto rng = mediqa::make_rng(5, "bench");
  std::uniform_int_distribution<int> level(0, 4);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<double> target(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    target[i] = level(rng) / 4.0;
    pred[i] = target[i] + noise(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(mediqa::eval::srcc(pred, target));
}
BENCHMARK(BM_Srcc)->Arg(50)->Arg(1000)->Arg(100000);

}  // namespace
BENCHMARK_MAIN();
