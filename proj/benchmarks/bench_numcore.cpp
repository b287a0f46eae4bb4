#include <benchmark/benchmark.h>

#include "mediqa/numcore/ops.hpp"
#include "mediqa/rng.hpp"

namespace {

using mediqa::nc::Tensor;

Tensor random_tensor(mediqa::nc::Shape shape, mediqa::Rng& rng, bool grad = false) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(mediqa::nc::shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto rng = mediqa::make_rng(1, "bench");
  const Tensor a = random_tensor({n, n}, rng);
  const Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(mediqa::nc::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto rng = mediqa::make_rng(2, "bench");
  Tensor a = random_tensor({n, n}, rng, true);
  Tensor b = random_tensor({n, n}, rng, true);
  mediqa::nc::GradTape tape;
  for (auto _ : state) {
    Tensor loss;
    {
      mediqa::nc::TapeScope scope(tape);
      loss = mediqa::nc::sum(mediqa::nc::matmul(a, b));
    }
    mediqa::nc::backward(loss, tape);
    a.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(64);

void BM_Softmax(benchmark::State& state) {
  auto rng = mediqa::make_rng(3, "bench");
  const Tensor x = random_tensor({64, 64}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(mediqa::nc::softmax(x, 1));
}
BENCHMARK(BM_Softmax);

}  // namespace
