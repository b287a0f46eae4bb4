#include <benchmark/benchmark.h>

#include "mediqa/model.hpp"

namespace {

using namespace mediqa;

nc::Tensor image(std::size_t batch) {
  auto rng = make_rng(4, "bench");
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(batch * 64 * 64);
  for (auto& x : v) x = dist(rng);
  return nc::Tensor({batch, 1, 64, 64}, std::move(v));
}

const prompt::PromptFields kPrompt{prompt::Dim::k2D, prompt::Modality::kCT, prompt::Region::kChest,
                                   prompt::ImageType::kLungWindow};

void BM_Score2D(benchmark::State& state) {
  const model::MedIQAModel m(model::ModelConfig{});
  const nc::Tensor x = image(1);
  for (auto _ : state) benchmark::DoNotOptimize(m.score_2d(x, kPrompt).q.item());
}
BENCHMARK(BM_Score2D)->Unit(benchmark::kMillisecond);

void BM_Score2DTrainStep(benchmark::State& state) {
  const model::MedIQAModel m(model::ModelConfig{});
  const nc::Tensor x = image(1);
  nc::GradTape tape;
  for (auto _ : state) {
    nc::Tensor loss;
    {
      nc::TapeScope scope(tape);
      loss = nc::square(nc::add_scalar(nc::reshape(m.score_2d(x, kPrompt).q, {}), -0.5));
    }
    nc::backward(loss, tape);
    for (auto& [name, t] : m.parameters()) {
      auto h = t;
      h.zero_grad();
    }
  }
}
BENCHMARK(BM_Score2DTrainStep)->Unit(benchmark::kMillisecond);

void BM_ScoreSlicesTrainStep(benchmark::State& state) {
  const model::MedIQAModel m(model::ModelConfig{});
  const nc::Tensor x = image(7);
  nc::GradTape tape;
  for (auto _ : state) {
    nc::Tensor loss;
    {
      nc::TapeScope scope(tape);
      loss = nc::square(nc::add_scalar(m.score_slices(x, kPrompt).Q, -0.5));
    }
    nc::backward(loss, tape);
    for (auto& [name, t] : m.parameters()) {
      auto h = t;
      h.zero_grad();
    }
  }
}
BENCHMARK(BM_ScoreSlicesTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
