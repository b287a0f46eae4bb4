#include <cmath>

#include <gtest/gtest.h>

#include "mediqa/data/synthetic.hpp"
#include "mediqa/error.hpp"
#include "mediqa/train.hpp"
#include "support.hpp"

namespace {

using namespace mediqa;
using namespace mediqa::train;
using mediqa::test::random_tensor;
using mediqa::test::TempDir;
using mediqa::test::to_vector;

model::ModelConfig tiny_config() {
  model::ModelConfig c;
  c.blocks.image_size = 16;
  c.blocks.patch_size = 4;
  c.blocks.embed_dim = 8;
  c.blocks.num_heads = 2;
  c.blocks.window_size = 2;
  c.blocks.seed = 2;
  return c;
}

Example image_example(std::uint64_t seed, double label) {
  Example e;
  e.input.images = random_tensor({1, 1, 16, 16}, seed, 0, 1);
  e.input.slice_indices = {0};
  e.label = label;
  return e;
}

TEST(Loss, MseExample) {
  EXPECT_DOUBLE_EQ(mse_loss(Tensor({2}, {0, 1}), Tensor({2}, {1, 1})).item(), 0.5);
  EXPECT_THROW(mse_loss(Tensor({2}, {0, 1}), Tensor({3}, {1, 1, 1})), ContractError);
}

TEST(Loss, CrossEntropyOfUniformLogits) {
  const Tensor logits = Tensor::zeros({2, 4});
  EXPECT_NEAR(cross_entropy(logits, {0, 3}).item(), std::log(4.0), 1e-12);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Tensor p = random_tensor({5}, 1, -1, 1, true);
  const auto before = to_vector(p);
  AdamState state;
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  for (int i = 0; i < 5; ++i) adam_step({{"p", p}}, state, cfg);
  EXPECT_EQ(to_vector(p), before);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  Tensor p = Tensor::zeros({1}, true);
  AdamState state;
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  double last = 0.0, prev = 0.0;
  for (int i = 0; i < 100; ++i) {
    p.node()->grad = {0.7};
    prev = p[0];
    adam_step({{"p", p}}, state, cfg);
    last = prev - p[0];
  }
  EXPECT_NEAR(last, 1e-3, 1e-6);
}

TEST(Adam, ZeroLearningRateIsBitIdentical) {
  Tensor p = random_tensor({6}, 2, -1, 1, true);
  const auto before = to_vector(p);
  p.node()->grad = {1, -2, 3, -4, 5, -6};
  AdamState state;
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  adam_step({{"p", p}}, state, cfg);
  EXPECT_EQ(to_vector(p), before);
}

TEST(Adam, NonFiniteGradientNamesTensor) {
  Tensor p = Tensor::zeros({2}, true);
  p.node()->grad = {0.0, std::nan("")};
  AdamState state;
  try {
    adam_step({{"weird.weight", p}}, state, TrainConfig{});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("weird.weight"), std::string::npos);
  }
}

TEST(Clip, ScalesToMaxNorm) {
  Tensor a = Tensor::zeros({2}, true), b = Tensor::zeros({1}, true);
  a.node()->grad = {3, 0};
  b.node()->grad = {4};
  EXPECT_DOUBLE_EQ(clip_gradients({{"a", a}, {"b", b}}, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-15);
}

TEST(Fit, OverfitsOneSampleAndStartsMonotone) {
  model::MedIQAModel m(tiny_config());
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 150;
  const auto result = fit(m, {image_example(3, 0.85)}, {}, cfg);
  ASSERT_EQ(result.curve.size(), 150u);
  for (std::size_t i = 1; i < 10; ++i) EXPECT_LT(result.curve[i].mse, result.curve[i - 1].mse) << i;
  EXPECT_LT(result.best_val, 1e-3);
  const auto e = image_example(3, 0.85);
  EXPECT_LT(mean_loss(m, {e}, Stage::kFinetune), 1e-3);
}

TEST(Fit, KeepsBestValidationEpoch) {
  model::MedIQAModel m(tiny_config());
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 6;
  const std::vector<Example> train{image_example(4, 0.2), image_example(5, 0.8)};
  const std::vector<Example> val{image_example(6, 0.5)};
  const auto result = fit(m, train, val, cfg);
  double best = 1e9;
  for (const auto& r : result.curve)
    if (r.split == data::Split::kVal) best = std::min(best, r.mse);
  EXPECT_EQ(result.best_val, best);
  EXPECT_DOUBLE_EQ(mean_loss(m, val, Stage::kFinetune), best);
}

TEST(Fit, SameSeedSameCurve) {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  const std::vector<Example> train{image_example(7, 0.1), image_example(8, 0.6), image_example(9, 0.9)};
  model::MedIQAModel a(tiny_config()), b(tiny_config());
  EXPECT_EQ(format_loss_csv(fit(a, train, {}, cfg).curve), format_loss_csv(fit(b, train, {}, cfg).curve));
}

TEST(Fit, PromptOffFreezesZeroInjections) {
  model::MedIQAModel m(tiny_config());
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 2;
  cfg.flags.pm = false;
  fit(m, {image_example(10, 0.3)}, {}, cfg);
  for (const auto& [name, t] : m.injection_parameters())
    for (double v : t.data()) EXPECT_EQ(v, 0.0) << name;
}

TEST(Fit, FrozenEncoderDoesNotMove) {
  model::MedIQAModel m(tiny_config());
  const auto before = to_vector(m.embed.proj.weight);
  const auto head = to_vector(m.score_head.fc2.weight);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 2;
  cfg.freeze_encoder = true;
  fit(m, {image_example(11, 0.9)}, {}, cfg);
  EXPECT_EQ(to_vector(m.embed.proj.weight), before);
  EXPECT_NE(to_vector(m.score_head.fc2.weight), head);
}

TEST(Fit, ConfigErrors) {
  model::MedIQAModel m(tiny_config());
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(fit(m, {image_example(1, 0.5)}, {}, cfg), ConfigError);
  cfg.epochs = 1;
  EXPECT_THROW(fit(m, {}, {}, cfg), ContractError);
}

TEST(Stages, LabelKindsAreChecked) {
  TempDir dir;
  data::SyntheticConfig sc;
  sc.count = 10;
  sc.image_size = 16;
  const auto manifest = data::generate_synthetic(dir.str(), sc);
  model::MedIQAModel m(tiny_config());
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.salient.target_size = 16;
  EXPECT_THROW(pretrain(m, manifest, cfg), ContractError);
  EXPECT_NO_THROW(finetune(m, manifest, cfg));
}

TEST(Stages, FinetuneStartNeedsCheckpointWhenPretrained) {
  TrainConfig cfg;
  EXPECT_THROW(finetune_start(tiny_config(), std::nullopt, cfg), ConfigError);
  cfg.flags.pt = false;
  EXPECT_NO_THROW(finetune_start(tiny_config(), std::nullopt, cfg));
}

TEST(Classifier, LearnsSeparableModalities) {
  TempDir dir;
  data::SyntheticConfig sc;
  sc.count = 60;
  sc.image_size = 16;
  sc.profiles = {data::Profile::kCT, data::Profile::kMR, data::Profile::kFundus};
  const auto manifest = data::generate_synthetic(dir.str(), sc);
  auto cfg = tiny_config().blocks;
  blocks::VitClassifier clf(cfg);
  const auto train = load_classifier_examples(manifest, data::Split::kTrain, 16);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.epochs = 40;
  const auto losses = train_classifier(clf, train, tc);
  EXPECT_LT(losses.back(), losses.front());
  EXPECT_GE(classifier_accuracy(clf, train).modality, 0.9);
}

}  // namespace
