#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mediqa/blocks.hpp"
#include "mediqa/data/manifest.hpp"
#include "mediqa/model.hpp"
#include "mediqa/prompt.hpp"
#include "mediqa/salient.hpp"

namespace mediqa::train {

using nc::Tensor;

enum class Stage { kPretrain, kFinetune };
std::string_view to_string(Stage stage);

/// Pretraining (PT), prompt strategy (PM), salient slices (SS).
struct AblationFlags {
  bool pt = true;
  bool pm = true;
  bool ss = true;
  bool operator==(const AblationFlags&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 1;
  std::size_t epochs = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 10.0;  // <= 0 disables clipping
  bool freeze_encoder = false;
  std::uint64_t seed = 0;
  Stage stage = Stage::kFinetune;
  AblationFlags flags;
  prompt::PromptMode prompts = prompt::PromptMode::kManifest;
  salient::SalientConfig salient;

  void validate() const;
};

struct LossRecord {
  std::size_t epoch = 0;  // 1-based
  data::Split split = data::Split::kTrain;
  double mse = 0.0;
};

/// (1/n) sum (pred - target)^2 over equal-length tensors.
Tensor mse_loss(const Tensor& pred, const Tensor& target);
/// Mean negative log-likelihood of `labels` under softmax(logits), logits [B, C].
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

/// One Adam update with bias correction from the gradients held by
/// `params`. Parameters without a gradient count as zero-gradient. Throws
/// NumericError naming the tensor on a non-finite gradient.
void adam_step(const blocks::ParamList& params, AdamState& state, const TrainConfig& config);

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_gradients(const blocks::ParamList& params, double max_norm);
void zero_gradients(const blocks::ParamList& params);

/// A preprocessed sample, ready for the model.
struct Example {
  model::PreparedInput input;
  model::OptionalPrompt prompt;
  double label = 0.0;
  std::size_t record = 0;  // index into the manifest records
};

struct LoadOptions {
  model::PreparationOptions preparation;
  prompt::PromptSources prompts;
};

/// Loads and preprocesses every record of `split` (kNone loads all).
std::vector<Example> load_examples(const data::Manifest& manifest, data::Split split, const LoadOptions& options);
LoadOptions load_options_for(const TrainConfig& config, const blocks::VitClassifier* classifier = nullptr);

/// Scalar prediction for the stage: the physical parameter (pretrain) or
/// the quality score q / Q (finetune).
Tensor stage_forward(const model::MedIQAModel& model, const Example& example, Stage stage);
double mean_loss(const model::MedIQAModel& model, const std::vector<Example>& examples, Stage stage);

struct TrainResult {
  std::vector<LossRecord> curve;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
};

/// Minimizes MSE over `train`, evaluating `val` after every epoch; leaves
/// `model` holding the parameters of the best validation epoch (earliest on
/// ties). With an empty `val` the train loss selects.
TrainResult fit(model::MedIQAModel& model, const std::vector<Example>& train, const std::vector<Example>& val,
                const TrainConfig& config);

/// Loads the manifest splits and fits. Pretraining requires physical
/// labels, fine-tuning expert labels.
TrainResult pretrain(model::MedIQAModel& model, const data::Manifest& manifest, const TrainConfig& config);
TrainResult finetune(model::MedIQAModel& model, const data::Manifest& manifest, const TrainConfig& config,
                     const blocks::VitClassifier* classifier = nullptr);

/// Starting point for fine-tuning: the pretrained checkpoint with fresh
/// quality heads when PT is on, otherwise a randomly initialized model.
model::MedIQAModel finetune_start(const model::ModelConfig& config, const std::optional<std::string>& checkpoint,
                                  const TrainConfig& train_config, bool reset_heads = true);

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& curve);
std::string format_loss_csv(const std::vector<LossRecord>& curve);

struct ClassifierExample {
  Tensor image;  // [1, 1, S, S]
  std::size_t modality = 0;
  std::size_t region = 0;
  std::size_t type = 0;
};

struct ClassifierAccuracy {
  double modality = 0.0;
  double region = 0.0;
  double type = 0.0;
  std::size_t n = 0;
};

/// Center slice of every record, normalized to the classifier resolution.
std::vector<ClassifierExample> load_classifier_examples(const data::Manifest& manifest, data::Split split,
                                                        std::size_t image_size);
/// Adam on the summed cross-entropy of the three heads. Returns per-epoch
/// train loss.
std::vector<double> train_classifier(blocks::VitClassifier& classifier, const std::vector<ClassifierExample>& train,
                                     const TrainConfig& config);
ClassifierAccuracy classifier_accuracy(const blocks::VitClassifier& classifier,
                                       const std::vector<ClassifierExample>& examples);

}  // namespace mediqa::train
