#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mediqa/blocks.hpp"
#include "mediqa/image.hpp"
#include "mediqa/prompt.hpp"
#include "mediqa/salient.hpp"

namespace mediqa::model {

using nc::Tensor;
using OptionalPrompt = std::optional<prompt::PromptFields>;

struct ModelConfig {
  blocks::BlockConfig blocks;
  std::size_t num_params = 1;   // k, width of the physical-parameter head
  double weight_floor = 1e-6;   // added to sigmoid patch weights
  double denom_eps = 1e-8;      // guard on sum(w)
  bool operator==(const ModelConfig&) const = default;
};

/// Per-patch scores s, weights w, and q = sum(w*s) / sum(w) per batch item.
struct PatchScores {
  Tensor s;  // [B, N]
  Tensor w;  // [B, N]
  Tensor q;  // [B]
};

/// Slice-level scores, their softmax weights, and Q = sum(wbar * q).
struct SliceScores {
  Tensor q;        // [K]
  Tensor weights;  // [K]
  Tensor Q;        // scalar
};

/// The same aggregation the model uses, on raw vectors.
double aggregate_patch_scores(std::span<const double> s, std::span<const double> w,
                              double eps = 1e-8);
/// Q = sum(wbar * q) with wbar = softmax(logits).
double aggregate_slice_scores(std::span<const double> q, std::span<const double> logits);

/// fc2(gelu(fc1(x)))
struct Head {
  blocks::Linear fc1;
  blocks::Linear fc2;

  Head() = default;
  Head(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(blocks::ParamList& out, const std::string& prefix) const;
};

/// Encoder (patch embed, ViT layers, TAB, channel reduction, two prompt-
/// injected SSTBs) followed by the dual-branch quality heads, the slice
/// weighting layer and the physical-parameter head.
///
/// Copies share parameter storage; use clone() for an independent model.
class MedIQAModel {
 public:
  explicit MedIQAModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  /// [B, 1, S, S] -> [B, sum C_i, H_f*W_f]; ViT layer outputs concatenated
  /// along channels.
  blocks::FeatureMap extract_features(const Tensor& images) const;
  /// Full encoder; returns [B, N, E] tokens after the second SSTB.
  Tensor encode(const Tensor& images, const OptionalPrompt& prompt) const;
  /// Encoder output mean-pooled over tokens, [B, E].
  Tensor pooled_features(const Tensor& images, const OptionalPrompt& prompt) const;

  PatchScores score_2d(const Tensor& images, const OptionalPrompt& prompt) const;
  /// `slices` is [K, 1, S, S]; each slice is scored through the 2D path.
  SliceScores score_slices(const Tensor& slices, const OptionalPrompt& prompt) const;
  /// Physical parameters in (0, 1); pooled features are averaged over the
  /// batch (slices) first. Returns [k].
  Tensor predict_params(const Tensor& images, const OptionalPrompt& prompt) const;

  /// y = x + FC_site(p)
  Tensor inject(const Tensor& x, const prompt::PromptFields& fields, std::size_t site) const;

  blocks::ParamList parameters() const;
  blocks::ParamList injection_parameters() const;
  blocks::ParamList encoder_parameters() const;  // excludes injections and heads

  /// Fresh initialization of the score, weight and slice-weight heads.
  void reset_heads(std::uint64_t seed);
  void zero_injections();
  MedIQAModel clone() const;
  /// Copies parameter values from `other` (same config required).
  void copy_parameters_from(const MedIQAModel& other);

  blocks::PatchEmbed embed;
  std::vector<blocks::TransformerLayer> vit;
  blocks::TransposedAttention tab;
  blocks::Linear reduce;  // sum C_i -> E
  std::array<blocks::ScaleSwinBlock, 2> sstb;
  prompt::PromptInjector injector;
  Head score_head;
  Head weight_head;
  blocks::Linear slice_weight;  // E -> 1
  Head param_head;

 private:
  void init_heads(Rng& rng);

  ModelConfig config_;
};

/// Preprocessed model input: one normalized image (2D) or the selected
/// slices of a volume, as a [K, 1, S, S] batch.
struct PreparedInput {
  Tensor images;
  bool volumetric = false;
  std::vector<std::size_t> slice_indices;
};

struct PreparationOptions {
  salient::SalientConfig salient;
  /// With salient slices off, volumes are reduced to their center slice.
  bool salient_slices = true;
};

PreparedInput prepare_input(const Volume& volume, const PreparationOptions& options);

/// Scalar quality prediction on the tape: q for images, Q for volumes.
Tensor quality_forward(const MedIQAModel& model, const PreparedInput& input,
                       const OptionalPrompt& prompt);

struct SliceDetail {
  std::size_t index = 0;
  double q = 0.0;
  double weight = 0.0;
};

struct QualityPrediction {
  double score = 0.0;
  std::vector<SliceDetail> slices;  // volumes only
};

QualityPrediction predict_quality(const MedIQAModel& model, const PreparedInput& input,
                                  const OptionalPrompt& prompt);

/// Salient-slice selection followed by score_slices.
SliceScores score_3d(const MedIQAModel& model, const Volume& volume, const OptionalPrompt& prompt,
                     const salient::SalientConfig& config);

}  // namespace mediqa::model
