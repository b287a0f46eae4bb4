#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mediqa/numcore/ops.hpp"
#include "mediqa/numcore/tensor.hpp"
#include "mediqa/rng.hpp"

namespace mediqa::blocks {

using nc::Shape;
using nc::Tensor;

/// Sizes for the desk-scale transformer stack.
struct BlockConfig {
  std::size_t image_size = 64;
  std::size_t embed_dim = 32;
  std::size_t num_heads = 4;
  std::size_t depth = 2;
  std::size_t patch_size = 8;
  std::size_t window_size = 4;
  std::size_t mlp_ratio = 2;
  double sstb_scale = 0.8;
  std::uint64_t seed = 0;

  std::size_t grid_side() const { return image_size / patch_size; }
  std::size_t num_tokens() const { return grid_side() * grid_side(); }
  std::size_t feature_channels() const { return embed_dim * depth; }

  /// Throws DimensionError / ConfigError when the sizes are inconsistent.
  void validate() const;
  bool operator==(const BlockConfig&) const = default;
};

/// Named parameter handles; the tensors share storage with the module.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

/// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  /// x[..., in] -> [..., out]
  Tensor forward(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);
  Tensor forward(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

/// fc2(gelu(fc1(x)))
struct Mlp {
  Linear fc1;
  Linear fc2;

  Mlp() = default;
  Mlp(std::size_t dim, std::size_t hidden, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Collects the softmax matrices of each attention call when passed in.
struct AttentionTrace {
  std::vector<Tensor> weights;
};

/// Multi-head scaled dot-product self-attention over [B, T, E] tokens,
/// without normalization or residual.
class Attention {
 public:
  Attention() = default;
  Attention(std::size_t dim, std::size_t heads, Rng& rng);

  Tensor forward(const Tensor& x, AttentionTrace* trace = nullptr) const;
  void collect(ParamList& out, const std::string& prefix) const;

  Linear query, key, value, proj;

 private:
  std::size_t heads_ = 1;
};

/// Splits [B, 1, S, S] images into P x P patches, projects each to E and
/// adds a learned positional embedding. Output is [B, N, E].
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(std::size_t image_size, std::size_t patch_size, std::size_t dim, Rng& rng);

  Tensor forward(const Tensor& images) const;
  void collect(ParamList& out, const std::string& prefix) const;
  std::size_t num_tokens() const { return position.dim(0); }

  Linear proj;
  Tensor position;  // [N, E]
  bool use_position = true;

 private:
  std::size_t image_size_ = 0;
  std::size_t patch_size_ = 0;
};

/// Pre-norm ViT layer. `attend` is the attention sublayer alone.
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(std::size_t dim, std::size_t heads, std::size_t mlp_ratio, Rng& rng);

  /// x + Attn(LN(x))
  Tensor mhsa_forward(const Tensor& x, AttentionTrace* trace = nullptr) const;
  /// mhsa_forward followed by x + MLP(LN(x))
  Tensor forward(const Tensor& x, AttentionTrace* trace = nullptr) const;
  void collect(ParamList& out, const std::string& prefix) const;

  LayerNorm norm1;
  Attention attn;
  LayerNorm norm2;
  Mlp mlp;
};

/// Channel-first features [B, C, H_f*W_f].
struct FeatureMap {
  Tensor data;

  std::size_t batch() const { return data.dim(0); }
  std::size_t channels() const { return data.dim(1); }
  std::size_t tokens() const { return data.dim(2); }
};

/// Transposed attention block: queries, keys and values are projections
/// along the spatial axis, so the attention matrix is C x C.
class TransposedAttention {
 public:
  TransposedAttention() = default;
  TransposedAttention(std::size_t tokens, Rng& rng);

  FeatureMap forward(const FeatureMap& f, AttentionTrace* trace = nullptr) const;
  void collect(ParamList& out, const std::string& prefix) const;

  Linear query, key, value;
};

/// Scale Swin block: windowed self-attention and MLP whose joint residual
/// branch is multiplied by `scale` before being added back.
class ScaleSwinBlock {
 public:
  ScaleSwinBlock() = default;
  ScaleSwinBlock(const BlockConfig& config, Rng& rng);

  /// `injection`, when given, is an [E] vector added to every token before
  /// the block runs (the prompt site).
  Tensor forward(const Tensor& x, const Tensor* injection = nullptr,
                 AttentionTrace* trace = nullptr) const;
  /// Attention over non-overlapping windows of LN(x); no residual.
  Tensor window_attention(const Tensor& x, AttentionTrace* trace = nullptr) const;
  void collect(ParamList& out, const std::string& prefix) const;

  LayerNorm norm1;
  Attention attn;
  LayerNorm norm2;
  Mlp mlp;
  double scale = 1.0;

 private:
  std::size_t grid_ = 1;
  std::size_t window_ = 1;
};

inline constexpr std::size_t kModalityClasses = 4;
inline constexpr std::size_t kRegionClasses = 6;
inline constexpr std::size_t kTypeClasses = 7;

struct ClassifierOutput {
  Tensor modality;  // [B, 4]
  Tensor region;    // [B, 6]
  Tensor type;      // [B, 7]
};

/// Small ViT with three classification heads used to generate prompts.
/// Shares the patch-embed and attention code with the backbone but owns
/// its own weights.
class VitClassifier {
 public:
  VitClassifier() = default;
  explicit VitClassifier(const BlockConfig& config);

  ClassifierOutput logits(const Tensor& images) const;
  /// Softmax probabilities per task.
  ClassifierOutput classify(const Tensor& images) const;
  ParamList parameters() const;
  const BlockConfig& config() const { return config_; }

  PatchEmbed embed;
  std::vector<TransformerLayer> layers;
  LayerNorm norm;
  Linear head_modality, head_region, head_type;

 private:
  BlockConfig config_;
};

}  // namespace mediqa::blocks
