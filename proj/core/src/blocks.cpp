#include "mediqa/blocks.hpp"

#include <cmath>

#include "mediqa/error.hpp"

namespace mediqa::blocks {

using namespace nc;

void BlockConfig::validate() const {
  if (image_size == 0 || embed_dim == 0 || num_heads == 0 || depth == 0 || patch_size == 0 ||
      window_size == 0 || mlp_ratio == 0) {
    throw ConfigError("block config: all sizes must be positive");
  }
  if (image_size % patch_size != 0) {
    throw DimensionError("patch size " + std::to_string(patch_size) +
                         " does not divide image size " + std::to_string(image_size));
  }
  if (embed_dim % num_heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  if (grid_side() % window_size != 0) {
    throw DimensionError("window size " + std::to_string(window_size) +
                         " does not divide token grid side " + std::to_string(grid_side()));
  }
  if (!std::isfinite(sstb_scale)) throw ConfigError("sstb_scale must be finite");
}

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(init_uniform({in, out}, in, rng)), bias(Tensor::zeros({out}, true)) {}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, weight), bias); }

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(std::size_t dim)
    : gamma(Tensor::full({dim}, 1.0, true)), beta(Tensor::zeros({dim}, true)) {}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }

void LayerNorm::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

Mlp::Mlp(std::size_t dim, std::size_t hidden, Rng& rng) : fc1(dim, hidden, rng), fc2(hidden, dim, rng) {}

Tensor Mlp::forward(const Tensor& x) const { return fc2.forward(gelu(fc1.forward(x))); }

void Mlp::collect(ParamList& out, const std::string& prefix) const {
  fc1.collect(out, prefix + ".fc1");
  fc2.collect(out, prefix + ".fc2");
}

Attention::Attention(std::size_t dim, std::size_t heads, Rng& rng)
    : query(dim, dim, rng), key(dim, dim, rng), value(dim, dim, rng), proj(dim, dim, rng),
      heads_(heads) {
  if (dim % heads != 0) throw ConfigError("attention width not divisible by head count");
}

Tensor Attention::forward(const Tensor& x, AttentionTrace* trace) const {
  if (x.rank() != 3) throw DimensionError("attention expects [B, T, E], got " + shape_string(x.shape()));
  const std::size_t b = x.dim(0);
  const std::size_t t = x.dim(1);
  const std::size_t e = x.dim(2);
  const std::size_t d = e / heads_;
  auto split_heads = [&](const Tensor& y) {
    return permute(reshape(y, {b, t, heads_, d}), {0, 2, 1, 3});
  };
  const Tensor q = split_heads(query.forward(x));
  const Tensor k = split_heads(key.forward(x));
  const Tensor v = split_heads(value.forward(x));
  const Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  const Tensor weights = softmax(scores, 3);
  if (trace) trace->weights.push_back(weights);
  const Tensor ctx = reshape(permute(matmul(weights, v), {0, 2, 1, 3}), {b, t, e});
  return proj.forward(ctx);
}

void Attention::collect(ParamList& out, const std::string& prefix) const {
  query.collect(out, prefix + ".query");
  key.collect(out, prefix + ".key");
  value.collect(out, prefix + ".value");
  proj.collect(out, prefix + ".proj");
}

PatchEmbed::PatchEmbed(std::size_t image_size, std::size_t patch_size, std::size_t dim, Rng& rng)
    : image_size_(image_size), patch_size_(patch_size) {
  if (patch_size == 0 || image_size % patch_size != 0) {
    throw DimensionError("patch size " + std::to_string(patch_size) +
                         " does not divide image size " + std::to_string(image_size));
  }
  const std::size_t side = image_size / patch_size;
  proj = Linear(patch_size * patch_size, dim, rng);
  std::uniform_real_distribution<double> dist(-0.02, 0.02);
  std::vector<double> pos(side * side * dim);
  for (auto& p : pos) p = dist(rng);
  position = Tensor({side * side, dim}, std::move(pos), true);
}

Tensor PatchEmbed::forward(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != image_size_ ||
      images.dim(3) != image_size_) {
    throw DimensionError("patch_embed expects [B, 1, " + std::to_string(image_size_) + ", " +
                         std::to_string(image_size_) + "], got " + shape_string(images.shape()));
  }
  const std::size_t b = images.dim(0);
  const std::size_t p = patch_size_;
  const std::size_t side = image_size_ / p;
  const Tensor grid = reshape(images, {b, side, p, side, p});
  const Tensor patches = reshape(permute(grid, {0, 1, 3, 2, 4}), {b, side * side, p * p});
  const Tensor tokens = proj.forward(patches);
  return use_position ? add(tokens, position) : tokens;
}

void PatchEmbed::collect(ParamList& out, const std::string& prefix) const {
  proj.collect(out, prefix + ".proj");
  out.emplace_back(prefix + ".position", position);
}

TransformerLayer::TransformerLayer(std::size_t dim, std::size_t heads, std::size_t mlp_ratio, Rng& rng)
    : norm1(dim), attn(dim, heads, rng), norm2(dim), mlp(dim, dim * mlp_ratio, rng) {}

Tensor TransformerLayer::mhsa_forward(const Tensor& x, AttentionTrace* trace) const {
  return add(x, attn.forward(norm1.forward(x), trace));
}

Tensor TransformerLayer::forward(const Tensor& x, AttentionTrace* trace) const {
  const Tensor h = mhsa_forward(x, trace);
  return add(h, mlp.forward(norm2.forward(h)));
}

void TransformerLayer::collect(ParamList& out, const std::string& prefix) const {
  norm1.collect(out, prefix + ".norm1");
  attn.collect(out, prefix + ".attn");
  norm2.collect(out, prefix + ".norm2");
  mlp.collect(out, prefix + ".mlp");
}

TransposedAttention::TransposedAttention(std::size_t tokens, Rng& rng)
    : query(tokens, tokens, rng), key(tokens, tokens, rng), value(tokens, tokens, rng) {}

FeatureMap TransposedAttention::forward(const FeatureMap& f, AttentionTrace* trace) const {
  const Tensor& x = f.data;
  if (x.rank() != 3 || x.dim(2) != query.in_features()) {
    throw DimensionError("TAB expects [B, C, " + std::to_string(query.in_features()) + "], got " +
                         shape_string(x.shape()));
  }
  const Tensor q = query.forward(x);
  const Tensor k = key.forward(x);
  const Tensor v = value.forward(x);
  const double norm = 1.0 / std::sqrt(static_cast<double>(x.dim(2)));
  const Tensor weights = softmax(scale(matmul(q, transpose(k)), norm), 2);
  if (trace) trace->weights.push_back(weights);
  return FeatureMap{add(x, matmul(weights, v))};
}

void TransposedAttention::collect(ParamList& out, const std::string& prefix) const {
  query.collect(out, prefix + ".query");
  key.collect(out, prefix + ".key");
  value.collect(out, prefix + ".value");
}

ScaleSwinBlock::ScaleSwinBlock(const BlockConfig& config, Rng& rng)
    : norm1(config.embed_dim),
      attn(config.embed_dim, config.num_heads, rng),
      norm2(config.embed_dim),
      mlp(config.embed_dim, config.embed_dim * config.mlp_ratio, rng),
      scale(config.sstb_scale),
      grid_(config.grid_side()),
      window_(config.window_size) {
  if (window_ == 0 || grid_ % window_ != 0) {
    throw DimensionError("window size " + std::to_string(window_) +
                         " does not divide token grid side " + std::to_string(grid_));
  }
}

Tensor ScaleSwinBlock::window_attention(const Tensor& x, AttentionTrace* trace) const {
  if (x.rank() != 3 || x.dim(1) != grid_ * grid_) {
    throw DimensionError("SSTB expects [B, " + std::to_string(grid_ * grid_) + ", E], got " +
                         shape_string(x.shape()));
  }
  const std::size_t b = x.dim(0);
  const std::size_t e = x.dim(2);
  const std::size_t nw = grid_ / window_;
  const Tensor h = norm1.forward(x);
  const Tensor windows = reshape(permute(reshape(h, {b, nw, window_, nw, window_, e}), {0, 1, 3, 2, 4, 5}),
                                 {b * nw * nw, window_ * window_, e});
  const Tensor attended = attn.forward(windows, trace);
  return reshape(permute(reshape(attended, {b, nw, nw, window_, window_, e}), {0, 1, 3, 2, 4, 5}),
                 {b, grid_ * grid_, e});
}

Tensor ScaleSwinBlock::forward(const Tensor& x, const Tensor* injection, AttentionTrace* trace) const {
  const Tensor y = injection ? add(x, *injection) : x;
  const Tensor h1 = window_attention(y, trace);
  const Tensor h2 = mlp.forward(norm2.forward(add(y, h1)));
  return add(y, nc::scale(add(h1, h2), scale));
}

void ScaleSwinBlock::collect(ParamList& out, const std::string& prefix) const {
  norm1.collect(out, prefix + ".norm1");
  attn.collect(out, prefix + ".attn");
  norm2.collect(out, prefix + ".norm2");
  mlp.collect(out, prefix + ".mlp");
}

VitClassifier::VitClassifier(const BlockConfig& config) : config_(config) {
  config.validate();
  auto rng = make_rng(config.seed, "classifier-init");
  embed = PatchEmbed(config.image_size, config.patch_size, config.embed_dim, rng);
  for (std::size_t i = 0; i < config.depth; ++i) {
    layers.emplace_back(config.embed_dim, config.num_heads, config.mlp_ratio, rng);
  }
  norm = LayerNorm(config.embed_dim);
  head_modality = Linear(config.embed_dim, kModalityClasses, rng);
  head_region = Linear(config.embed_dim, kRegionClasses, rng);
  head_type = Linear(config.embed_dim, kTypeClasses, rng);
}

ClassifierOutput VitClassifier::logits(const Tensor& images) const {
  Tensor x = embed.forward(images);
  for (const auto& layer : layers) x = layer.forward(x);
  const Tensor pooled = mean_axis(norm.forward(x), 1);
  return {head_modality.forward(pooled), head_region.forward(pooled), head_type.forward(pooled)};
}

ClassifierOutput VitClassifier::classify(const Tensor& images) const {
  auto out = logits(images);
  return {softmax(out.modality, 1), softmax(out.region, 1), softmax(out.type, 1)};
}

ParamList VitClassifier::parameters() const {
  ParamList out;
  embed.collect(out, "embed");
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, "layers." + std::to_string(i));
  norm.collect(out, "norm");
  head_modality.collect(out, "head_modality");
  head_region.collect(out, "head_region");
  head_type.collect(out, "head_type");
  return out;
}

}  // namespace mediqa::blocks
