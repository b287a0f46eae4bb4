#include "mediqa/model.hpp"

#include "mediqa/error.hpp"

namespace mediqa::model {

using namespace nc;

namespace {

PatchScores dual_branch(const MedIQAModel& m, const Tensor& tokens) {
  const std::size_t b = tokens.dim(0);
  const std::size_t n = tokens.dim(1);
  PatchScores out;
  out.s = reshape(sigmoid(m.score_head.forward(tokens)), {b, n});
  out.w = add_scalar(reshape(sigmoid(m.weight_head.forward(tokens)), {b, n}), m.config().weight_floor);
  out.q = weighted_average(out.s, out.w, m.config().denom_eps);
  return out;
}

}  // namespace

double aggregate_patch_scores(std::span<const double> s, std::span<const double> w, double eps) {
  if (s.size() != w.size() || s.empty()) {
    throw DimensionError("aggregate_patch_scores: need equal, non-empty score and weight vectors");
  }
  const Tensor ts({s.size()}, {s.begin(), s.end()});
  const Tensor tw({w.size()}, {w.begin(), w.end()});
  return weighted_average(ts, tw, eps).item();
}

double aggregate_slice_scores(std::span<const double> q, std::span<const double> logits) {
  if (q.size() != logits.size() || q.empty()) {
    throw DimensionError("aggregate_slice_scores: need equal, non-empty vectors");
  }
  const Tensor tq({q.size()}, {q.begin(), q.end()});
  const Tensor tl({logits.size()}, {logits.begin(), logits.end()});
  return sum(mul(softmax(tl, 0), tq)).item();
}

Head::Head(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng)
    : fc1(in, hidden, rng), fc2(hidden, out, rng) {}

Tensor Head::forward(const Tensor& x) const { return fc2.forward(gelu(fc1.forward(x))); }

void Head::collect(blocks::ParamList& out, const std::string& prefix) const {
  fc1.collect(out, prefix + ".fc1");
  fc2.collect(out, prefix + ".fc2");
}

MedIQAModel::MedIQAModel(const ModelConfig& config) : config_(config) {
  const auto& bc = config.blocks;
  bc.validate();
  if (config.num_params == 0) throw ConfigError("num_params must be >= 1");
  auto rng = make_rng(bc.seed, "init");
  embed = blocks::PatchEmbed(bc.image_size, bc.patch_size, bc.embed_dim, rng);
  for (std::size_t i = 0; i < bc.depth; ++i) {
    vit.emplace_back(bc.embed_dim, bc.num_heads, bc.mlp_ratio, rng);
  }
  tab = blocks::TransposedAttention(bc.num_tokens(), rng);
  reduce = blocks::Linear(bc.feature_channels(), bc.embed_dim, rng);
  sstb = {blocks::ScaleSwinBlock(bc, rng), blocks::ScaleSwinBlock(bc, rng)};
  injector = prompt::PromptInjector(bc.embed_dim, rng);
  param_head = Head(bc.embed_dim, bc.embed_dim, config.num_params, rng);
  auto head_rng = make_rng(bc.seed, "heads");
  init_heads(head_rng);
}

void MedIQAModel::init_heads(Rng& rng) {
  const auto e = config_.blocks.embed_dim;
  score_head = Head(e, e, 1, rng);
  weight_head = Head(e, e, 1, rng);
  slice_weight = blocks::Linear(e, 1, rng);
}

blocks::FeatureMap MedIQAModel::extract_features(const Tensor& images) const {
  Tensor x = embed.forward(images);
  std::vector<Tensor> layers;
  layers.reserve(vit.size());
  for (const auto& layer : vit) {
    x = layer.forward(x);
    layers.push_back(x);
  }
  const Tensor stacked = layers.size() == 1 ? layers.front() : concat(layers, 2);
  return blocks::FeatureMap{transpose(stacked)};
}

Tensor MedIQAModel::encode(const Tensor& images, const OptionalPrompt& prompt) const {
  const blocks::FeatureMap f = tab.forward(extract_features(images));
  Tensor tokens = reduce.forward(transpose(f.data));
  const Tensor p = prompt ? prompt::encoded_tensor(*prompt) : Tensor();
  for (std::size_t i = 0; i < sstb.size(); ++i) {
    if (prompt) {
      const Tensor v = injector.layer(i + 1).project(p);
      tokens = sstb[i].forward(tokens, &v);
    } else {
      tokens = sstb[i].forward(tokens);
    }
  }
  return tokens;
}

Tensor MedIQAModel::pooled_features(const Tensor& images, const OptionalPrompt& prompt) const {
  return mean_axis(encode(images, prompt), 1);
}

PatchScores MedIQAModel::score_2d(const Tensor& images, const OptionalPrompt& prompt) const {
  return dual_branch(*this, encode(images, prompt));
}

SliceScores MedIQAModel::score_slices(const Tensor& slices, const OptionalPrompt& prompt) const {
  const Tensor tokens = encode(slices, prompt);
  const std::size_t k = tokens.dim(0);
  const PatchScores per_slice = dual_branch(*this, tokens);
  const Tensor logits = reshape(slice_weight.forward(mean_axis(tokens, 1)), {k});
  SliceScores out;
  out.q = per_slice.q;
  out.weights = softmax(logits, 0);
  out.Q = sum(mul(out.weights, out.q));
  return out;
}

Tensor MedIQAModel::predict_params(const Tensor& images, const OptionalPrompt& prompt) const {
  const Tensor pooled = mean_axis(pooled_features(images, prompt), 0);
  const Tensor row = reshape(pooled, {1, config_.blocks.embed_dim});
  return reshape(sigmoid(param_head.forward(row)), {config_.num_params});
}

Tensor MedIQAModel::inject(const Tensor& x, const prompt::PromptFields& fields, std::size_t site) const {
  return injector.inject(x, prompt::encoded_tensor(fields), site);
}

blocks::ParamList MedIQAModel::encoder_parameters() const {
  blocks::ParamList out;
  embed.collect(out, "embed");
  for (std::size_t i = 0; i < vit.size(); ++i) vit[i].collect(out, "vit." + std::to_string(i));
  tab.collect(out, "tab");
  reduce.collect(out, "reduce");
  for (std::size_t i = 0; i < sstb.size(); ++i) sstb[i].collect(out, "sstb." + std::to_string(i + 1));
  return out;
}

blocks::ParamList MedIQAModel::injection_parameters() const {
  blocks::ParamList out;
  injector.collect(out, "inject");
  return out;
}

blocks::ParamList MedIQAModel::parameters() const {
  blocks::ParamList out = encoder_parameters();
  injector.collect(out, "inject");
  score_head.collect(out, "score_head");
  weight_head.collect(out, "weight_head");
  slice_weight.collect(out, "slice_weight");
  param_head.collect(out, "param_head");
  return out;
}

void MedIQAModel::reset_heads(std::uint64_t seed) {
  auto rng = make_rng(seed, "heads-reset");
  init_heads(rng);
}

void MedIQAModel::zero_injections() { injector.zero(); }

MedIQAModel MedIQAModel::clone() const {
  MedIQAModel copy(config_);
  copy.copy_parameters_from(*this);
  return copy;
}

void MedIQAModel::copy_parameters_from(const MedIQAModel& other) {
  if (!(other.config_ == config_)) throw ContractError("copy_parameters_from: configs differ");
  const auto dst = parameters();
  const auto src = other.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto d = dst[i].second;
    const auto s = src[i].second.data();
    std::copy(s.begin(), s.end(), d.mutable_data().begin());
  }
  embed.use_position = other.embed.use_position;
}

PreparedInput prepare_input(const Volume& volume, const PreparationOptions& options) {
  PreparedInput in;
  const std::size_t s = options.salient.target_size;
  if (volume.is_2d()) {
    const Image2D img = salient::normalize_resize(volume.slice(0), s);
    in.images = Tensor({1, 1, s, s}, img.pixels);
    in.slice_indices = {0};
    return in;
  }
  in.volumetric = true;
  if (!options.salient_slices) {
    const std::size_t center = volume.depth() / 2;
    const Image2D img = salient::normalize_resize(volume.slice(center), s);
    in.images = Tensor({1, 1, s, s}, img.pixels);
    in.slice_indices = {center};
    return in;
  }
  const auto sel = salient::select_salient_slices(volume, options.salient);
  std::vector<double> pixels;
  pixels.reserve(sel.slices.size() * s * s);
  for (const auto& img : sel.slices) pixels.insert(pixels.end(), img.pixels.begin(), img.pixels.end());
  in.images = Tensor({sel.slices.size(), 1, s, s}, std::move(pixels));
  in.slice_indices.assign(sel.indices.begin(), sel.indices.end());
  return in;
}

Tensor quality_forward(const MedIQAModel& model, const PreparedInput& input,
                       const OptionalPrompt& prompt) {
  if (input.volumetric) return model.score_slices(input.images, prompt).Q;
  return reshape(model.score_2d(input.images, prompt).q, {});
}

QualityPrediction predict_quality(const MedIQAModel& model, const PreparedInput& input,
                                  const OptionalPrompt& prompt) {
  QualityPrediction out;
  if (!input.volumetric) {
    out.score = model.score_2d(input.images, prompt).q.item();
    return out;
  }
  const SliceScores scores = model.score_slices(input.images, prompt);
  out.score = scores.Q.item();
  for (std::size_t i = 0; i < input.slice_indices.size(); ++i) {
    out.slices.push_back({input.slice_indices[i], scores.q[i], scores.weights[i]});
  }
  return out;
}

SliceScores score_3d(const MedIQAModel& model, const Volume& volume, const OptionalPrompt& prompt,
                     const salient::SalientConfig& config) {
  PreparationOptions options;
  options.salient = config;
  const PreparedInput in = prepare_input(volume, options);
  return model.score_slices(in.images, prompt);
}

}  // namespace mediqa::model
