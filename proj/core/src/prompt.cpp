#include "mediqa/prompt.hpp"

#include <algorithm>

#include "mediqa/error.hpp"
#include "mediqa/salient.hpp"

namespace mediqa::prompt {

namespace {

constexpr std::array<std::string_view, kDimSize> kDimLabels{"2D", "3D"};
constexpr std::array<std::string_view, kModalitySize> kModalityLabels{"CT", "MR", "fundus", "other"};
constexpr std::array<std::string_view, kRegionSize> kRegionLabels{"chest",   "brain",  "breast",
                                                                   "abdomen", "retina", "other"};
constexpr std::array<std::string_view, kTypeSize> kTypeLabels{
    "T1", "T2", "FLAIR", "lung-window", "soft-tissue-window", "color-fundus", "none"};

template <class Enum, std::size_t N>
Enum parse_label(std::string_view s, const std::array<std::string_view, N>& labels,
                 std::string_view field) {
  for (std::size_t i = 0; i < N; ++i) {
    if (labels[i] == s) return static_cast<Enum>(i);
  }
  std::string valid;
  for (std::size_t i = 0; i < N; ++i) {
    if (i) valid += ", ";
    valid += labels[i];
  }
  throw VocabularyError("unknown " + std::string(field) + " '" + std::string(s) +
                        "'; valid values: " + valid);
}

template <std::size_t N>
std::string_view label_at(const std::array<std::string_view, N>& labels, std::size_t i) {
  return labels.at(i);
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::span<const std::string_view> dim_labels() { return kDimLabels; }
std::span<const std::string_view> modality_labels() { return kModalityLabels; }
std::span<const std::string_view> region_labels() { return kRegionLabels; }
std::span<const std::string_view> type_labels() { return kTypeLabels; }

std::string_view to_string(Dim v) { return label_at(kDimLabels, static_cast<std::size_t>(v)); }
std::string_view to_string(Modality v) { return label_at(kModalityLabels, static_cast<std::size_t>(v)); }
std::string_view to_string(Region v) { return label_at(kRegionLabels, static_cast<std::size_t>(v)); }
std::string_view to_string(ImageType v) { return label_at(kTypeLabels, static_cast<std::size_t>(v)); }

Dim parse_dim(std::string_view s) { return parse_label<Dim>(s, kDimLabels, "dim"); }
Modality parse_modality(std::string_view s) {
  return parse_label<Modality>(s, kModalityLabels, "modality");
}
Region parse_region(std::string_view s) { return parse_label<Region>(s, kRegionLabels, "region"); }
ImageType parse_type(std::string_view s) { return parse_label<ImageType>(s, kTypeLabels, "type"); }

PromptFields parse_fields(std::string_view dim, std::string_view modality, std::string_view region,
                          std::string_view type) {
  return {parse_dim(dim), parse_modality(modality), parse_region(region), parse_type(type)};
}

std::string describe(const PromptFields& f) {
  return std::string(to_string(f.dim)) + "," + std::string(to_string(f.modality)) + "," +
         std::string(to_string(f.region)) + "," + std::string(to_string(f.type));
}

EncodedPrompt encode_prompts(const PromptFields& f) {
  EncodedPrompt p{};
  p[static_cast<std::size_t>(f.dim)] = 1.0;
  p[kDimSize + static_cast<std::size_t>(f.modality)] = 1.0;
  p[kDimSize + kModalitySize + static_cast<std::size_t>(f.region)] = 1.0;
  p[kDimSize + kModalitySize + kRegionSize + static_cast<std::size_t>(f.type)] = 1.0;
  return p;
}

Tensor encoded_tensor(const PromptFields& fields) {
  const auto p = encode_prompts(fields);
  return Tensor({kPromptLength}, std::vector<double>(p.begin(), p.end()));
}

InjectionLayer::InjectionLayer(std::size_t embed_dim, Rng& rng) : fc(kPromptLength, embed_dim, rng) {}

Tensor InjectionLayer::project(const Tensor& p) const {
  if (p.numel() != kPromptLength) {
    throw DimensionError("prompt vector must have length " + std::to_string(kPromptLength) +
                         ", got " + std::to_string(p.numel()));
  }
  const Tensor row = nc::reshape(p, {1, kPromptLength});
  return nc::reshape(fc.forward(row), {fc.out_features()});
}

void InjectionLayer::zero() {
  std::ranges::fill(fc.weight.mutable_data(), 0.0);
  std::ranges::fill(fc.bias.mutable_data(), 0.0);
}

void InjectionLayer::collect(blocks::ParamList& out, const std::string& prefix) const {
  fc.collect(out, prefix + ".fc");
}

PromptInjector::PromptInjector(std::size_t embed_dim, Rng& rng)
    : layers_{InjectionLayer(embed_dim, rng), InjectionLayer(embed_dim, rng)} {}

const InjectionLayer& PromptInjector::layer(std::size_t site) const {
  if (site < 1 || site > kInjectionSites) {
    throw ContractError("injection site must be 1 or 2, got " + std::to_string(site));
  }
  return layers_[site - 1];
}

InjectionLayer& PromptInjector::layer(std::size_t site) {
  return const_cast<InjectionLayer&>(std::as_const(*this).layer(site));
}

Tensor PromptInjector::inject(const Tensor& x, const Tensor& p, std::size_t site) const {
  const Tensor v = layer(site).project(p);
  if (x.rank() == 0 || x.shape().back() != v.numel()) {
    throw DimensionError("inject: token width of " + nc::shape_string(x.shape()) +
                         " does not match embed dim " + std::to_string(v.numel()));
  }
  return nc::add(x, v);
}

void PromptInjector::zero() {
  for (auto& l : layers_) l.zero();
}

void PromptInjector::collect(blocks::ParamList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < kInjectionSites; ++i) {
    layers_[i].collect(out, prefix + "." + std::to_string(i + 1));
  }
}

PromptMode parse_prompt_mode(std::string_view s) {
  if (s == "auto") return PromptMode::kAuto;
  if (s == "manifest") return PromptMode::kManifest;
  if (s == "off") return PromptMode::kOff;
  throw VocabularyError("unknown prompt mode '" + std::string(s) + "'; valid values: auto, manifest, off");
}

std::string_view to_string(PromptMode mode) {
  switch (mode) {
    case PromptMode::kAuto: return "auto";
    case PromptMode::kManifest: return "manifest";
    case PromptMode::kOff: return "off";
  }
  return "auto";
}

PromptHints classify_fields(const blocks::VitClassifier& classifier, const Tensor& image) {
  const auto probs = classifier.classify(image);
  PromptHints h;
  h.modality = static_cast<Modality>(argmax(probs.modality.data().subspan(0, kModalitySize)));
  h.region = static_cast<Region>(argmax(probs.region.data().subspan(0, kRegionSize)));
  h.type = static_cast<ImageType>(argmax(probs.type.data().subspan(0, kTypeSize)));
  return h;
}

std::optional<PromptFields> auto_generate(const Volume& input, const PromptSources& sources) {
  if (sources.mode == PromptMode::kOff) return std::nullopt;
  PromptFields f;
  f.dim = input.is_2d() ? Dim::k2D : Dim::k3D;

  PromptHints resolved = sources.explicit_fields;
  auto fill_from = [&resolved](const PromptHints& h) {
    if (!resolved.modality) resolved.modality = h.modality;
    if (!resolved.region) resolved.region = h.region;
    if (!resolved.type) resolved.type = h.type;
  };
  const bool manifest_first = sources.mode == PromptMode::kManifest || sources.classifier == nullptr;
  if (manifest_first) fill_from(sources.manifest);
  if (!resolved.complete() && sources.classifier != nullptr) {
    const auto& cfg = sources.classifier->config();
    const Image2D center =
        salient::normalize_resize(input.slice(input.depth() / 2), cfg.image_size);
    const Tensor image({1, 1, cfg.image_size, cfg.image_size}, center.pixels);
    fill_from(classify_fields(*sources.classifier, image));
  }
  if (!resolved.complete()) {
    throw ConfigError("prompt fields unresolved: no classifier weights and no manifest hints");
  }
  f.modality = *resolved.modality;
  f.region = *resolved.region;
  f.type = *resolved.type;
  return f;
}

}  // namespace mediqa::prompt
