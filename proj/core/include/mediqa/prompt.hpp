#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "mediqa/blocks.hpp"
#include "mediqa/image.hpp"

namespace mediqa::prompt {

using nc::Tensor;

enum class Dim { k2D, k3D };
enum class Modality { kCT, kMR, kFundus, kOther };
enum class Region { kChest, kBrain, kBreast, kAbdomen, kRetina, kOther };
enum class ImageType { kT1, kT2, kFlair, kLungWindow, kSoftTissueWindow, kColorFundus, kNone };

/// Vocabulary labels in one-hot order.
std::span<const std::string_view> dim_labels();
std::span<const std::string_view> modality_labels();
std::span<const std::string_view> region_labels();
std::span<const std::string_view> type_labels();

std::string_view to_string(Dim v);
std::string_view to_string(Modality v);
std::string_view to_string(Region v);
std::string_view to_string(ImageType v);

/// Throw VocabularyError listing the valid labels on an unknown value.
Dim parse_dim(std::string_view s);
Modality parse_modality(std::string_view s);
Region parse_region(std::string_view s);
ImageType parse_type(std::string_view s);

inline constexpr std::size_t kDimSize = 2;
inline constexpr std::size_t kModalitySize = 4;
inline constexpr std::size_t kRegionSize = 6;
inline constexpr std::size_t kTypeSize = 7;
inline constexpr std::size_t kPromptLength = kDimSize + kModalitySize + kRegionSize + kTypeSize;

struct PromptFields {
  Dim dim = Dim::k2D;
  Modality modality = Modality::kOther;
  Region region = Region::kOther;
  ImageType type = ImageType::kNone;
  bool operator==(const PromptFields&) const = default;
};

PromptFields parse_fields(std::string_view dim, std::string_view modality, std::string_view region,
                          std::string_view type);
std::string describe(const PromptFields& fields);

using EncodedPrompt = std::array<double, kPromptLength>;

/// Concatenated one-hot (dim, modality, region, type).
EncodedPrompt encode_prompts(const PromptFields& fields);
Tensor encoded_tensor(const PromptFields& fields);

/// Per-SSTB linear map from the encoded prompt to an E-vector.
class InjectionLayer {
 public:
  InjectionLayer() = default;
  InjectionLayer(std::size_t embed_dim, Rng& rng);

  /// FC(p) for p of length 19; returns [E].
  Tensor project(const Tensor& p) const;
  void zero();
  void collect(blocks::ParamList& out, const std::string& prefix) const;

  blocks::Linear fc;
};

inline constexpr std::size_t kInjectionSites = 2;

/// One independent InjectionLayer per SSTB (sites 1 and 2).
class PromptInjector {
 public:
  PromptInjector() = default;
  PromptInjector(std::size_t embed_dim, Rng& rng);

  const InjectionLayer& layer(std::size_t site) const;
  InjectionLayer& layer(std::size_t site);
  /// y = x + FC_site(p), broadcast to every token of every batch item.
  Tensor inject(const Tensor& x, const Tensor& p, std::size_t site) const;
  void zero();
  void collect(blocks::ParamList& out, const std::string& prefix) const;

 private:
  std::array<InjectionLayer, kInjectionSites> layers_;
};

enum class PromptMode { kAuto, kManifest, kOff };
PromptMode parse_prompt_mode(std::string_view s);
std::string_view to_string(PromptMode mode);

/// Optional per-field values, from the manifest or an explicit override.
struct PromptHints {
  std::optional<Modality> modality;
  std::optional<Region> region;
  std::optional<ImageType> type;
  bool complete() const { return modality && region && type; }
  bool empty() const { return !modality && !region && !type; }
};

struct PromptSources {
  PromptMode mode = PromptMode::kAuto;
  PromptHints manifest;
  PromptHints explicit_fields;
  const blocks::VitClassifier* classifier = nullptr;
};

/// Resolves prompt fields for an input. The dimension comes from the input
/// rank. Other fields follow explicit > manifest (in manifest mode) >
/// classifier argmax; in auto mode without a classifier, manifest hints are
/// used. Returns nullopt in off mode. Throws ConfigError when a field has
/// no source.
std::optional<PromptFields> auto_generate(const Volume& input, const PromptSources& sources);

/// Classifier argmax for one normalized [1, 1, S, S] image.
PromptHints classify_fields(const blocks::VitClassifier& classifier, const Tensor& image);

}  // namespace mediqa::prompt
