#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mediqa/data/manifest.hpp"
#include "mediqa/image.hpp"
#include "mediqa/rng.hpp"

namespace mediqa::data {

/// Procedural texture families: piecewise-constant ellipse phantoms (CT),
/// smooth blobs and gradients (MR), radial vessel patterns (fundus).
enum class Profile { kCT, kMR, kFundus };

std::string_view to_string(Profile profile);
Profile parse_profile(std::string_view s);
prompt::PromptFields profile_fields(Profile profile, bool volumetric);

/// noise sigma = sigma_max * (1 - level); blur width kappa = kappa_max * (1 - level).
struct DegradationSpec {
  double level = 1.0;
  double sigma_max = 0.3;
  double kappa_max = 2.0;
  std::uint64_t seed = 0;

  double sigma() const { return sigma_max * (1.0 - level); }
  double kappa() const { return kappa_max * (1.0 - level); }
};

/// Base content in [0, 1]. `depth` 1 yields a 2D image stored as a volume;
/// volumes leave `empty_slices` blank slices at each end.
Volume base_volume(Profile profile, std::size_t size, std::size_t depth, std::size_t empty_slices, Rng& rng);

/// Gaussian blur of width kappa (per slice), then additive Gaussian noise.
/// level == 1 returns the input unchanged.
Volume degrade(const Volume& base, const DegradationSpec& spec);
Image2D gaussian_blur(const Image2D& image, double kappa);

struct SyntheticConfig {
  std::size_t count = 100;
  std::vector<Profile> profiles{Profile::kCT};
  std::vector<double> levels{0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t image_size = 64;
  std::size_t depth = 1;
  std::size_t empty_slices = 2;
  double sigma_max = 0.3;
  double kappa_max = 2.0;
  /// Physical-parameter set: each sample gets a ramped exposure (CT) or
  /// field strength (MR) written to a DICOM header, labels come from it.
  bool dose_ramp = false;
  SplitRatios ratios = kDefaultRatios;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Quality level and profile for sample i. Levels cycle fastest.
double sample_level(const SyntheticConfig& config, std::size_t i);
Profile sample_profile(const SyntheticConfig& config, std::size_t i);

/// Exposure ramp 50..300 mAs and field-strength ramp 0.5..3.0 T.
inline constexpr double kMinExposure = 50.0;
inline constexpr double kMaxExposure = 300.0;
inline constexpr double kMinField = 0.5;
inline constexpr double kMaxField = 3.0;

/// Writes `<dir>/images/sNNNN.{raw,hdr[,dcm]}` and `<dir>/manifest.csv`.
Manifest generate_synthetic(const std::string& dir, const SyntheticConfig& config);

}  // namespace mediqa::data
