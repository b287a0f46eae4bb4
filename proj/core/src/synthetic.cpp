#include "mediqa/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "mediqa/data/dicom.hpp"
#include "mediqa/data/volume_io.hpp"
#include "mediqa/error.hpp"

namespace mediqa::data {

namespace fs = std::filesystem;

namespace {

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Cross-section scale of a shape with half-extent rz along Z, at slice t in [-1, 1].
double section(double t, double rz) {
  const double u = t / rz;
  return u >= 1.0 ? 0.0 : std::sqrt(1.0 - u * u);
}

struct Ellipse {
  double cx, cy, rx, ry, angle, value, rz;
};

bool inside(const Ellipse& e, double x, double y, double s) {
  if (s <= 0.0) return false;
  const double c = std::cos(e.angle), sn = std::sin(e.angle);
  const double dx = x - e.cx, dy = y - e.cy;
  const double u = (c * dx + sn * dy) / (e.rx * s);
  const double v = (-sn * dx + c * dy) / (e.ry * s);
  return u * u + v * v <= 1.0;
}

// Coordinates are in [-1, 1] over the image.
struct CtPhantom {
  std::vector<Ellipse> shapes;

  explicit CtPhantom(Rng& rng) {
    shapes.push_back({uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05), uniform(rng, 0.7, 0.85),
                      uniform(rng, 0.55, 0.75), uniform(rng, -0.2, 0.2), uniform(rng, 0.35, 0.5), 1.0});
    const int inner = std::uniform_int_distribution<int>(3, 6)(rng);
    for (int i = 0; i < inner; ++i) {
      shapes.push_back({uniform(rng, -0.4, 0.4), uniform(rng, -0.35, 0.35), uniform(rng, 0.08, 0.3),
                        uniform(rng, 0.08, 0.3), uniform(rng, 0.0, std::numbers::pi), uniform(rng, 0.0, 1.0),
                        uniform(rng, 0.4, 1.0)});
    }
  }

  double operator()(double x, double y, double t) const {
    double v = 0.0;
    for (const auto& e : shapes) {
      if (inside(e, x, y, section(t, e.rz))) v = e.value;
    }
    return v;
  }
};

struct Blob {
  double cx, cy, cz, width, amp;
};

struct MrPhantom {
  Ellipse head;
  std::vector<Blob> blobs;
  double gx, gy;

  explicit MrPhantom(Rng& rng)
      : head{0.0, 0.0, uniform(rng, 0.65, 0.8), uniform(rng, 0.75, 0.9), uniform(rng, -0.15, 0.15), 1.0, 1.0} {
    const int count = std::uniform_int_distribution<int>(3, 6)(rng);
    for (int i = 0; i < count; ++i) {
      blobs.push_back({uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), uniform(rng, -0.6, 0.6),
                       uniform(rng, 0.15, 0.4), uniform(rng, 0.2, 0.6)});
    }
    gx = uniform(rng, -0.2, 0.2);
    gy = uniform(rng, -0.2, 0.2);
  }

  double operator()(double x, double y, double t) const {
    if (!inside(head, x, y, section(t, head.rz))) return 0.0;
    double v = 0.35 + gx * x + gy * y;
    for (const auto& b : blobs) {
      const double d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy) + (t - b.cz) * (t - b.cz);
      v += b.amp * std::exp(-d2 / (2.0 * b.width * b.width));
    }
    return std::clamp(v, 0.0, 1.0);
  }
};

struct FundusPhantom {
  double radius, disc_x, disc_y, disc_r;
  std::vector<double> vessel_angles;
  std::vector<double> vessel_curl;

  explicit FundusPhantom(Rng& rng)
      : radius(uniform(rng, 0.8, 0.95)),
        disc_x(uniform(rng, -0.45, -0.25)),
        disc_y(uniform(rng, -0.1, 0.1)),
        disc_r(uniform(rng, 0.1, 0.16)) {
    const int count = std::uniform_int_distribution<int>(6, 10)(rng);
    for (int i = 0; i < count; ++i) {
      vessel_angles.push_back(uniform(rng, 0.0, 2.0 * std::numbers::pi));
      vessel_curl.push_back(uniform(rng, -1.5, 1.5));
    }
  }

  double operator()(double x, double y, double t) const {
    const double s = section(t, 1.0);
    const double r = std::hypot(x, y);
    if (s <= 0.0 || r > radius * s) return 0.0;
    double v = 0.55 - 0.25 * (r / radius);
    const double dr = std::hypot(x - disc_x, y - disc_y);
    if (dr < disc_r) v = 0.95;
    const double phi = std::atan2(y - disc_y, x - disc_x);
    for (std::size_t i = 0; i < vessel_angles.size(); ++i) {
      const double target = vessel_angles[i] + vessel_curl[i] * dr * 0.5;
      const double diff = std::remainder(phi - target, 2.0 * std::numbers::pi);
      if (dr > disc_r && std::abs(diff) * dr < 0.02 + 0.015 * (1.0 - dr)) v = 0.15;
    }
    return v;
  }
};

template <class Phantom>
Volume render(const Phantom& phantom, std::size_t size, std::size_t depth, std::size_t empty) {
  Volume out(size, size, depth);
  const std::size_t filled = depth > 2 * empty ? depth - 2 * empty : depth;
  const std::size_t first = depth > 2 * empty ? empty : 0;
  for (std::size_t k = 0; k < filled; ++k) {
    const double t = filled == 1 ? 0.0 : -0.9 + 1.8 * static_cast<double>(k) / static_cast<double>(filled - 1);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double px = (2.0 * static_cast<double>(x) + 1.0) / static_cast<double>(size) - 1.0;
        const double py = (2.0 * static_cast<double>(y) + 1.0) / static_cast<double>(size) - 1.0;
        out.at(y, x, first + k) = static_cast<float>(phantom(px, py, t));
      }
    }
  }
  return out;
}

std::string sample_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%04zu", i);
  return buf;
}

}  // namespace

std::string_view to_string(Profile profile) {
  switch (profile) {
    case Profile::kCT: return "CT";
    case Profile::kMR: return "MR";
    case Profile::kFundus: return "fundus";
  }
  return "CT";
}

Profile parse_profile(std::string_view s) {
  if (s == "CT") return Profile::kCT;
  if (s == "MR") return Profile::kMR;
  if (s == "fundus") return Profile::kFundus;
  throw VocabularyError("unknown profile '" + std::string(s) + "'; valid values: CT, MR, fundus");
}

prompt::PromptFields profile_fields(Profile profile, bool volumetric) {
  using namespace prompt;
  const Dim dim = volumetric ? Dim::k3D : Dim::k2D;
  switch (profile) {
    case Profile::kCT: return {dim, Modality::kCT, Region::kChest, ImageType::kLungWindow};
    case Profile::kMR: return {dim, Modality::kMR, Region::kBrain, ImageType::kT1};
    case Profile::kFundus: return {dim, Modality::kFundus, Region::kRetina, ImageType::kColorFundus};
  }
  return {};
}

Volume base_volume(Profile profile, std::size_t size, std::size_t depth, std::size_t empty_slices, Rng& rng) {
  if (size == 0 || depth == 0) throw ConfigError("synthetic images need positive size and depth");
  switch (profile) {
    case Profile::kCT: return render(CtPhantom(rng), size, depth, empty_slices);
    case Profile::kMR: return render(MrPhantom(rng), size, depth, empty_slices);
    case Profile::kFundus: return render(FundusPhantom(rng), size, depth, empty_slices);
  }
  return {};
}

Image2D gaussian_blur(const Image2D& image, double kappa) {
  if (kappa <= 0.0) return image;
  const int radius = static_cast<int>(std::ceil(3.0 * kappa));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (kappa * kappa));
    total += kernel[i + radius];
  }
  for (auto& k : kernel) k /= total;
  const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
  Image2D tmp(image.height, image.width), out(image.height, image.width);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * image.at(y, clampi(x + i, w));
      tmp.at(y, x) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.at(clampi(y + i, h), x);
      out.at(y, x) = acc;
    }
  }
  return out;
}

Volume degrade(const Volume& base, const DegradationSpec& spec) {
  if (!(spec.level >= 0.0 && spec.level <= 1.0)) throw ConfigError("quality level must lie in [0, 1]");
  if (spec.level == 1.0) return base;
  Volume out = base;
  Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sigma = spec.sigma();
  for (std::size_t z = 0; z < base.depth(); ++z) {
    Image2D img = gaussian_blur(base.slice(z), spec.kappa());
    for (auto& p : img.pixels) p += sigma * noise(rng);
    out.set_slice(z, img);
  }
  return out;
}

void SyntheticConfig::validate() const {
  if (count == 0) throw ConfigError("synthetic count must be >= 1");
  if (profiles.empty()) throw ConfigError("at least one profile is required");
  if (levels.empty()) throw ConfigError("at least one quality level is required");
  for (double l : levels) {
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("quality levels must lie in [0, 1]");
  }
  if (image_size == 0 || depth == 0) throw ConfigError("image size and depth must be positive");
  if (!(sigma_max >= 0.0) || !(kappa_max >= 0.0)) throw ConfigError("degradation maxima must be non-negative");
  if (dose_ramp) {
    for (auto p : profiles) {
      if (p == Profile::kFundus) throw ConfigError("dose-ramp data needs CT or MR profiles");
    }
  }
}

double sample_level(const SyntheticConfig& config, std::size_t i) {
  if (config.dose_ramp) {
    const double t = config.count == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(config.count - 1);
    return (std::round(250.0 * t) / 250.0);
  }
  return config.levels[i % config.levels.size()];
}

Profile sample_profile(const SyntheticConfig& config, std::size_t i) {
  const std::size_t block = config.dose_ramp ? 1 : config.levels.size();
  return config.profiles[(i / block) % config.profiles.size()];
}

Manifest generate_synthetic(const std::string& dir, const SyntheticConfig& config) {
  config.validate();
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  if (ec) throw IoError("cannot create '" + dir + "/images': " + ec.message());

  const bool volumetric = config.depth > 1;
  const std::uint64_t data_seed = derive_seed(config.seed, "data");
  Manifest manifest;
  manifest.root = dir;
  std::vector<DicomMeta> metas;
  for (std::size_t i = 0; i < config.count; ++i) {
    const std::uint64_t sample_seed = derive_seed(data_seed, std::to_string(i));
    auto content_rng = make_rng(sample_seed, "content");
    const Profile profile = sample_profile(config, i);
    const double level = sample_level(config, i);
    const Volume base = base_volume(profile, config.image_size, config.depth, config.empty_slices, content_rng);
    const DegradationSpec spec{level, config.sigma_max, config.kappa_max, derive_seed(sample_seed, "noise")};
    const std::string stem = sample_stem(i);
    write_volume((fs::path(dir) / "images" / stem).string(), degrade(base, spec));

    SampleRecord r;
    r.path = "images/" + stem + ".raw";
    r.label = level;
    r.fields = profile_fields(profile, volumetric);
    if (config.dose_ramp) {
      DicomMeta meta;
      meta.modality = std::string(to_string(profile));
      meta.body_part = profile == Profile::kCT ? "CHEST" : "BRAIN";
      if (profile == Profile::kCT) {
        meta.exposure_mAs = kMinExposure + std::round((kMaxExposure - kMinExposure) * level);
      } else {
        meta.field_strength_T = std::round((kMinField + (kMaxField - kMinField) * level) * 1000.0) / 1000.0;
      }
      const std::string dcm = (fs::path(dir) / "images" / (stem + ".dcm")).string();
      write_dicom_meta(dcm, meta);
      metas.push_back(read_dicom_meta(dcm));
      r.label_kind = LabelKind::kPhysical;
    }
    manifest.records.push_back(std::move(r));
  }

  if (config.dose_ramp) {
    // Labels come from the parsed headers, normalized per parameter over the set.
    ParameterRange exposure{1e300, -1e300}, field{1e300, -1e300};
    for (const auto& m : metas) {
      auto& range = parameter_for_modality(m.modality) == PhysicalParameter::kExposure ? exposure : field;
      const double v = *parameter_value(m);
      range.min = std::min(range.min, v);
      range.max = std::max(range.max, v);
    }
    for (std::size_t i = 0; i < metas.size(); ++i) {
      const bool ct = parameter_for_modality(metas[i].modality) == PhysicalParameter::kExposure;
      manifest.records[i].label = physical_label(metas[i], ct ? exposure : field);
    }
  }

  split_dataset(manifest.records, config.ratios, config.seed);
  write_manifest((fs::path(dir) / "manifest.csv").string(), manifest);
  return manifest;
}

}  // namespace mediqa::data
