#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "mediqa/image.hpp"

namespace mediqa::salient {

inline constexpr std::size_t kRegions = 7;

struct SalientConfig {
  double fg_threshold = 0.05;
  double min_fg_ratio = 0.01;
  std::size_t target_size = 64;
};

/// Half-open slice range [lo, hi).
struct ZRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
  std::size_t size() const { return hi - lo; }
  bool operator==(const ZRange&) const = default;
};

/// Smallest contiguous range holding every slice whose fraction of voxels
/// with globally min-max normalized intensity >= fg_threshold reaches
/// min_fg_ratio. Falls back to the full range when no slice qualifies.
ZRange trim_volume(const Volume& volume, double fg_threshold, double min_fg_ratio);

/// Region cut points v_0..v_7 (v_i = floor(i*D/7)) and the middle slice of
/// each region, as indices local to the trimmed stack. For D < 7 the
/// available indices repeat cyclically.
struct RegionPartition {
  std::array<std::size_t, kRegions + 1> boundaries{};
  std::array<std::size_t, kRegions> indices{};
};
RegionPartition partition_and_select(std::size_t depth);

/// Min-max normalizes to [0, 1] (constant input maps to zeros), then
/// resamples to target x target with corner-aligned bilinear interpolation.
Image2D normalize_resize(const Image2D& slice, std::size_t target);

struct SliceSelection {
  ZRange kept;
  std::array<std::size_t, kRegions + 1> boundaries{};
  std::array<std::size_t, kRegions> indices{};  // global Z indices
  std::vector<Image2D> slices;                  // kRegions normalized slices
};

SliceSelection select_salient_slices(const Volume& volume, const SalientConfig& config = {});

}  // namespace mediqa::salient
