#include "mediqa/salient.hpp"

#include <algorithm>
#include <cmath>

#include "mediqa/error.hpp"

namespace mediqa::salient {

ZRange trim_volume(const Volume& volume, double fg_threshold, double min_fg_ratio) {
  if (fg_threshold < 0.0 || fg_threshold > 1.0 || min_fg_ratio < 0.0 || min_fg_ratio > 1.0) {
    throw ContractError("trim_volume: thresholds must lie in [0, 1]");
  }
  const ZRange full{0, volume.depth()};
  const auto& vox = volume.voxels();
  if (vox.empty()) return full;
  const auto [mn_it, mx_it] = std::minmax_element(vox.begin(), vox.end());
  const double mn = *mn_it;
  const double range = static_cast<double>(*mx_it) - mn;

  const std::size_t plane = volume.height() * volume.width();
  std::size_t lo = volume.depth();
  std::size_t hi = 0;
  for (std::size_t z = 0; z < volume.depth(); ++z) {
    std::size_t fg = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double norm = range > 0.0 ? (vox[z * plane + i] - mn) / range : 0.0;
      if (norm >= fg_threshold) ++fg;
    }
    const double ratio = static_cast<double>(fg) / static_cast<double>(plane);
    if (ratio >= min_fg_ratio) {
      lo = std::min(lo, z);
      hi = z + 1;
    }
  }
  if (hi == 0) return full;
  return {lo, hi};
}

RegionPartition partition_and_select(std::size_t depth) {
  if (depth == 0) throw ContractError("partition_and_select: depth must be >= 1");
  RegionPartition p;
  for (std::size_t i = 0; i <= kRegions; ++i) p.boundaries[i] = i * depth / kRegions;
  for (std::size_t i = 0; i < kRegions; ++i) {
    if (depth >= kRegions) {
      const std::size_t lo = p.boundaries[i];
      const std::size_t len = p.boundaries[i + 1] - lo;
      p.indices[i] = lo + len / 2;
    } else {
      p.indices[i] = i % depth;
    }
  }
  return p;
}

Image2D normalize_resize(const Image2D& slice, std::size_t target) {
  if (target == 0) throw ContractError("normalize_resize: target must be >= 1");
  if (slice.pixels.empty()) throw DimensionError("normalize_resize: empty slice");
  const auto [mn_it, mx_it] = std::minmax_element(slice.pixels.begin(), slice.pixels.end());
  const double mn = *mn_it;
  const double range = *mx_it - mn;

  Image2D norm(slice.height, slice.width);
  if (range > 0.0) {
    for (std::size_t i = 0; i < slice.pixels.size(); ++i) {
      norm.pixels[i] = std::clamp((slice.pixels[i] - mn) / range, 0.0, 1.0);
    }
  }

  Image2D out(target, target);
  // Corner-aligned mapping keeps the four corners on source samples.
  auto source_coord = [target](std::size_t dst, std::size_t src_len) {
    if (target == 1) return 0.5 * static_cast<double>(src_len - 1);
    return static_cast<double>(dst) * static_cast<double>(src_len - 1) /
           static_cast<double>(target - 1);
  };
  for (std::size_t y = 0; y < target; ++y) {
    const double sy = source_coord(y, slice.height);
    const std::size_t y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, slice.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < target; ++x) {
      const double sx = source_coord(x, slice.width);
      const std::size_t x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, slice.width - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = norm.at(y0, x0) * (1.0 - fx) + norm.at(y0, x1) * fx;
      const double bottom = norm.at(y1, x0) * (1.0 - fx) + norm.at(y1, x1) * fx;
      out.at(y, x) = std::clamp(top * (1.0 - fy) + bottom * fy, 0.0, 1.0);
    }
  }
  return out;
}

SliceSelection select_salient_slices(const Volume& volume, const SalientConfig& config) {
  SliceSelection sel;
  sel.kept = trim_volume(volume, config.fg_threshold, config.min_fg_ratio);
  const auto part = partition_and_select(sel.kept.size());
  sel.boundaries = part.boundaries;
  sel.slices.reserve(kRegions);
  for (std::size_t i = 0; i < kRegions; ++i) {
    sel.indices[i] = sel.kept.lo + part.indices[i];
    sel.slices.push_back(normalize_resize(volume.slice(sel.indices[i]), config.target_size));
  }
  return sel;
}

}  // namespace mediqa::salient
