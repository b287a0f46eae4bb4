#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "mediqa/data/dicom.hpp"

namespace mediqa {

/// Single-channel row-major image.
struct Image2D {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image2D() = default;
  Image2D(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

/// H x W x D scan. Voxels are stored slice-major: index = z*H*W + y*W + x.
/// A 2D image is a volume with D = 1.
class Volume {
 public:
  Volume() = default;
  Volume(std::size_t height, std::size_t width, std::size_t depth);
  Volume(std::size_t height, std::size_t width, std::size_t depth, std::vector<float> voxels);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t depth() const { return depth_; }
  bool is_2d() const { return depth_ == 1; }

  const std::vector<float>& voxels() const { return voxels_; }
  std::vector<float>& voxels() { return voxels_; }
  float at(std::size_t y, std::size_t x, std::size_t z) const {
    return voxels_[(z * height_ + y) * width_ + x];
  }
  float& at(std::size_t y, std::size_t x, std::size_t z) {
    return voxels_[(z * height_ + y) * width_ + x];
  }

  Image2D slice(std::size_t z) const;
  void set_slice(std::size_t z, const Image2D& image);

  std::optional<data::DicomMeta> meta;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t depth_ = 0;
  std::vector<float> voxels_;
};

}  // namespace mediqa
