#include "mediqa/data/volume_io.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "mediqa/error.hpp"

namespace mediqa {

static_assert(std::endian::native == std::endian::little, "raw volume I/O assumes little-endian host");

Volume::Volume(std::size_t height, std::size_t width, std::size_t depth)
    : Volume(height, width, depth, std::vector<float>(height * width * depth, 0.0f)) {}

Volume::Volume(std::size_t height, std::size_t width, std::size_t depth, std::vector<float> voxels)
    : height_(height), width_(width), depth_(depth), voxels_(std::move(voxels)) {
  if (height == 0 || width == 0 || depth == 0) {
    throw DimensionError("volume extents must be positive, got " + std::to_string(height) + "x" +
                         std::to_string(width) + "x" + std::to_string(depth));
  }
  if (voxels_.size() != height * width * depth) {
    throw DimensionError("volume " + std::to_string(height) + "x" + std::to_string(width) + "x" +
                         std::to_string(depth) + " needs " + std::to_string(height * width * depth) +
                         " voxels, got " + std::to_string(voxels_.size()));
  }
}

Image2D Volume::slice(std::size_t z) const {
  if (z >= depth_) throw ContractError("slice " + std::to_string(z) + " out of range for depth " + std::to_string(depth_));
  Image2D img(height_, width_);
  const float* src = voxels_.data() + z * height_ * width_;
  for (std::size_t i = 0; i < height_ * width_; ++i) img.pixels[i] = src[i];
  return img;
}

void Volume::set_slice(std::size_t z, const Image2D& image) {
  if (z >= depth_) throw ContractError("slice " + std::to_string(z) + " out of range for depth " + std::to_string(depth_));
  if (image.height != height_ || image.width != width_) {
    throw DimensionError("slice shape does not match volume");
  }
  float* dst = voxels_.data() + z * height_ * width_;
  for (std::size_t i = 0; i < height_ * width_; ++i) dst[i] = static_cast<float>(image.pixels[i]);
}

namespace data {

std::string volume_stem(const std::string& path) {
  for (const char* ext : {".raw", ".hdr"}) {
    if (path.size() > 4 && path.compare(path.size() - 4, 4, ext) == 0) return path.substr(0, path.size() - 4);
  }
  return path;
}

void write_volume(const std::string& path, const Volume& volume) {
  const std::string stem = volume_stem(path);
  {
    std::ofstream hdr(stem + ".hdr", std::ios::trunc);
    if (!hdr) throw IoError("cannot write '" + stem + ".hdr'");
    hdr << volume.height() << ' ' << volume.width() << ' ' << volume.depth() << '\n';
    if (!hdr) throw IoError("failed writing '" + stem + ".hdr'");
  }
  std::ofstream raw(stem + ".raw", std::ios::binary | std::ios::trunc);
  if (!raw) throw IoError("cannot write '" + stem + ".raw'");
  raw.write(reinterpret_cast<const char*>(volume.voxels().data()),
            static_cast<std::streamsize>(volume.voxels().size() * sizeof(float)));
  if (!raw) throw IoError("failed writing '" + stem + ".raw'");
}

Volume read_volume(const std::string& path) {
  const std::string stem = volume_stem(path);
  std::ifstream hdr(stem + ".hdr");
  if (!hdr) throw IoError("cannot open '" + stem + ".hdr'");
  std::string line;
  std::getline(hdr, line);
  std::istringstream fields(line);
  long long h = 0, w = 0, d = 0;
  std::string extra;
  if (!(fields >> h >> w >> d) || (fields >> extra) || h <= 0 || w <= 0 || d <= 0) {
    throw IoError("'" + stem + ".hdr' must hold three positive extents \"H W D\"");
  }
  const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(d);
  std::ifstream raw(stem + ".raw", std::ios::binary | std::ios::ate);
  if (!raw) throw IoError("cannot open '" + stem + ".raw'");
  const auto bytes = static_cast<std::size_t>(raw.tellg());
  if (bytes != n * sizeof(float)) {
    throw IoError("'" + stem + ".raw' holds " + std::to_string(bytes) + " bytes, header implies " +
                  std::to_string(n * sizeof(float)));
  }
  raw.seekg(0);
  std::vector<float> voxels(n);
  raw.read(reinterpret_cast<char*>(voxels.data()), static_cast<std::streamsize>(bytes));
  if (!raw) throw IoError("failed reading '" + stem + ".raw'");
  return Volume(static_cast<std::size_t>(h), static_cast<std::size_t>(w), static_cast<std::size_t>(d),
                std::move(voxels));
}

}  // namespace data
}  // namespace mediqa
