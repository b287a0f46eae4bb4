#pragma once

#include <string>

#include "mediqa/image.hpp"

namespace mediqa::data {

/// Raw format: `<stem>.raw` holds little-endian float32 voxels, slice-major;
/// `<stem>.hdr` holds one line "H W D". `path` may name either file or the
/// bare stem.
void write_volume(const std::string& path, const Volume& volume);
Volume read_volume(const std::string& path);

/// Strips a trailing ".raw" or ".hdr".
std::string volume_stem(const std::string& path);

}  // namespace mediqa::data
