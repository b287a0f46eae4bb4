#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mediqa::data {

/// The handful of acquisition tags used as quality labels.
struct DicomMeta {
  std::string modality;                    // (0008,0060)
  std::string body_part;                   // (0018,0015)
  std::optional<double> exposure_mAs;      // (0018,1152)
  std::optional<double> field_strength_T;  // (0018,0087)

  bool pretraining_usable() const { return exposure_mAs || field_strength_T; }
};

/// Parses a DICOM Part-10 stream in Explicit VR Little Endian and extracts
/// the tags above. Walking stops at pixel data. Never reads past the
/// declared element lengths; malformed input raises DicomParseError.
DicomMeta parse_dicom_meta(std::span<const std::uint8_t> bytes);
DicomMeta read_dicom_meta(const std::string& path);

/// Writes a minimal Part-10 header (meta group plus the tags above, no
/// pixel data). Used for fixtures and the synthetic generator.
std::vector<std::uint8_t> encode_dicom_meta(const DicomMeta& meta);
void write_dicom_meta(const std::string& path, const DicomMeta& meta);

struct ParameterRange {
  double min = 0.0;
  double max = 0.0;
};

/// Which physical parameter carries quality for a modality: exposure for
/// CT, field strength for MR.
enum class PhysicalParameter { kExposure, kFieldStrength };
PhysicalParameter parameter_for_modality(const std::string& modality);
std::optional<double> parameter_value(const DicomMeta& meta);

/// Min-max normalizes the modality's parameter into [0, 1].
double physical_label(const DicomMeta& meta, const ParameterRange& range);

}  // namespace mediqa::data
