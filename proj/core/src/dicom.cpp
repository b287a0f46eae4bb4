#include "mediqa/data/dicom.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mediqa/error.hpp"

namespace mediqa::data {

namespace {

constexpr std::size_t kPreamble = 128;
constexpr std::size_t kMaxNesting = 32;
constexpr std::string_view kExplicitLittle = "1.2.840.10008.1.2.1";

constexpr std::uint32_t tag(std::uint16_t group, std::uint16_t element) {
  return (static_cast<std::uint32_t>(group) << 16) | element;
}

constexpr std::uint32_t kTransferSyntax = tag(0x0002, 0x0010);
constexpr std::uint32_t kModality = tag(0x0008, 0x0060);
constexpr std::uint32_t kBodyPart = tag(0x0018, 0x0015);
constexpr std::uint32_t kFieldStrength = tag(0x0018, 0x0087);
constexpr std::uint32_t kExposure = tag(0x0018, 0x1152);
constexpr std::uint32_t kPixelData = tag(0x7FE0, 0x0010);
constexpr std::uint32_t kItem = tag(0xFFFE, 0xE000);
constexpr std::uint32_t kItemEnd = tag(0xFFFE, 0xE00D);
constexpr std::uint32_t kSequenceEnd = tag(0xFFFE, 0xE0DD);
constexpr std::uint32_t kUndefined = 0xFFFFFFFFu;

bool long_vr(std::string_view vr) {
  static constexpr std::string_view kLong[] = {"OB", "OD", "OF", "OL", "OV", "OW", "SQ",
                                               "SV", "UC", "UN", "UR", "UT", "UV"};
  return std::find(std::begin(kLong), std::end(kLong), vr) != std::end(kLong);
}

std::string tag_string(std::uint32_t t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "(%04X,%04X)", t >> 16, t & 0xFFFF);
  return buf;
}

std::string trim(std::string_view s) {
  const auto junk = [](char c) { return c == ' ' || c == '\0' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && junk(s.front())) s.remove_prefix(1);
  while (!s.empty() && junk(s.back())) s.remove_suffix(1);
  return std::string(s);
}

struct Element {
  std::uint32_t tag = 0;
  std::string vr;
  std::uint32_t length = 0;
  std::size_t offset = 0;  // start of the element header
  std::size_t value = 0;   // start of the value
};

class Walker {
 public:
  explicit Walker(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  DicomMeta run() {
    if (bytes_.size() < kPreamble + 4 || std::memcmp(bytes_.data() + kPreamble, "DICM", 4) != 0) {
      throw NotDicomError("missing 128-byte preamble and \"DICM\" magic");
    }
    pos_ = kPreamble + 4;
    while (pos_ < bytes_.size()) {
      const Element e = read_element();
      if (e.tag == kPixelData) break;
      if (e.length == kUndefined) {
        skip_undefined(e, 0);
        continue;
      }
      handle(e);
      pos_ = e.value + e.length;
    }
    return meta_;
  }

 private:
  std::uint16_t u16(std::size_t at) const {
    return static_cast<std::uint16_t>(bytes_[at] | (bytes_[at + 1] << 8));
  }
  std::uint32_t u32(std::size_t at) const {
    return static_cast<std::uint32_t>(u16(at)) | (static_cast<std::uint32_t>(u16(at + 2)) << 16);
  }

  void need(std::size_t at, std::size_t n, std::size_t offset, const std::string& what) const {
    if (at > bytes_.size() || bytes_.size() - at < n) {
      throw DicomParseError(offset, "truncated " + what);
    }
  }

  std::uint32_t read_tag(std::size_t at) const {
    need(at, 4, at, "element tag");
    return tag(u16(at), u16(at + 2));
  }

  Element read_element() {
    Element e;
    e.offset = pos_;
    e.tag = read_tag(pos_);
    if ((e.tag >> 16) == 0xFFFE) {
      need(pos_ + 4, 4, e.offset, "item header");
      e.length = u32(pos_ + 4);
      e.value = pos_ + 8;
    } else {
      need(pos_ + 4, 2, e.offset, "value representation of " + tag_string(e.tag));
      e.vr.assign(reinterpret_cast<const char*>(bytes_.data() + pos_ + 4), 2);
      if (!std::isupper(static_cast<unsigned char>(e.vr[0])) ||
          !std::isupper(static_cast<unsigned char>(e.vr[1]))) {
        throw DicomParseError(e.offset, "invalid value representation for " + tag_string(e.tag) +
                                            " (implicit VR data is unsupported)");
      }
      if (long_vr(e.vr)) {
        need(pos_ + 6, 6, e.offset, "length of " + tag_string(e.tag));
        e.length = u32(pos_ + 8);
        e.value = pos_ + 12;
      } else {
        need(pos_ + 6, 2, e.offset, "length of " + tag_string(e.tag));
        e.length = u16(pos_ + 6);
        e.value = pos_ + 8;
      }
    }
    if (e.length != kUndefined && (e.value > bytes_.size() || bytes_.size() - e.value < e.length)) {
      throw DicomParseError(e.offset, "element " + tag_string(e.tag) + " declares length " +
                                          std::to_string(e.length) + " past end of data");
    }
    pos_ = e.value;
    return e;
  }

  // Consumes an undefined-length sequence or item, leaving pos_ after its
  // delimiter.
  void skip_undefined(const Element& e, std::size_t depth) {
    if (depth >= kMaxNesting) throw DicomParseError(e.offset, "sequences nested too deeply");
    pos_ = e.value;
    const bool is_item = e.tag == kItem;
    const std::uint32_t end = is_item ? kItemEnd : kSequenceEnd;
    while (true) {
      if (pos_ >= bytes_.size()) throw DicomParseError(pos_, "unterminated sequence " + tag_string(e.tag));
      const Element child = read_element();
      if (child.tag == end) {
        pos_ = child.value;
        return;
      }
      if (child.length == kUndefined) {
        skip_undefined(child, depth + 1);
      } else {
        pos_ = child.value + child.length;
      }
    }
  }

  std::string value_string(const Element& e) const {
    return trim({reinterpret_cast<const char*>(bytes_.data() + e.value), e.length});
  }

  double value_number(const Element& e) const {
    std::string s = value_string(e);
    if (const auto sep = s.find('\\'); sep != std::string::npos) s = trim(s.substr(0, sep));
    double out = 0.0;
    const char* first = s.data();
    if (!s.empty() && s.front() == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw DicomParseError(e.offset, "malformed numeric string '" + s + "' in " + tag_string(e.tag));
    }
    return out;
  }

  void handle(const Element& e) {
    switch (e.tag) {
      case kTransferSyntax: {
        const std::string syntax = value_string(e);
        if (syntax == "1.2.840.10008.1.2") {
          throw UnsupportedSyntaxError("implicit VR little endian transfer syntax is not supported");
        }
        if (syntax == "1.2.840.10008.1.2.2") {
          throw UnsupportedSyntaxError("explicit VR big endian transfer syntax is not supported");
        }
        if (syntax == "1.2.840.10008.1.2.1.99") {
          throw UnsupportedSyntaxError("deflated transfer syntax is not supported");
        }
        break;
      }
      case kModality: meta_.modality = value_string(e); break;
      case kBodyPart: meta_.body_part = value_string(e); break;
      case kFieldStrength: meta_.field_strength_T = value_number(e); break;
      case kExposure: meta_.exposure_mAs = value_number(e); break;
      default: break;
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  DicomMeta meta_;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  put_u16(out, static_cast<std::uint16_t>(v & 0xFFFF));
  put_u16(out, static_cast<std::uint16_t>(v >> 16));
}

void put_element(std::vector<std::uint8_t>& out, std::uint32_t t, std::string_view vr, std::string value) {
  if (value.size() % 2) value.push_back(vr == "UI" ? '\0' : ' ');
  put_u16(out, static_cast<std::uint16_t>(t >> 16));
  put_u16(out, static_cast<std::uint16_t>(t & 0xFFFF));
  out.insert(out.end(), vr.begin(), vr.end());
  if (long_vr(vr)) {
    put_u16(out, 0);
    put_u32(out, static_cast<std::uint32_t>(value.size()));
  } else {
    put_u16(out, static_cast<std::uint16_t>(value.size()));
  }
  out.insert(out.end(), value.begin(), value.end());
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

DicomMeta parse_dicom_meta(std::span<const std::uint8_t> bytes) { return Walker(bytes).run(); }

DicomMeta read_dicom_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_dicom_meta(bytes);
}

std::vector<std::uint8_t> encode_dicom_meta(const DicomMeta& meta) {
  std::vector<std::uint8_t> group2;
  put_element(group2, kTransferSyntax, "UI", std::string(kExplicitLittle));

  std::vector<std::uint8_t> out(kPreamble, 0);
  for (char c : std::string_view("DICM")) out.push_back(static_cast<std::uint8_t>(c));
  std::vector<std::uint8_t> length;
  put_u32(length, static_cast<std::uint32_t>(group2.size()));
  put_element(out, tag(0x0002, 0x0000), "UL", std::string(length.begin(), length.end()));
  out.insert(out.end(), group2.begin(), group2.end());

  if (!meta.modality.empty()) put_element(out, kModality, "CS", meta.modality);
  if (!meta.body_part.empty()) put_element(out, kBodyPart, "CS", meta.body_part);
  if (meta.field_strength_T) put_element(out, kFieldStrength, "DS", format_number(*meta.field_strength_T));
  if (meta.exposure_mAs) {
    put_element(out, kExposure, "IS", std::to_string(static_cast<long long>(std::llround(*meta.exposure_mAs))));
  }
  return out;
}

void write_dicom_meta(const std::string& path, const DicomMeta& meta) {
  const auto bytes = encode_dicom_meta(meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

PhysicalParameter parameter_for_modality(const std::string& modality) {
  if (modality == "CT") return PhysicalParameter::kExposure;
  if (modality == "MR") return PhysicalParameter::kFieldStrength;
  throw UnusableSampleError("no physical quality parameter for modality '" + modality + "'");
}

std::optional<double> parameter_value(const DicomMeta& meta) {
  return parameter_for_modality(meta.modality) == PhysicalParameter::kExposure ? meta.exposure_mAs
                                                                               : meta.field_strength_T;
}

double physical_label(const DicomMeta& meta, const ParameterRange& range) {
  const auto value = parameter_value(meta);
  if (!value) {
    throw UnusableSampleError(meta.modality == "CT" ? "CT sample lacks exposure (0018,1152)"
                                                    : "MR sample lacks field strength (0018,0087)");
  }
  if (!(range.max > range.min)) {
    throw DegenerateRangeError("parameter range [" + format_number(range.min) + ", " +
                               format_number(range.max) + "] is empty");
  }
  return std::clamp((*value - range.min) / (range.max - range.min), 0.0, 1.0);
}

}  // namespace mediqa::data
