#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mediqa/prompt.hpp"

namespace mediqa::data {

enum class Split { kNone, kTrain, kVal, kTest };
enum class LabelKind { kPhysical, kExpert };

std::string_view to_string(Split split);
std::string_view to_string(LabelKind kind);
Split parse_split(std::string_view s);  // "" -> kNone
LabelKind parse_label_kind(std::string_view s);

struct SampleRecord {
  std::string path;  // relative to the manifest directory unless absolute
  double label = 0.0;
  LabelKind label_kind = LabelKind::kExpert;
  prompt::PromptFields fields;
  Split split = Split::kNone;
  bool operator==(const SampleRecord&) const = default;
};

struct Manifest {
  std::string root;  // directory relative paths resolve against
  std::vector<SampleRecord> records;

  std::string resolve(const SampleRecord& record) const;
  std::vector<SampleRecord> subset(Split split) const;
  std::size_t count(Split split) const;
};

inline constexpr std::string_view kManifestHeader = "path,label,label_kind,dim,modality,region,type,split";

/// CSV with header `path,label,label_kind,dim,modality,region,type,split`.
void write_manifest(const std::string& path, const Manifest& manifest);
Manifest read_manifest(const std::string& path);
std::string format_manifest(const Manifest& manifest);

/// Ratios for train, val, test.
using SplitRatios = std::array<double, 3>;
inline constexpr SplitRatios kDefaultRatios{0.8, 0.1, 0.1};

/// Split sizes: floor(n * r) for val and test, the remainder to train; a
/// split with a positive ratio gets at least one sample, taken from train.
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios);

/// Seeded shuffled assignment with split_counts sizes. Labels with at most
/// 20 distinct values, each seen at least twice, are stratified: every level
/// is spread over the splits in proportion.
void split_dataset(std::vector<SampleRecord>& records, const SplitRatios& ratios, std::uint64_t seed);

}  // namespace mediqa::data
