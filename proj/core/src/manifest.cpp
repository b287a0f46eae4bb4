#include "mediqa/data/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "mediqa/error.hpp"
#include "mediqa/rng.hpp"

namespace mediqa::data {

namespace fs = std::filesystem;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kNone: return "";
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "";
}

std::string_view to_string(LabelKind kind) { return kind == LabelKind::kPhysical ? "physical" : "expert"; }

Split parse_split(std::string_view s) {
  if (s.empty()) return Split::kNone;
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw VocabularyError("unknown split '" + std::string(s) + "'; valid values: train, val, test");
}

LabelKind parse_label_kind(std::string_view s) {
  if (s == "physical") return LabelKind::kPhysical;
  if (s == "expert") return LabelKind::kExpert;
  throw VocabularyError("unknown label_kind '" + std::string(s) + "'; valid values: physical, expert");
}

std::string Manifest::resolve(const SampleRecord& record) const {
  const fs::path p(record.path);
  if (p.is_absolute() || root.empty()) return p.string();
  return (fs::path(root) / p).string();
}

std::vector<SampleRecord> Manifest::subset(Split split) const {
  std::vector<SampleRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [split](const SampleRecord& r) { return r.split == split; });
  return out;
}

std::size_t Manifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(),
                                                [split](const SampleRecord& r) { return r.split == split; }));
}

std::string format_manifest(const Manifest& manifest) {
  std::string out(kManifestHeader);
  out += '\n';
  char label[40];
  for (const auto& r : manifest.records) {
    if (r.path.find_first_of(",\n\"") != std::string::npos) {
      throw ContractError("manifest path '" + r.path + "' contains a comma, quote or newline");
    }
    std::snprintf(label, sizeof label, "%.17g", r.label);
    out += r.path + ',' + label + ',' + std::string(to_string(r.label_kind)) + ',' +
           prompt::describe(r.fields) + ',' + std::string(to_string(r.split)) + '\n';
  }
  return out;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  const std::string text = format_manifest(manifest);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  out << text;
  if (!out) throw IoError("failed writing manifest '" + path + "'");
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  Manifest m;
  m.root = fs::path(path).parent_path().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kManifestHeader) {
        throw IoError("manifest '" + path + "' header must be '" + std::string(kManifestHeader) + "'");
      }
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (!line.empty() && line.back() == ',') cols.emplace_back();
    if (cols.size() != 8) {
      throw IoError("manifest '" + path + "' line " + std::to_string(line_no) + ": expected 8 columns, got " +
                    std::to_string(cols.size()));
    }
    SampleRecord r;
    r.path = cols[0];
    try {
      std::size_t used = 0;
      r.label = std::stod(cols[1], &used);
      if (used != cols[1].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw IoError("manifest '" + path + "' line " + std::to_string(line_no) + ": bad label '" + cols[1] + "'");
    }
    if (!(r.label >= 0.0 && r.label <= 1.0)) {
      throw ContractError("manifest '" + path + "' line " + std::to_string(line_no) + ": label " + cols[1] +
                          " outside [0, 1]");
    }
    r.label_kind = parse_label_kind(cols[2]);
    r.fields = prompt::parse_fields(cols[3], cols[4], cols[5], cols[6]);
    r.split = parse_split(cols[7]);
    m.records.push_back(std::move(r));
  }
  if (line_no == 0) throw IoError("manifest '" + path + "' is empty");
  return m;
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  std::size_t required = 0;
  for (double r : ratios) required += r > 0.0 ? 1 : 0;
  if (n < required) {
    throw ContractError(std::to_string(n) + " samples cannot fill " + std::to_string(required) + " splits");
  }
  std::array<std::size_t, 3> counts{};
  for (std::size_t s = 1; s < 3; ++s) {
    counts[s] = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[s] + 1e-9));
    if (ratios[s] > 0.0 && counts[s] == 0) counts[s] = 1;
  }
  counts[0] = n - counts[1] - counts[2];
  if (ratios[0] > 0.0 && counts[0] == 0) {
    // Only reachable with tiny n; borrow from the larger of val/test.
    auto& donor = counts[1] >= counts[2] ? counts[1] : counts[2];
    --donor;
    counts[0] = 1;
  }
  return counts;
}

namespace {

bool discrete_labels(const std::vector<SampleRecord>& records, std::map<double, std::vector<std::size_t>>& strata) {
  for (std::size_t i = 0; i < records.size(); ++i) strata[records[i].label].push_back(i);
  if (strata.size() > 20) return false;
  return std::all_of(strata.begin(), strata.end(), [](const auto& kv) { return kv.second.size() >= 2; });
}

}  // namespace

void split_dataset(std::vector<SampleRecord>& records, const SplitRatios& ratios, std::uint64_t seed) {
  const std::size_t n = records.size();
  const auto counts = split_counts(n, ratios);
  auto rng = make_rng(seed, "split");

  std::vector<std::size_t> order;
  std::map<double, std::vector<std::size_t>> strata;
  const bool stratify = discrete_labels(records, strata);
  if (stratify) {
    for (auto& [label, members] : strata) {
      std::shuffle(members.begin(), members.end(), rng);
      order.insert(order.end(), members.begin(), members.end());
    }
  } else {
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
  }

  static constexpr Split kSplits[3] = {Split::kTrain, Split::kVal, Split::kTest};
  std::array<std::size_t, 3> assigned{};
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t pick = 0;
    if (stratify) {
      // Largest deficit against the ideal running share keeps each stratum
      // close to the global proportions.
      double best = -1e300;
      for (std::size_t s = 0; s < 3; ++s) {
        if (assigned[s] >= counts[s]) continue;
        const double deficit = static_cast<double>(counts[s]) * static_cast<double>(j + 1) / static_cast<double>(n) -
                               static_cast<double>(assigned[s]);
        if (deficit > best) {
          best = deficit;
          pick = s;
        }
      }
    } else {
      pick = j < counts[0] ? 0 : (j < counts[0] + counts[1] ? 1 : 2);
    }
    ++assigned[pick];
    records[order[j]].split = kSplits[pick];
  }
}

}  // namespace mediqa::data
