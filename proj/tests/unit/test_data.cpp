#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "mediqa/data/dicom.hpp"
#include "mediqa/data/manifest.hpp"
#include "mediqa/data/synthetic.hpp"
#include "mediqa/data/volume_io.hpp"
#include "mediqa/error.hpp"
#include "support.hpp"

namespace {

using namespace mediqa;
using namespace mediqa::data;
using mediqa::test::TempDir;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<SampleRecord> records(std::size_t n, std::size_t levels = 5) {
  std::vector<SampleRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].path = "s" + std::to_string(i);
    out[i].label = static_cast<double>(i % levels) / static_cast<double>(levels - 1);
  }
  return out;
}

TEST(VolumeIo, RoundTrip) {
  TempDir dir;
  Volume v(3, 4, 2);
  for (std::size_t i = 0; i < v.voxels().size(); ++i) v.voxels()[i] = static_cast<float>(i) * 0.5f - 3.0f;
  write_volume(dir.str("vol.raw"), v);
  EXPECT_EQ(slurp(dir.str("vol.hdr")), "3 4 2\n");
  const Volume back = read_volume(dir.str("vol"));
  EXPECT_EQ(back.height(), 3u);
  EXPECT_EQ(back.width(), 4u);
  EXPECT_EQ(back.depth(), 2u);
  EXPECT_EQ(back.voxels(), v.voxels());
  EXPECT_EQ(back.at(2, 3, 1), v.at(2, 3, 1));
}

TEST(VolumeIo, ShortRawIsRejected) {
  TempDir dir;
  write_volume(dir.str("v"), Volume(2, 2, 2));
  std::filesystem::resize_file(dir.str("v.raw"), 12);
  EXPECT_THROW(read_volume(dir.str("v")), IoError);
  EXPECT_THROW(read_volume(dir.str("nothing")), IoError);
  EXPECT_EQ(volume_stem("a/b.hdr"), "a/b");
  EXPECT_EQ(volume_stem("a/b.raw"), "a/b");
}

TEST(VolumeIo, ExtentsValidated) {
  EXPECT_THROW(Volume(0, 2, 2), DimensionError);
  EXPECT_THROW(Volume(2, 2, 2, std::vector<float>(7)), DimensionError);
}

TEST(Manifest, RoundTripKeepsEveryField) {
  TempDir dir;
  Manifest m;
  SampleRecord a;
  a.path = "images/a";
  a.label = 1.0 / 3.0;
  a.fields = prompt::parse_fields("3D", "CT", "chest", "soft-tissue-window");
  a.split = Split::kVal;
  SampleRecord b;
  b.path = "/abs/b";
  b.label = 0.0;
  b.label_kind = LabelKind::kPhysical;
  m.records = {a, b};
  write_manifest(dir.str("m.csv"), m);
  const Manifest back = read_manifest(dir.str("m.csv"));
  EXPECT_EQ(back.records, m.records);
  EXPECT_EQ(back.resolve(back.records[0]), (dir.path() / "images/a").string());
  EXPECT_EQ(back.resolve(back.records[1]), "/abs/b");
  EXPECT_EQ(slurp(dir.str("m.csv")).substr(0, kManifestHeader.size()), kManifestHeader);
}

TEST(Manifest, BadRowsRejected) {
  TempDir dir;
  auto write = [&](const std::string& text) {
    std::ofstream(dir.str("m.csv")) << text;
    return dir.str("m.csv");
  };
  const std::string h = std::string(kManifestHeader) + "\n";
  EXPECT_THROW(read_manifest(write(h + "a,0.5,expert,2D,CT,chest\n")), IoError);
  EXPECT_THROW(read_manifest(write(h + "a,1.5,expert,2D,CT,chest,none,\n")), ContractError);
  EXPECT_THROW(read_manifest(write(h + "a,0.5,expert,2D,PET,chest,none,\n")), VocabularyError);
  EXPECT_THROW(read_manifest(write("wrong\n")), IoError);
}

TEST(Split, Counts) {
  EXPECT_EQ(split_counts(100, kDefaultRatios), (std::array<std::size_t, 3>{80, 10, 10}));
  EXPECT_EQ(split_counts(10, kDefaultRatios), (std::array<std::size_t, 3>{8, 1, 1}));
  EXPECT_EQ(split_counts(12, kDefaultRatios), (std::array<std::size_t, 3>{10, 1, 1}));
  EXPECT_EQ(split_counts(500, kDefaultRatios), (std::array<std::size_t, 3>{400, 50, 50}));
  EXPECT_THROW(split_counts(2, kDefaultRatios), ContractError);
}

TEST(Split, SizesAndDeterminism) {
  for (std::size_t n : {10u, 12u, 37u, 100u}) {
    auto a = records(n), b = records(n);
    split_dataset(a, kDefaultRatios, 4);
    split_dataset(b, kDefaultRatios, 4);
    EXPECT_EQ(a, b);
    const auto want = split_counts(n, kDefaultRatios);
    std::map<Split, std::size_t> got;
    for (const auto& r : a) ++got[r.split];
    EXPECT_EQ(got[Split::kTrain], want[0]);
    EXPECT_EQ(got[Split::kVal], want[1]);
    EXPECT_EQ(got[Split::kTest], want[2]);
    EXPECT_EQ(got[Split::kNone], 0u);
  }
  auto a = records(100), c = records(100);
  split_dataset(a, kDefaultRatios, 1);
  split_dataset(c, kDefaultRatios, 2);
  EXPECT_NE(a, c);
}

TEST(Split, StratifiedLevelsReachEverySplit) {
  auto r = records(500);
  split_dataset(r, kDefaultRatios, 9);
  std::map<std::pair<Split, double>, std::size_t> cells;
  for (const auto& s : r) ++cells[{s.split, s.label}];
  for (double level : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    EXPECT_EQ((cells[{Split::kTrain, level}]), 80u);
    EXPECT_EQ((cells[{Split::kVal, level}]), 10u);
    EXPECT_EQ((cells[{Split::kTest, level}]), 10u);
  }
}

TEST(Synthetic, TopLevelEqualsBase) {
  Rng a(3), b(3);
  const Volume base = base_volume(Profile::kCT, 32, 1, 0, a);
  const Volume again = base_volume(Profile::kCT, 32, 1, 0, b);
  EXPECT_EQ(base.voxels(), again.voxels());
  DegradationSpec spec;
  spec.level = 1.0;
  EXPECT_EQ(degrade(base, spec).voxels(), base.voxels());
}

TEST(Synthetic, DeviationShrinksWithLevel) {
  for (Profile p : {Profile::kCT, Profile::kMR, Profile::kFundus}) {
    Rng rng(8);
    const Volume base = base_volume(p, 32, 1, 0, rng);
    double previous = std::numeric_limits<double>::infinity();
    for (double level : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      DegradationSpec spec;
      spec.level = level;
      spec.seed = 11;
      const Volume d = degrade(base, spec);
      double dev = 0.0;
      for (std::size_t i = 0; i < d.voxels().size(); ++i)
        dev += std::pow(d.voxels()[i] - base.voxels()[i], 2);
      EXPECT_LE(dev, previous) << to_string(p) << " level " << level;
      previous = dev;
    }
    EXPECT_EQ(previous, 0.0);
  }
}

TEST(Synthetic, SameSeedSameVolume) {
  DegradationSpec spec;
  spec.level = 0.3;
  spec.seed = 5;
  Rng a(1), b(1);
  EXPECT_EQ(degrade(base_volume(Profile::kMR, 16, 9, 2, a), spec).voxels(),
            degrade(base_volume(Profile::kMR, 16, 9, 2, b), spec).voxels());
}

TEST(Synthetic, EmptySlicesAtBothEnds) {
  Rng rng(2);
  const Volume v = base_volume(Profile::kCT, 16, 12, 3, rng);
  for (std::size_t z : {0u, 1u, 2u, 9u, 10u, 11u}) {
    const Image2D s = v.slice(z);
    EXPECT_EQ(*std::max_element(s.pixels.begin(), s.pixels.end()), 0.0) << z;
  }
  const Image2D mid = v.slice(6);
  EXPECT_GT(*std::max_element(mid.pixels.begin(), mid.pixels.end()), 0.0);
}

TEST(Synthetic, BlurPreservesConstantImage) {
  const Image2D flat(9, 9, 0.7);
  for (double v : gaussian_blur(flat, 1.3).pixels) EXPECT_NEAR(v, 0.7, 1e-12);
}

TEST(Synthetic, GeneratorIsDeterministic) {
  TempDir a, b;
  SyntheticConfig cfg;
  cfg.count = 12;
  cfg.image_size = 16;
  cfg.seed = 7;
  generate_synthetic(a.str(), cfg);
  generate_synthetic(b.str(), cfg);
  EXPECT_EQ(slurp(a.str("manifest.csv")), slurp(b.str("manifest.csv")));
  EXPECT_EQ(slurp(a.str("images/s0005.raw")), slurp(b.str("images/s0005.raw")));
}

TEST(Synthetic, DoseRampLabelsComeFromHeaders) {
  TempDir dir;
  SyntheticConfig cfg;
  cfg.count = 20;
  cfg.image_size = 16;
  cfg.dose_ramp = true;
  cfg.profiles = {Profile::kCT, Profile::kMR};
  const Manifest m = generate_synthetic(dir.str(), cfg);
  ASSERT_EQ(m.records.size(), 20u);
  std::map<bool, std::pair<double, double>> range{{true, {1e9, -1e9}}, {false, {1e9, -1e9}}};
  std::vector<double> raw;
  for (const auto& r : m.records) {
    const auto meta = read_dicom_meta(volume_stem(m.resolve(r)) + ".dcm");
    const bool ct = r.fields.modality == prompt::Modality::kCT;
    ASSERT_TRUE(ct ? meta.exposure_mAs.has_value() : meta.field_strength_T.has_value());
    const double v = ct ? *meta.exposure_mAs : *meta.field_strength_T;
    EXPECT_GE(v, ct ? kMinExposure : kMinField);
    EXPECT_LE(v, ct ? kMaxExposure : kMaxField);
    raw.push_back(v);
    range[ct].first = std::min(range[ct].first, v);
    range[ct].second = std::max(range[ct].second, v);
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto& r = m.records[i];
    EXPECT_EQ(r.label_kind, LabelKind::kPhysical);
    const auto [lo, hi] = range[r.fields.modality == prompt::Modality::kCT];
    EXPECT_NEAR(r.label, (raw[i] - lo) / (hi - lo), 1e-12);
  }
}

TEST(Synthetic, ProfileFields) {
  const auto ct = profile_fields(Profile::kCT, true);
  EXPECT_EQ(ct.dim, prompt::Dim::k3D);
  EXPECT_EQ(ct.region, prompt::Region::kChest);
  EXPECT_EQ(profile_fields(Profile::kFundus, false).type, prompt::ImageType::kColorFundus);
  EXPECT_EQ(profile_fields(Profile::kMR, false).modality, prompt::Modality::kMR);
}

}  // namespace
