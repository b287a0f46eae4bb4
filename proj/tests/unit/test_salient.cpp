#include <algorithm>
#include <array>
#include <cmath>

#include <gtest/gtest.h>

#include "mediqa/error.hpp"
#include "mediqa/salient.hpp"

namespace {

using namespace mediqa;
using namespace mediqa::salient;

Volume banded_volume(std::size_t lead, std::size_t dense, std::size_t trail) {
  const std::size_t d = lead + dense + trail;
  Volume v(8, 8, d);
  for (std::size_t z = lead; z < lead + dense; ++z)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) v.at(y, x, z) = static_cast<float>(1 + (x + y + z) % 5);
  return v;
}

// Corner-aligned bilinear sample of `img` at fractional (y, x).
double bilinear(const Image2D& img, double y, double x) {
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - y0, fx = x - x0;
  return (1 - fy) * ((1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1)) +
         fy * ((1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1));
}

TEST(Trim, DenseBandBetweenEmptySlices) {
  EXPECT_EQ(trim_volume(banded_volume(5, 20, 5), 0.05, 0.01), (ZRange{5, 25}));
}

TEST(Trim, AllZeroFallsBackToFullRange) {
  EXPECT_EQ(trim_volume(Volume(4, 4, 9), 0.05, 0.01), (ZRange{0, 9}));
}

TEST(Trim, ZeroThresholdKeepsEverySlice) {
  EXPECT_EQ(trim_volume(banded_volume(3, 4, 6), 0.0, 0.01), (ZRange{0, 13}));
}

TEST(Trim, ThresholdOutsideUnitRangeIsContractError) {
  EXPECT_THROW(trim_volume(Volume(2, 2, 2), -0.1, 0.01), ContractError);
  EXPECT_THROW(trim_volume(Volume(2, 2, 2), 0.1, 1.5), ContractError);
}

TEST(Trim, InvariantUnderIntensityScaling) {
  Volume v = banded_volume(4, 11, 2);
  Volume scaled = v;
  for (auto& x : scaled.voxels()) x *= 250.0f;
  EXPECT_EQ(trim_volume(v, 0.05, 0.01), trim_volume(scaled, 0.05, 0.01));
  EXPECT_EQ(select_salient_slices(v).indices, select_salient_slices(scaled).indices);
}

TEST(Partition, TwentyOneSlices) {
  const auto p = partition_and_select(21);
  EXPECT_EQ(p.indices, (std::array<std::size_t, 7>{1, 4, 7, 10, 13, 16, 19}));
  EXPECT_EQ(p.boundaries, (std::array<std::size_t, 8>{0, 3, 6, 9, 12, 15, 18, 21}));
}

TEST(Partition, SevenSlicesSelectsAll) {
  EXPECT_EQ(partition_and_select(7).indices, (std::array<std::size_t, 7>{0, 1, 2, 3, 4, 5, 6}));
}

TEST(Partition, ThreeSlicesRepeatCyclically) {
  EXPECT_EQ(partition_and_select(3).indices, (std::array<std::size_t, 7>{0, 1, 2, 0, 1, 2, 0}));
}

TEST(Partition, ZeroDepthIsContractError) { EXPECT_THROW(partition_and_select(0), ContractError); }

TEST(Partition, PropertiesForAllDepths) {
  for (std::size_t d = 1; d <= 200; ++d) {
    const auto p = partition_and_select(d);
    for (std::size_t s : p.indices) ASSERT_LT(s, d) << "D'=" << d;
    if (d < 7) {
      for (std::size_t i = 0; i < 7; ++i) ASSERT_EQ(p.indices[i], i % d);
      continue;
    }
    ASSERT_EQ(p.boundaries.front(), 0u);
    ASSERT_EQ(p.boundaries.back(), d);
    std::size_t covered = 0;
    for (std::size_t i = 0; i < 7; ++i) {
      const std::size_t lo = p.boundaries[i], hi = p.boundaries[i + 1];
      ASSERT_LT(lo, hi) << "D'=" << d;
      ASSERT_EQ(lo, i * d / 7);
      covered += hi - lo;
      ASSERT_GE(p.indices[i], lo);
      ASSERT_LT(p.indices[i], hi);
      ASSERT_EQ(p.indices[i], lo + (hi - lo) / 2);
      if (i) ASSERT_LT(p.indices[i - 1], p.indices[i]);
    }
    ASSERT_EQ(covered, d);
  }
}

TEST(NormalizeResize, LinearMapOfRange) {
  Image2D img(2, 2);
  img.pixels = {100, 200, 300, 150};
  const Image2D out = normalize_resize(img, 2);
  EXPECT_DOUBLE_EQ(out.pixels[0], 0.0);
  EXPECT_DOUBLE_EQ(out.pixels[1], 0.5);
  EXPECT_DOUBLE_EQ(out.pixels[2], 1.0);
  EXPECT_DOUBLE_EQ(out.pixels[3], 0.25);
}

TEST(NormalizeResize, ConstantSliceGivesZeros) {
  const Image2D out = normalize_resize(Image2D(3, 5, 7.0), 4);
  EXPECT_EQ(out.height, 4u);
  EXPECT_EQ(out.width, 4u);
  for (double v : out.pixels) EXPECT_EQ(v, 0.0);
}

TEST(NormalizeResize, CheckerboardUpscaleMatchesBilinearOracle) {
  Image2D board(4, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) board.at(y, x) = (x + y) % 2;
  const Image2D out = normalize_resize(board, 8);
  EXPECT_EQ(out.at(0, 0), board.at(0, 0));
  EXPECT_EQ(out.at(0, 7), board.at(0, 3));
  EXPECT_EQ(out.at(7, 0), board.at(3, 0));
  EXPECT_EQ(out.at(7, 7), board.at(3, 3));
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x)
      EXPECT_NEAR(out.at(y, x), bilinear(board, y * 3.0 / 7.0, x * 3.0 / 7.0), 1e-12);
}

TEST(NormalizeResize, OutputInUnitRangeForNegativeInput) {
  Image2D img(5, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = -40.0 + 7.3 * std::sin(i * 1.7);
  for (double v : normalize_resize(img, 9).pixels) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(SelectSalient, SevenSlicesInsideKeptRange) {
  SalientConfig cfg;
  cfg.target_size = 16;
  const auto sel = select_salient_slices(banded_volume(5, 21, 4), cfg);
  EXPECT_EQ(sel.kept, (ZRange{5, 26}));
  EXPECT_EQ(sel.indices, (std::array<std::size_t, 7>{6, 9, 12, 15, 18, 21, 24}));
  ASSERT_EQ(sel.slices.size(), 7u);
  for (const auto& s : sel.slices) {
    EXPECT_EQ(s.height, 16u);
    EXPECT_EQ(s.width, 16u);
  }
}

TEST(SelectSalient, ShortVolumeStillEmitsSeven) {
  const auto sel = select_salient_slices(banded_volume(0, 2, 0));
  EXPECT_EQ(sel.slices.size(), 7u);
  for (std::size_t s : sel.indices) EXPECT_LT(s, 2u);
}

}  // namespace
