#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "mediqa/blocks.hpp"
#include "mediqa/error.hpp"
#include "mediqa/numcore/grad_check.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace {

using namespace mediqa;
using namespace mediqa::blocks;
using mediqa::test::random_tensor;
using mediqa::test::to_vector;

oracle::LinearWeights weights_of(const Linear& l) { return {to_vector(l.weight), to_vector(l.bias)}; }

BlockConfig small_config() {
  BlockConfig c;
  c.image_size = 16;
  c.patch_size = 4;
  c.embed_dim = 8;
  c.num_heads = 2;
  c.window_size = 2;
  c.seed = 3;
  return c;
}

TEST(PatchEmbed, TokenCounts) {
  Rng rng(1);
  EXPECT_EQ(PatchEmbed(64, 8, 32, rng).num_tokens(), 64u);
  EXPECT_EQ(PatchEmbed(224, 16, 8, rng).num_tokens(), 196u);
  EXPECT_THROW(PatchEmbed(64, 7, 32, rng), DimensionError);
}

TEST(PatchEmbed, ZeroImageGivesPositionalEmbedding) {
  Rng rng(2);
  PatchEmbed pe(16, 4, 8, rng);
  std::ranges::fill(pe.proj.bias.mutable_data(), 0.0);
  const Tensor tokens = pe.forward(Tensor::zeros({2, 1, 16, 16}));
  ASSERT_EQ(tokens.shape(), (nc::Shape{2, 16, 8}));
  const auto pos = to_vector(pe.position);
  for (std::size_t i = 0; i < tokens.numel(); ++i) EXPECT_EQ(tokens[i], pos[i % pos.size()]);
}

TEST(PatchEmbed, PatchOrderIsRowMajor) {
  Rng rng(3);
  PatchEmbed pe(4, 2, 1, rng);
  pe.use_position = false;
  std::ranges::fill(pe.proj.weight.mutable_data(), 1.0);
  std::ranges::fill(pe.proj.bias.mutable_data(), 0.0);
  std::vector<double> img(16);
  std::iota(img.begin(), img.end(), 0.0);
  const Tensor t = pe.forward(Tensor({1, 1, 4, 4}, img));
  // patch sums: {0,1,4,5}, {2,3,6,7}, {8,9,12,13}, {10,11,14,15}
  EXPECT_EQ(to_vector(t), (std::vector<double>{10, 18, 42, 50}));
}

TEST(Attention, MatchesLoopOracle) {
  Rng rng(4);
  Attention attn(8, 2, rng);
  const Tensor x = random_tensor({1, 5, 8}, 5);
  const auto got = to_vector(attn.forward(x));
  const auto ref = oracle::attention(to_vector(x), 5, 8, 2, weights_of(attn.query), weights_of(attn.key),
                                     weights_of(attn.value), weights_of(attn.proj));
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-12);
}

TEST(Attention, SingleTokenWeightIsOne) {
  Rng rng(5);
  TransformerLayer layer(8, 2, 2, rng);
  const Tensor x = random_tensor({1, 1, 8}, 6);
  AttentionTrace trace;
  const Tensor y = layer.mhsa_forward(x, &trace);
  ASSERT_EQ(trace.weights.size(), 1u);
  for (double w : trace.weights[0].data()) EXPECT_EQ(w, 1.0);
  const Tensor h = layer.norm1.forward(x);
  const Tensor expect = nc::add(x, layer.attn.proj.forward(layer.attn.value.forward(h)));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(y[i], expect[i], 1e-14);
}

TEST(Attention, RowsSumToOne) {
  Rng rng(6);
  TransformerLayer layer(8, 4, 2, rng);
  AttentionTrace trace;
  layer.forward(random_tensor({3, 7, 8}, 7, -4, 4), &trace);
  const auto w = to_vector(trace.weights.at(0));
  for (std::size_t r = 0; r < w.size() / 7; ++r) {
    const double s = std::accumulate(w.begin() + r * 7, w.begin() + (r + 1) * 7, 0.0);
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Attention, PermutationEquivariantWithoutPositions) {
  const BlockConfig c = small_config();
  Rng rng(7);
  PatchEmbed pe(c.image_size, c.patch_size, c.embed_dim, rng);
  pe.use_position = false;
  TransformerLayer layer(c.embed_dim, c.num_heads, c.mlp_ratio, rng);
  const Tensor img = random_tensor({1, 1, 16, 16}, 8);
  const Tensor tokens = pe.forward(img);
  std::vector<std::size_t> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.begin() + 9);
  std::rotate(perm.begin(), perm.begin() + 5, perm.end());
  const Tensor a = nc::take(layer.forward(tokens), 1, perm);
  const Tensor b = layer.forward(nc::take(tokens, 1, perm));
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(TransposedAttention, SingleChannel) {
  Rng rng(8);
  TransposedAttention tab(9, rng);
  const Tensor x = random_tensor({2, 1, 9}, 9);
  AttentionTrace trace;
  const FeatureMap y = tab.forward(FeatureMap{x}, &trace);
  for (double w : trace.weights.at(0).data()) EXPECT_EQ(w, 1.0);
  const Tensor expect = nc::add(x, tab.value.forward(x));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.data[i], expect[i], 1e-14);
}

TEST(TransposedAttention, ZeroValueIsIdentity) {
  Rng rng(9);
  TransposedAttention tab(9, rng);
  std::ranges::fill(tab.value.weight.mutable_data(), 0.0);
  std::ranges::fill(tab.value.bias.mutable_data(), 0.0);
  const Tensor x = random_tensor({2, 4, 9}, 10);
  EXPECT_EQ(to_vector(tab.forward(FeatureMap{x}).data), to_vector(x));
}

TEST(TransposedAttention, AttentionIsChannelByChannel) {
  Rng rng(10);
  TransposedAttention tab(9, rng);
  AttentionTrace trace;
  const FeatureMap y = tab.forward(FeatureMap{random_tensor({2, 5, 9}, 11)}, &trace);
  EXPECT_EQ(trace.weights.at(0).shape(), (nc::Shape{2, 5, 5}));
  EXPECT_EQ(y.data.shape(), (nc::Shape{2, 5, 9}));
}

TEST(ScaleSwin, ZeroScaleIsIdentity) {
  const BlockConfig c = small_config();
  Rng rng(11);
  ScaleSwinBlock block(c, rng);
  block.scale = 0.0;
  const Tensor x = random_tensor({2, 16, 8}, 12);
  EXPECT_EQ(to_vector(block.forward(x)), to_vector(x));
}

TEST(ScaleSwin, FullWindowEqualsGlobalAttention) {
  BlockConfig c = small_config();
  c.window_size = c.grid_side();
  Rng rng(12);
  ScaleSwinBlock block(c, rng);
  const Tensor x = random_tensor({2, 16, 8}, 13);
  const auto windowed = to_vector(block.window_attention(x));
  const auto full = to_vector(block.attn.forward(block.norm1.forward(x)));
  for (std::size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(windowed[i], full[i], 1e-12);
}

TEST(ScaleSwin, WindowsAttendLocally) {
  const BlockConfig c = small_config();  // grid 4, window 2
  Rng rng(13);
  ScaleSwinBlock block(c, rng);
  AttentionTrace trace;
  const Tensor x = random_tensor({1, 16, 8}, 14);
  const auto base = to_vector(block.window_attention(x, &trace));
  EXPECT_EQ(trace.weights.at(0).shape(), (nc::Shape{4, 2, 4, 4}));
  // Perturb token (0,0); only the tokens in the top-left window may change.
  Tensor moved = x.clone();
  moved.mutable_data()[0] += 1.0;
  const auto after = to_vector(block.window_attention(moved));
  for (std::size_t tok = 0; tok < 16; ++tok) {
    const bool same_window = (tok / 4) < 2 && (tok % 4) < 2;
    double diff = 0.0;
    for (std::size_t e = 0; e < 8; ++e) diff += std::abs(after[tok * 8 + e] - base[tok * 8 + e]);
    if (same_window) {
      EXPECT_GT(diff, 0.0) << tok;
    } else {
      EXPECT_EQ(diff, 0.0) << tok;
    }
  }
}

TEST(ScaleSwin, WindowMustDivideGrid) {
  BlockConfig c = small_config();
  c.window_size = 3;
  EXPECT_THROW(c.validate(), DimensionError);
}

TEST(Blocks, ShapesPreservedAcrossConfigs) {
  for (std::size_t patch : {2u, 4u}) {
    for (std::size_t window : {1u, 2u}) {
      BlockConfig c = small_config();
      c.image_size = 8;
      c.patch_size = patch;
      c.window_size = window;
      if (c.grid_side() % window) continue;
      Rng rng(patch * 10 + window);
      PatchEmbed pe(c.image_size, c.patch_size, c.embed_dim, rng);
      ScaleSwinBlock block(c, rng);
      TransposedAttention tab(c.num_tokens(), rng);
      const Tensor tokens = pe.forward(random_tensor({3, 1, 8, 8}, 15));
      EXPECT_EQ(block.forward(tokens).shape(), tokens.shape());
      const Tensor f = nc::transpose(tokens);
      EXPECT_EQ(tab.forward(FeatureMap{f}).data.shape(), f.shape());
    }
  }
}

TEST(Blocks, GradCheckLayers) {
  const BlockConfig c = small_config();
  Rng rng(14);
  TransformerLayer layer(c.embed_dim, c.num_heads, c.mlp_ratio, rng);
  TransposedAttention tab(9, rng);
  ScaleSwinBlock block(c, rng);
  nc::GradCheckOptions opt;
  const Tensor w = random_tensor({1, 16, 8}, 99);
  auto mhsa = [&](const Tensor& x) { return nc::sum(nc::mul(layer.forward(x), w)); };
  auto tabf = [&](const Tensor& x) { return nc::sum(nc::square(tab.forward(FeatureMap{x}).data)); };
  auto sstb = [&](const Tensor& x) { return nc::sum(nc::mul(block.forward(x), w)); };
  const auto r1 = nc::grad_check(mhsa, random_tensor({1, 16, 8}, 16), opt);
  const auto r2 = nc::grad_check(tabf, random_tensor({2, 4, 9}, 17), opt);
  const auto r3 = nc::grad_check(sstb, random_tensor({1, 16, 8}, 18), opt);
  EXPECT_TRUE(r1.passed) << r1.max_relative_error;
  EXPECT_TRUE(r2.passed) << r2.max_relative_error;
  EXPECT_TRUE(r3.passed) << r3.max_relative_error;
  EXPECT_LT(r1.max_relative_error, 1e-5);
  EXPECT_LT(r2.max_relative_error, 1e-5);
  EXPECT_LT(r3.max_relative_error, 1e-5);
}

TEST(Classifier, ProbabilitiesSumToOne) {
  VitClassifier clf(small_config());
  const auto p = clf.classify(random_tensor({3, 1, 16, 16}, 19, 0, 1));
  for (const Tensor* t : {&p.modality, &p.region, &p.type}) {
    const std::size_t k = t->dim(1);
    for (std::size_t b = 0; b < 3; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += (*t)[b * k + i];
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
  EXPECT_EQ(p.modality.dim(1), kModalityClasses);
  EXPECT_EQ(p.region.dim(1), kRegionClasses);
  EXPECT_EQ(p.type.dim(1), kTypeClasses);
}

TEST(Classifier, SameSeedSameWeights) {
  const VitClassifier a(small_config()), b(small_config());
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(to_vector(pa[i].second), to_vector(pb[i].second));
}

}  // namespace
