#include <fstream>

#include <gtest/gtest.h>

#include "mediqa/checkpoint.hpp"
#include "mediqa/error.hpp"
#include "support.hpp"

namespace {

using namespace mediqa;
using namespace mediqa::model;
using mediqa::test::TempDir;
using mediqa::test::random_tensor;
using mediqa::test::to_vector;

ModelConfig tiny_config() {
  ModelConfig c;
  c.blocks.image_size = 16;
  c.blocks.patch_size = 4;
  c.blocks.embed_dim = 8;
  c.blocks.num_heads = 2;
  c.blocks.window_size = 2;
  c.blocks.seed = 12;
  c.num_params = 2;
  return c;
}

std::vector<std::uint8_t> file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  TempDir dir;
  MedIQAModel m(tiny_config());
  for (double& w : m.slice_weight.bias.mutable_data()) w = 0.1 + 1e-17;
  save_checkpoint(m, dir.str("a.miqa"));
  const MedIQAModel back = load_checkpoint(dir.str("a.miqa"));
  EXPECT_EQ(back.config(), m.config());
  const auto pa = m.parameters(), pb = back.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].first, pb[i].first);
    EXPECT_EQ(to_vector(pa[i].second), to_vector(pb[i].second)) << pa[i].first;
  }
  save_checkpoint(back, dir.str("b.miqa"));
  EXPECT_EQ(file_bytes(dir.str("a.miqa")), file_bytes(dir.str("b.miqa")));
  const Tensor x = random_tensor({1, 1, 16, 16}, 1, 0, 1);
  EXPECT_EQ(m.score_2d(x, std::nullopt).q.item(), back.score_2d(x, std::nullopt).q.item());
}

TEST(Checkpoint, EveryTruncationIsCorrupt) {
  const MedIQAModel m(tiny_config());
  Checkpoint ck;
  ck.config_json = config_to_json(m.config());
  for (const auto& [name, t] : m.parameters()) ck.tensors.push_back({name, t.shape(), to_vector(t)});
  const auto bytes = encode_checkpoint(ck);
  EXPECT_NO_THROW(decode_checkpoint(bytes));
  for (std::size_t n = 0; n < bytes.size(); n += 1 + n / 7) {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + n);
    EXPECT_THROW(decode_checkpoint(cut), CorruptCheckpointError) << n;
  }
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_checkpoint(extra), CorruptCheckpointError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), CorruptCheckpointError);
}

TEST(Checkpoint, TruncatedFileOnDisk) {
  TempDir dir;
  save_checkpoint(MedIQAModel(tiny_config()), dir.str("m.miqa"));
  auto bytes = file_bytes(dir.str("m.miqa"));
  bytes.resize(bytes.size() / 2);
  std::ofstream(dir.str("m.miqa"), std::ios::binary | std::ios::trunc)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  EXPECT_THROW(load_checkpoint(dir.str("m.miqa")), CorruptCheckpointError);
  EXPECT_THROW(load_checkpoint(dir.str("missing.miqa")), IoError);
}

TEST(Checkpoint, ShapeAndNameMismatchesAreReported) {
  const MedIQAModel m(tiny_config());
  Checkpoint ck;
  ck.config_json = config_to_json(m.config());
  for (const auto& [name, t] : m.parameters()) ck.tensors.push_back({name, t.shape(), to_vector(t)});

  auto renamed = ck;
  renamed.tensors[3].name = "bogus";
  EXPECT_THROW(model_from_checkpoint(renamed), CorruptCheckpointError);

  auto reshaped = ck;
  reshaped.tensors[0].shape = {1, reshaped.tensors[0].data.size()};
  try {
    model_from_checkpoint(reshaped);
    FAIL();
  } catch (const CorruptCheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find(ck.tensors[0].name), std::string::npos);
  }

  auto shorter = ck;
  shorter.tensors.pop_back();
  EXPECT_THROW(model_from_checkpoint(shorter), CorruptCheckpointError);
}

TEST(Checkpoint, ClassifierKindIsChecked) {
  TempDir dir;
  save_checkpoint(MedIQAModel(tiny_config()), dir.str("m.miqa"));
  EXPECT_THROW(load_classifier(dir.str("m.miqa")), CorruptCheckpointError);
  const blocks::VitClassifier clf(tiny_config().blocks);
  save_classifier(clf, dir.str("c.miqa"));
  const auto back = load_classifier(dir.str("c.miqa"));
  EXPECT_EQ(to_vector(back.head_type.weight), to_vector(clf.head_type.weight));
  EXPECT_THROW(load_checkpoint(dir.str("c.miqa")), CorruptCheckpointError);
}

TEST(Checkpoint, ResetHeadsOnLoad) {
  const MedIQAModel m(tiny_config());
  Checkpoint ck;
  ck.config_json = config_to_json(m.config());
  for (const auto& [name, t] : m.parameters()) ck.tensors.push_back({name, t.shape(), to_vector(t)});
  const MedIQAModel fresh = model_from_checkpoint(ck, {true, 4});
  EXPECT_EQ(to_vector(fresh.embed.proj.weight), to_vector(m.embed.proj.weight));
  EXPECT_EQ(to_vector(fresh.param_head.fc1.weight), to_vector(m.param_head.fc1.weight));
  EXPECT_NE(to_vector(fresh.score_head.fc1.weight), to_vector(m.score_head.fc1.weight));
}

}  // namespace
