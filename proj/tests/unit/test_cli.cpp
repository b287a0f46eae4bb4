#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cli.hpp"
#include "support.hpp"

namespace {

using mediqa::test::TempDir;
namespace fs = std::filesystem;

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run mediqa_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = mediqa::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> tiny(std::vector<std::string> args) {
  for (const char* kv : {"model.image_size=16", "model.patch_size=4", "model.embed_dim=8", "model.num_heads=2",
                         "model.window_size=2", "data.image_size=16", "train.learning_rate=0.001"}) {
    args.push_back("--set");
    args.push_back(kv);
  }
  return args;
}

TEST(Cli, GenDataIsReproducible) {
  TempDir a, b;
  const auto ra = mediqa_run(tiny({"gen-data", "--seed", "7", "--out", a.str(), "--set", "data.count=12"}));
  const auto rb = mediqa_run(tiny({"gen-data", "--seed", "7", "--out", b.str(), "--set", "data.count=12"}));
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(rb.code, 0) << rb.err;
  EXPECT_EQ(slurp(a.path() / "manifest.csv"), slurp(b.path() / "manifest.csv"));
  EXPECT_TRUE(fs::exists(a.path() / "gen-data_config.json"));
}

TEST(Cli, UsageAndConfigErrors) {
  EXPECT_EQ(mediqa_run({}).code, 2);
  const auto bad_flag = mediqa_run({"gen-data", "--no-such-flag"});
  EXPECT_EQ(bad_flag.code, 2);
  EXPECT_EQ(bad_flag.err.rfind("error usage", 0), 0u) << bad_flag.err;
  TempDir dir;
  const auto bad_key = mediqa_run({"gen-data", "--out", dir.str(), "--set", "model.bogus=1"});
  EXPECT_EQ(bad_key.code, 1);
  EXPECT_EQ(bad_key.err.rfind("error config", 0), 0u) << bad_key.err;
  const auto missing = mediqa_run({"evaluate", "--out", dir.str()});
  EXPECT_EQ(missing.code, 2);
  const auto io = mediqa_run({"evaluate", "--out", dir.str(), "--manifest", dir.str("none.csv"), "--checkpoint", "x"});
  EXPECT_EQ(io.code, 1);
  EXPECT_EQ(io.err.rfind("error io", 0), 0u) << io.err;
}

TEST(Cli, ConfigFileAndFlagsCompose) {
  TempDir dir;
  std::ofstream(dir.path() / "cfg.json") << R"({"data.count": 10, "data.image_size": 16, "seed": 3})";
  const auto r = mediqa_run({"gen-data", "--config", dir.str("cfg.json"), "--seed", "4", "--out", dir.str("d")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string cfg = slurp(dir.path() / "d" / "gen-data_config.json");
  EXPECT_NE(cfg.find("\"seed\": 4"), std::string::npos) << cfg;
  EXPECT_EQ(lines(slurp(dir.path() / "d" / "manifest.csv")).size(), 11u);
}

TEST(Cli, PredictMatchesEvaluateScore) {
  TempDir dir;
  const std::string data = dir.str("data"), run = dir.str("ft"), ev = dir.str("ev");
  ASSERT_EQ(mediqa_run(tiny({"gen-data", "--out", data, "--set", "data.count=30", "--set", "data.depth=9"})).code, 0);
  const auto ft = mediqa_run(tiny({"finetune", "--manifest", data + "/manifest.csv", "--pt", "off", "--out", run,
                                   "--set", "train.epochs=1"}));
  ASSERT_EQ(ft.code, 0) << ft.err;
  for (const char* f : {"report.csv", "predictions.csv", "scatter.svg", "finetune.ckpt", "finetune_loss.csv"})
    EXPECT_TRUE(fs::exists(fs::path(run) / f)) << f;
  const auto er = mediqa_run(tiny({"evaluate", "--manifest", data + "/manifest.csv", "--checkpoint",
                                   run + "/finetune.ckpt", "--out", ev}));
  ASSERT_EQ(er.code, 0) << er.err;
  const auto rows = lines(slurp(fs::path(ev) / "predictions.csv"));
  ASSERT_GE(rows.size(), 2u);
  const std::string row = rows[1];
  const std::string path = row.substr(0, row.find(','));
  const std::string score = row.substr(row.rfind(',') + 1);

  const auto pr = mediqa_run(tiny({"predict", data + "/" + path, "--checkpoint", run + "/finetune.ckpt",
                                   "--modality", "CT", "--region", "chest", "--type", "lung-window"}));
  ASSERT_EQ(pr.code, 0) << pr.err;
  const auto out = lines(pr.out);
  ASSERT_GE(out.size(), 3u) << pr.out;
  EXPECT_EQ(out[0], "prompt 3D,CT,chest,lung-window");
  EXPECT_EQ(out[1], "Q " + score);
  EXPECT_EQ(out[2], "slice,q,weight");
  EXPECT_EQ(out.size(), 3u + 7u);
}

TEST(Cli, AblateWritesFourRows) {
  TempDir dir;
  const std::string data = dir.str("data"), ramp = dir.str("ramp"), out = dir.str("ab");
  ASSERT_EQ(mediqa_run(tiny({"gen-data", "--out", data, "--set", "data.count=30"})).code, 0);
  ASSERT_EQ(mediqa_run(tiny({"gen-data", "--out", ramp, "--set", "data.count=10", "--set", "data.dose_ramp=on"})).code,
            0);
  const auto r = mediqa_run(tiny({"ablate", "--manifest", data + "/manifest.csv", "--pretrain-manifest",
                                  ramp + "/manifest.csv", "--out", out, "--set", "train.epochs=1"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(slurp(fs::path(out) / "ablation.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[1].substr(0, 11), "off,off,off");
  EXPECT_EQ(rows[2].substr(0, 10), "on,off,off");
  EXPECT_EQ(rows[3].substr(0, 9), "on,on,off");
  EXPECT_EQ(rows[4].substr(0, 8), "on,on,on");
}

}  // namespace
