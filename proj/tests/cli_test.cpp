// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "oracles.hpp"

namespace avattn::cli {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult Invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = Run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json ReadJson(const fs::path& p) { return nlohmann::json::parse(Slurp(p)); }

TEST(Cli, SynthIsDeterministic) {
  const fs::path dir = avattn::testing::ScratchDir("cli_synth");
  for (const char* name : {"a", "b"}) {
    const RunResult r = Invoke({"synth", "--clips", "2", "--image-size", "16", "--seed", "3", "--out", (dir / name).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(Slurp(dir / "a" / "manifest.jsonl"), Slurp(dir / "b" / "manifest.jsonl"));
  EXPECT_EQ(Slurp(dir / "a" / "pseudo_labels.csv"), Slurp(dir / "b" / "pseudo_labels.csv"));
  EXPECT_EQ(Slurp(dir / "a" / "frames" / "clip_0001" / "005.png"), Slurp(dir / "b" / "frames" / "clip_0001" / "005.png"));
  const auto run = ReadJson(dir / "a" / "run_config.json");
  EXPECT_EQ(run["command"], "synth");
  EXPECT_EQ(run["version"], VersionId());
  EXPECT_EQ(run["options"]["seed"], 3);
}

TEST(Cli, UsageErrorsFailWithoutWriting) {
  const fs::path dir = avattn::testing::ScratchDir("cli_usage");
  EXPECT_NE(Invoke({"synth", "--clips", "0", "--out", (dir / "x").string()}).code, 0);
  EXPECT_FALSE(fs::exists(dir / "x"));
  EXPECT_NE(Invoke({"synth"}).code, 0);
  EXPECT_NE(Invoke({"bogus"}).code, 0);
  EXPECT_NE(Invoke({"train", "--out", (dir / "t").string(), "--modality", "both"}).code, 0);
}

TEST(Cli, NonEmptyOutputNeedsForce) {
  const fs::path dir = avattn::testing::ScratchDir("cli_force");
  std::ofstream(dir / "keep.txt") << "data";
  const RunResult refused = Invoke({"synth", "--clips", "1", "--image-size", "16", "--out", dir.string()});
  EXPECT_EQ(refused.code, 2);
  EXPECT_NE(refused.err.find("--force"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "keep.txt"));
  EXPECT_EQ(Invoke({"synth", "--clips", "1", "--image-size", "16", "--out", dir.string(), "--force"}).code, 0);
  EXPECT_FALSE(fs::exists(dir / "keep.txt"));
}

TEST(Cli, MissingArtifactNamesTheProducingCommand) {
  const fs::path dir = avattn::testing::ScratchDir("cli_missing");
  const RunResult r = Invoke({"eval", "--out", (dir / "e").string(), "--checkpoint", (dir / "none.ckpt").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("avattn train"), std::string::npos) << r.err;
  const RunResult c = Invoke({"chunks", "--out", (dir / "c").string()});
  EXPECT_NE(c.err.find("avattn synth"), std::string::npos) << c.err;
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = avattn::testing::ScratchDir("cli_pipeline");
    Expect({"synth", "--clips", "10", "--image-size", "16", "--seed", "1", "--out", Path("world")});
    Expect({"chunks", "--manifest", Path("world/manifest.jsonl"), "--out", Path("chunks")});
  }
  static std::string Path(const std::string& rel) { return (dir_ / rel).string(); }
  static void Expect(const std::vector<std::string>& args) {
    const RunResult r = Invoke(args);
    ASSERT_EQ(r.code, 0) << args.front() << ": " << r.err;
  }
  static std::vector<std::string> Data() {
    return {"--manifest", Path("world/manifest.jsonl"), "--chunks", Path("chunks"), "--resolution", "16"};
  }
  static std::vector<std::string> With(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  static fs::path dir_;
};
fs::path CliPipeline::dir_;

TEST_F(CliPipeline, EveryStageRunsAndRecordsItsConfig) {
  Expect({"features", "--manifest", Path("world/manifest.jsonl"), "--out", Path("features")});
  EXPECT_TRUE(fs::exists(dir_ / "features" / "clip_0000.fbank"));
  const auto chunks = ReadJson(dir_ / "chunks" / "summary.json");
  EXPECT_GT(chunks["chunks"].get<int>(), 10);
  EXPECT_GT(chunks["test_chunks"].get<int>(), 0);

  Expect(With({"train", "--epochs", "1", "--batch", "8", "--out", Path("train")}, Data()));
  const std::string ckpt = Path("train/checkpoint.ckpt");
  EXPECT_TRUE(fs::exists(dir_ / "train" / "train_log.jsonl"));
  EXPECT_TRUE(fs::exists(dir_ / "train" / "checkpoints" / "epoch_0001.ckpt"));

  Expect(With({"eval", "--checkpoint", ckpt, "--out", Path("eval")}, Data()));
  const auto metrics = ReadJson(dir_ / "eval" / "metrics.json");
  EXPECT_TRUE(metrics["gaze_error_deg"]["all"].is_number());
  EXPECT_TRUE(fs::exists(dir_ / "eval" / "predictions.csv"));

  Expect(With({"eval", "--checkpoint", ckpt, "--modality", "audio", "--out", Path("eval_audio")}, Data()));
  Expect(With({"probe", "--checkpoint", ckpt, "--task", "zone", "--probe-epochs", "5", "--out", Path("probe")}, Data()));
  const auto probe = ReadJson(dir_ / "probe" / "summary.json");
  EXPECT_EQ(probe["backbone_hash_before"], probe["backbone_hash_after"]);
  Expect(With({"knn", "--checkpoint", ckpt, "--k", "5", "--out", Path("knn")}, Data()));
  EXPECT_TRUE(ReadJson(dir_ / "knn" / "summary.json")["zone_accuracy_percent"].is_number());

  for (const char* sub : {"features", "train", "eval", "probe", "knn"}) {
    EXPECT_TRUE(fs::exists(dir_ / sub / "run_config.json")) << sub;
  }
}

TEST_F(CliPipeline, ResumeReproducesTheUninterruptedCheckpoint) {
  Expect(With({"train", "--epochs", "2", "--batch", "8", "--out", Path("resume")}, Data()));
  const std::string full = Slurp(dir_ / "resume" / "checkpoint.ckpt");
  Expect(With({"train", "--epochs", "2", "--batch", "8", "--resume", Path("resume/checkpoints/epoch_0001.ckpt"),
               "--out", Path("resume")},
              Data()));
  EXPECT_EQ(Slurp(dir_ / "resume" / "checkpoint.ckpt"), full);

  // A different epoch budget is a different training config.
  const RunResult mismatch = Invoke(With({"train", "--epochs", "3", "--batch", "8", "--resume",
                                          Path("resume/checkpoint.ckpt"), "--out", Path("resume")},
                                         Data()));
  EXPECT_EQ(mismatch.code, 2);
}

TEST_F(CliPipeline, AblationProducesFiveRows) {
  Expect(With({"ablate", "--epochs", "1", "--batch", "8", "--probe-epochs", "5", "--out", Path("ablate")}, Data()));
  const auto ablation = ReadJson(dir_ / "ablate" / "ablation.json");
  ASSERT_EQ(ablation["rows"].size(), 5u);
  for (const auto& row : ablation["rows"]) {
    EXPECT_TRUE(row["error"].is_null()) << row.dump();
    EXPECT_TRUE(row["gaze_error_deg"]["all"].is_number());
  }
  EXPECT_TRUE(fs::exists(dir_ / "ablate" / "ablation.txt"));
}

}  // namespace
}  // namespace avattn::cli
