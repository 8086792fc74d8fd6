// Copyright 2026 The CXRBench Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Drives the cxrbench executable: exit codes, golden output and determinism.

#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "httplib.h"
#include "nlohmann/json.hpp"
#include "process.h"

namespace cxrbench::testing {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string kData = CXRBENCH_TESTDATA;
const std::string kScoreArgs = "score --dataset " + kData + "/score/dataset.jsonl" +
                               " --predictions " + kData + "/score/predictions.jsonl" +
                               " --labels " + kData + "/score/labels.jsonl" +
                               " --radgraph " + kData + "/score/radgraph.jsonl";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cxrbench_clitest_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Write(const std::string& name, const std::string& content) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << content;
    return p.string();
  }

  fs::path dir_;
};

std::vector<std::string> Lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::vector<std::string> Fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string f;
  while (in >> f) out.push_back(f);
  return out;
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(RunCli("").exit_code, 2);
  EXPECT_EQ(RunCli("no-such-command").exit_code, 2);
  EXPECT_EQ(RunCli("score --dataset x.jsonl").exit_code, 2);
  EXPECT_EQ(RunCli("--help").exit_code, 0);
}

TEST_F(CliTest, ScoreMissingFileExitsTwo) {
  const auto r = RunCli("score --dataset " + (dir_ / "missing.jsonl").string() +
                        " --predictions " + kData + "/score/predictions.jsonl");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("missing.jsonl"), std::string::npos);
}

TEST_F(CliTest, ScoreSchemaMismatchExitsThree) {
  const std::string ds = Write("v2.jsonl", "{\"schema_version\": 2}\n");
  const auto r =
      RunCli("score --dataset " + ds + " --predictions " + kData + "/score/predictions.jsonl");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("expected 1, found 2"), std::string::npos);
}

TEST_F(CliTest, ScoreMatchesGoldenTable) {
  const auto r = RunCli(kScoreArgs);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(r.out, ReadFile(kData + "/score/expected_table.txt"));
  // Same invocation twice is byte-identical.
  EXPECT_EQ(RunCli(kScoreArgs).out, r.out);
}

TEST_F(CliTest, ScoreCsvHasOneRowPerModelSplit) {
  const auto r = RunCli(kScoreArgs + " --format csv");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto lines = Lines(r.out);
  ASSERT_FALSE(lines.empty());
  int rows = 0;
  for (const auto& l : lines) rows += l.rfind("model-", 0) == 0;
  // Two models, four report splits plus the weighted average.
  EXPECT_GE(rows, 10);
}

TEST_F(CliTest, IdentityPredictionsScorePerfectOverlap) {
  const auto r = RunCli("score --dataset " + kData + "/score/dataset.jsonl" +
                        " --predictions " + kData + "/score/identity_predictions.jsonl");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  int checked = 0, vqa_rows = 0;
  std::vector<std::string> header;
  for (const auto& line : Lines(r.out)) {
    const auto f = Fields(line);
    if (!f.empty() && f[0] == "model") header = f;
    if (!f.empty() && f[0] == "#") header.clear();
    if (f.empty() || f[0] != "oracle") continue;
    if (header.empty()) {
      // VQA accuracy row.
      EXPECT_EQ(f.back(), "1.0000") << line;
      ++vqa_rows;
      continue;
    }
    for (size_t k = 0; k < header.size() && k < f.size(); ++k) {
      if (header[k].rfind("BLEU", 0) == 0 || header[k] == "ROUGE-L") {
        EXPECT_EQ(f[k], "1.0000") << line;
        ++checked;
      }
    }
  }
  EXPECT_EQ(checked, 5 * 5);
  EXPECT_EQ(vqa_rows, 6);
}

TEST_F(CliTest, RewardFixturesCheckPasses) {
  const auto r = RunCli("reward --check --fixtures " + kData + "/reward_fixtures.jsonl");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  int ok = 0;
  for (const auto& line : Lines(r.out)) ok += line.size() > 3 && line.ends_with("\tok");
  EXPECT_EQ(ok, 20);
  EXPECT_NE(r.out.find("# all: n=20"), std::string::npos);
}

TEST_F(CliTest, RewardLambdaOverrideShiftsTotals) {
  const auto r = RunCli("reward --lambda 0.5 --fixtures " + kData + "/reward_fixtures.jsonl");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  // 0.5 * 1.5 + 0.5 * 1 + 0.15.
  EXPECT_NE(r.out.find("canonical_closed_correct\tclosed_ended\t1.500000\t0.150000"
                       "\t1.000000\t1.400000"),
            std::string::npos)
      << r.out;
  EXPECT_EQ(RunCli("reward --check --lambda 0.5 --fixtures " + kData +
                   "/reward_fixtures.jsonl")
                .exit_code,
            1);
  EXPECT_EQ(RunCli("reward --lambda 1.5 --fixtures " + kData + "/reward_fixtures.jsonl")
                .exit_code,
            2);
}

TEST_F(CliTest, RewardEmptyResponsesExitZero) {
  const std::string empty = Write("empty.jsonl", "");
  const auto r = RunCli("reward --responses " + empty + " --dataset " + kData +
                        "/score/dataset.jsonl");
  EXPECT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("# all: n=0"), std::string::npos);
}

TEST_F(CliTest, RewardResponsesScoredAgainstDataset) {
  const std::string responses = Write(
      "responses.jsonl",
      "{\"id\": \"r01\", \"response\": \"<think>x</think> \\\\boxed{There is mild "
      "cardiomegaly. Heart size is stable.}\"}\n"
      "{\"id\": \"nope\", \"response\": \"x\"}\n");
  const auto r = RunCli("reward --responses " + responses + " --dataset " + kData +
                        "/score/dataset.jsonl");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("r01\topen_text\t1.500000\t0.150000\t1.000000\t1.600000"),
            std::string::npos)
      << r.out;
  EXPECT_NE(r.out.find("nope\t-\terror"), std::string::npos);
  EXPECT_NE(r.out.find("errors=1"), std::string::npos);
}

TEST_F(CliTest, ArenaSimulateIsDeterministic) {
  const std::string a = (dir_ / "a").string(), b = (dir_ / "b").string(),
                    c = (dir_ / "c").string();
  ASSERT_EQ(RunCli("--seed 3 --out " + a + " arena simulate --battles 300").exit_code, 0);
  ASSERT_EQ(RunCli("--seed 3 --out " + b + " arena simulate --battles 300").exit_code, 0);
  ASSERT_EQ(RunCli("--seed 4 --out " + c + " arena simulate --battles 300").exit_code, 0);
  EXPECT_EQ(ReadFile(fs::path(a) / "battles.jsonl"), ReadFile(fs::path(b) / "battles.jsonl"));
  EXPECT_EQ(ReadFile(fs::path(a) / "ranking.txt"), ReadFile(fs::path(b) / "ranking.txt"));
  EXPECT_NE(ReadFile(fs::path(a) / "battles.jsonl"), ReadFile(fs::path(c) / "battles.jsonl"));
  EXPECT_EQ(Lines(ReadFile(fs::path(a) / "battles.jsonl")).size(), 300u);
}

TEST_F(CliTest, ArenaColdStartVisitsDistinctPairs) {
  const std::string out = (dir_ / "arena").string();
  ASSERT_EQ(RunCli("--out " + out + " arena simulate --battles 10 --num-models 10").exit_code,
            0);
  const auto lines = Lines(ReadFile(fs::path(out) / "battles.jsonl"));
  ASSERT_EQ(lines.size(), 10u);
  std::set<std::pair<int, int>> seen;
  for (size_t t = 0; t < lines.size(); ++t) {
    const json b = json::parse(lines[t]);
    EXPECT_TRUE(seen.insert({b["m1"].get<int>(), b["m2"].get<int>()}).second) << lines[t];
    // Uniform over the 90 - t ordered pairs not yet played.
    EXPECT_NEAR(b["P_At"].get<double>(), 1.0 / (90.0 - t), 1e-15);
  }
}

TEST_F(CliTest, ArenaRejectsBadArguments) {
  EXPECT_EQ(RunCli("--out " + dir_.string() + " arena simulate --battles 0").exit_code, 2);
  EXPECT_EQ(RunCli("--out " + dir_.string() + " arena simulate --num-models 1").exit_code, 2);
  EXPECT_EQ(RunCli("arena tournament").exit_code, 2);
}

TEST_F(CliTest, LlmArenaWithoutCredentialsFailsBeforeAnyBattle) {
  const std::string out = (dir_ / "llm").string();
  const auto start = std::chrono::steady_clock::now();
  const auto r = RunCli("--out " + out + " arena llm --corpus " + kData +
                            "/annotation_corpus.jsonl",
                        "env -u CXRBENCH_JUDGE_API_KEY");
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("CXRBENCH_JUDGE_API_KEY"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(fs::path(out) / "battles.jsonl"));
  EXPECT_LT(seconds, 5.0);
}

TEST_F(CliTest, GrpoDemoZeroIterationsLeavesPolicyUnchanged) {
  const std::string out = (dir_ / "grpo").string();
  const auto r = RunCli("--out " + out + " grpo-demo --iterations 0");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const json summary = json::parse(ReadFile(fs::path(out) / "summary.json"));
  EXPECT_EQ(summary["initial"], summary["final"]);
  EXPECT_EQ(summary["final"]["mean_kl"], 0.0);
  EXPECT_TRUE(ReadFile(fs::path(out) / "curve.jsonl").empty());
}

TEST_F(CliTest, GrpoDemoSeedsDiffer) {
  const auto a = RunCli("--seed 1 grpo-demo --iterations 3");
  const auto b = RunCli("--seed 2 grpo-demo --iterations 3");
  ASSERT_EQ(a.exit_code, 0) << a.err;
  ASSERT_EQ(b.exit_code, 0) << b.err;
  EXPECT_NE(a.out, b.out);
  EXPECT_EQ(RunCli("--seed 1 grpo-demo --iterations 3").out, a.out);
}

TEST_F(CliTest, ConfigFileErrorsExitTwo) {
  const std::string bad = Write("bad.json", "{\"reward\": {\"lamda\": 0.2}}");
  EXPECT_EQ(RunCli("--config " + bad + " reward --fixtures " + kData +
                   "/reward_fixtures.jsonl")
                .exit_code,
            2);
  EXPECT_EQ(RunCli("--config " + (dir_ / "none.json").string() + " grpo-demo").exit_code,
            2);
}

TEST_F(CliTest, ExampleConfigIsValid) {
  const std::string cfg = std::string(CXRBENCH_SOURCE_DIR) + "/config/example.json";
  EXPECT_EQ(RunCli("--config " + cfg + " reward --check --fixtures " + kData +
                   "/reward_fixtures.jsonl")
                .exit_code,
            0);
  EXPECT_EQ(RunCli("--config " + cfg + " --out " + dir_.string() +
                   " arena simulate --battles 20")
                .exit_code,
            0);
  EXPECT_EQ(RunCli("--config " + cfg + " grpo-demo --iterations 1").exit_code, 0);
}

TEST_F(CliTest, ServeMissingCorpusExitsTwo) {
  const auto r = RunCli("serve --port 0 --data-dir " + (dir_ / "d").string() +
                        " --corpus " + (dir_ / "none.jsonl").string());
  EXPECT_EQ(r.exit_code, 2);
  const std::string v2 = Write("v2.jsonl", "{\"schema_version\": 2}\n");
  EXPECT_EQ(RunCli("serve --port 0 --data-dir " + (dir_ / "d").string() + " --corpus " + v2)
                .exit_code,
            3);
}

TEST_F(CliTest, ServeAnswersAndStopsCleanly) {
  Child child({BinaryPath(), "serve", "--port", "0", "--data-dir", (dir_ / "data").string(),
               "--corpus", kData + "/annotation_corpus.jsonl"});
  const int port = ParseListeningPort(child.ReadLine());
  ASSERT_GT(port, 0);
  httplib::Client client("127.0.0.1", port);
  auto res = client.Post("/v1/sessions", R"({"annotator": "a", "group": 1})",
                         "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201);
  child.Signal(SIGTERM);
  EXPECT_EQ(child.Wait(), 0);
  EXPECT_TRUE(fs::exists(dir_ / "data" / "snapshot.json"));
  EXPECT_EQ(Lines(ReadFile(dir_ / "data" / "events.jsonl")).size(), 2u);
}

}  // namespace
}  // namespace cxrbench::testing
