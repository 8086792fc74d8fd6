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


#include "cxrbench/reward.h"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "cxrbench/contract.h"

namespace cxrbench::reward {
namespace {

RewardBreakdown Score(const std::string& raw, const Gold& gold, TaskType task,
                      const RewardConfig& config = {}, int w = 512,
                      int h = 512) {
  return TotalReward(parse::ParseResponse(raw), gold, task,
                     parse::ImageDims(w, h), config);
}

TEST(RewardTest, CanonicalCase) {
  const auto r = Score("<think>heart normal</think> \\boxed{no}",
                       std::string("no"), TaskType::kClosedEnded);
  EXPECT_EQ(r.r_ans, 1.5);
  EXPECT_EQ(r.r_fom, 1.0);
  EXPECT_EQ(r.r_coo, 0.15);
  EXPECT_NEAR(r.total, 1.60, 1e-15);
}

TEST(RewardTest, MixIsAffine) {
  EXPECT_DOUBLE_EQ(MixReward(1.5, 1.0, 0.15, 0.1), 0.9 * 1.5 + 0.1 + 0.15);
  EXPECT_DOUBLE_EQ(MixReward(1.5, 0.0, 0.15, 0.0), 1.65);
  EXPECT_DOUBLE_EQ(MixReward(1.5, 1.0, 0.15, 1.0), 1.15);
}

TEST(RewardTest, LambdaOutsideUnitIntervalRejected) {
  RewardConfig c;
  c.lambda = 1.5;
  EXPECT_THROW(c.Validate(), ContractViolation);
  c.lambda = -0.1;
  EXPECT_THROW(Score("x", std::string("x"), TaskType::kClosedEnded, c),
               ContractViolation);
}

TEST(RewardTest, GoldMustMatchTask) {
  EXPECT_THROW(Score("\\boxed{a}", std::set<std::string>{"a"},
                     TaskType::kClosedEnded),
               ContractViolation);
  EXPECT_THROW(
      Score("\\boxed{a}", std::string("a"), TaskType::kMultiObject),
      ContractViolation);
}

TEST(RewardTest, TaskNames) {
  for (auto t : {TaskType::kClosedEnded, TaskType::kMultiObject,
                 TaskType::kOpenText}) {
    EXPECT_EQ(ParseTaskType(TaskTypeName(t)), t);
  }
  EXPECT_THROW(ParseTaskType("essay"), ContractViolation);
}

TEST(RewardTest, NormalizeAnswer) {
  EXPECT_EQ(NormalizeAnswer("  Yes.  "), "yes");
  EXPECT_EQ(NormalizeAnswer("Left   Lower\tLobe..."), "left lower lobe");
  EXPECT_EQ(ParseAnswerSet("Effusion; opacity,\nEffusion"),
            (std::set<std::string>{"effusion", "opacity"}));
}

TEST(CoordinateScoreTest, LiteralFloorHidesSmallPenalties) {
  // 8 in-range boxes give 0.40; one offending box among them gives 0.20.
  std::string raw;
  for (int k = 1; k <= 8; ++k) {
    raw += "[" + std::to_string(k) + ", 1, 20, 20] ";
  }
  const parse::ImageDims dims(512, 512);
  RewardConfig c;
  EXPECT_NEAR(CoordinateScore(parse::ParseResponse(raw), dims, c), 0.40, 1e-15);
  EXPECT_NEAR(CoordinateScore(parse::ParseResponse(raw + "[0, 0, 600, 1]"),
                              dims, c),
              9 * 0.05 - 0.2, 1e-15);
  // Two boxes, one out of range: raw -0.1, floored to 0.15.
  EXPECT_EQ(CoordinateScore(
                parse::ParseResponse("[1, 1, 2, 2] [0, 0, 600, 1]"), dims, c),
            0.15);
}

TEST(CoordinateScoreTest, CappedModeAndPerBoxPenalty) {
  const parse::ImageDims dims(100, 100);
  RewardConfig c;
  c.coordinate_mode = CoordinateMode::kCapped;
  const auto ok2 = parse::ParseResponse("[1, 1, 2, 2] [3, 3, 4, 4]");
  const auto bad = parse::ParseResponse("[1, 1, 2, 2] [3, 3, 400, 4]");
  EXPECT_NEAR(CoordinateScore(ok2, dims, c), 0.10, 1e-15);
  EXPECT_EQ(CoordinateScore(bad, dims, c), 0.0);
  EXPECT_EQ(CoordinateScore(parse::ParseResponse(""), dims, c), 0.0);
  c.coordinate_mode = CoordinateMode::kLiteral;
  c.penalty_mode = PenaltyMode::kPerBox;
  std::string many;
  for (int k = 0; k < 10; ++k) many += "[0, 0, 200, 1] ";
  many += "[0, 0, 1, 1]";
  // 11 boxes, 10 offending: 0.55 - 2.0 floored.
  EXPECT_EQ(CoordinateScore(parse::ParseResponse(many), dims, c), 0.15);
  c.coordinate_unit = parse::CoordinateUnit::kNumber;
  EXPECT_NEAR(CoordinateScore(ok2, dims, c), 8 * 0.05, 1e-15);
}

TEST(AnswerScoreTest, OpenTextUsesSmoothedBleuAndRouge) {
  // Candidate "left pleural effusion" vs reference "small left pleural
  // effusion": all smoothed precisions are 1, so BLEU-1 = BLEU-4 = BP.
  const double bp = std::exp(1.0 - 4.0 / 3.0);
  const double rouge = 2.44 * 0.75 / (0.75 + 1.44);
  const auto r = Score("<think>x</think> \\boxed{left pleural effusion}",
                       std::string("small left pleural effusion"),
                       TaskType::kOpenText);
  EXPECT_NEAR(r.r_ans, 1.5 * (2 * bp + rouge) / 3, 1e-12);
}

TEST(AnswerScoreTest, MissingBoxedScoresZero) {
  EXPECT_EQ(Score("<think>yes</think>", std::string("yes"),
                  TaskType::kClosedEnded)
                .r_ans,
            0.0);
}

TEST(RewardFixturesTest, GoldenFileMatchesExactly) {
  std::ifstream in(CXRBENCH_TESTDATA "/reward_fixtures.jsonl");
  ASSERT_TRUE(in);
  const auto fixtures = ReadRewardFixtures(in);
  ASSERT_EQ(fixtures.size(), 20u);
  for (const auto& f : fixtures) {
    const auto got = Score(f.raw_response, f.gold, f.task, {}, f.image_width,
                           f.image_height);
    // Expected values are decimal hand results; 1e-12 absorbs binary
    // representation error only.
    EXPECT_NEAR(got.r_ans, f.expected.r_ans, 1e-12) << f.id;
    EXPECT_NEAR(got.r_coo, f.expected.r_coo, 1e-12) << f.id;
    EXPECT_EQ(got.r_fom, f.expected.r_fom) << f.id;
    EXPECT_NEAR(got.total, f.expected.total, 1e-12) << f.id;
  }
}

TEST(RewardFixturesTest, MalformedLinesRejected) {
  std::istringstream in("{\"raw_response\": 3}\n");
  EXPECT_ANY_THROW(ReadRewardFixtures(in));
}

}  // namespace
}  // namespace cxrbench::reward
