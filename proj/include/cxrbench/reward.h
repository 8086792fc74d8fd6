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

// Three-part reward for a sampled response: answer score, coordinate score
// and format score, mixed as
//
//   total = (1 - lambda) * r_ans + lambda * r_fom + r_coo.

#ifndef CXRBENCH_REWARD_H_
#define CXRBENCH_REWARD_H_

#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cxrbench/response_parser.h"
#include "cxrbench/textmetrics.h"

namespace cxrbench::reward {

enum class TaskType { kClosedEnded, kMultiObject, kOpenText };

// "closed_ended", "multi_object", "open_text". Throws ContractViolation on
// anything else.
TaskType ParseTaskType(std::string_view name);
std::string_view TaskTypeName(TaskType task);

// The literal formula is max(n * bonus + phi, floor), which makes the
// out-of-range penalty unobservable. kCapped reads it as
// clamp(n * bonus + phi, 0, floor).
enum class CoordinateMode { kLiteral, kCapped };

// Whether phi is applied once per response or once per offending box.
enum class PenaltyMode { kOnce, kPerBox };

struct RewardConfig {
  double lambda = 0.1;
  double phi_penalty = -0.2;
  double per_box_bonus = 0.05;
  double coo_floor = 0.15;
  double ans_scale = 1.5;
  CoordinateMode coordinate_mode = CoordinateMode::kLiteral;
  PenaltyMode penalty_mode = PenaltyMode::kOnce;
  parse::CoordinateUnit coordinate_unit = parse::CoordinateUnit::kBox;
  text::RougeConfig rouge;

  // Throws ContractViolation if lambda is outside [0, 1].
  void Validate() const;
};

// Gold answer: a string for closed-ended and open-text tasks, a set of
// findings for multi-object tasks.
using Gold = std::variant<std::string, std::set<std::string>>;

struct RewardBreakdown {
  double r_ans = 0.0;
  double r_coo = 0.0;
  double r_fom = 0.0;
  double total = 0.0;
};

// Lowercase, trim, collapse whitespace, strip trailing periods.
std::string NormalizeAnswer(std::string_view answer);

// Splits a multi-object answer on ',', ';' and newlines; each element is
// normalized with text::NormalizeText. Empty elements are dropped.
std::set<std::string> ParseAnswerSet(std::string_view answer);

// Throws ContractViolation if the gold alternative does not match the task.
double AnswerScore(const parse::ParsedResponse& parsed, const Gold& gold,
                   TaskType task, const RewardConfig& config);

double CoordinateScore(const parse::ParsedResponse& parsed,
                       const parse::ImageDims& dims, const RewardConfig& config);

double FormatScore(const parse::ParsedResponse& parsed);

double MixReward(double r_ans, double r_fom, double r_coo, double lambda);

RewardBreakdown TotalReward(const parse::ParsedResponse& parsed,
                            const Gold& gold, TaskType task,
                            const parse::ImageDims& dims,
                            const RewardConfig& config);

// One line of a reward fixtures file:
//   {"raw_response", "gold", "task_type", "image_width", "image_height",
//    "expected_breakdown": {"r_ans", "r_coo", "r_fom", "total"}}
// "gold" is a string or an array of strings (multi-object). An optional
// "id" names the record.
struct RewardFixture {
  std::string id;
  std::string raw_response;
  Gold gold;
  TaskType task = TaskType::kClosedEnded;
  int image_width = 0;
  int image_height = 0;
  RewardBreakdown expected;
};

std::vector<RewardFixture> ReadRewardFixtures(std::istream& in);

}  // namespace cxrbench::reward

#endif  // CXRBENCH_REWARD_H_
