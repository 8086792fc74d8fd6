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

#include <algorithm>
#include <cctype>
#include <istream>
#include <string>

#include "cxrbench/contract.h"
#include "nlohmann/json.hpp"

namespace cxrbench::reward {

TaskType ParseTaskType(std::string_view name) {
  if (name == "closed_ended") return TaskType::kClosedEnded;
  if (name == "multi_object") return TaskType::kMultiObject;
  if (name == "open_text") return TaskType::kOpenText;
  throw ContractViolation("unknown task type: " + std::string(name));
}

std::string_view TaskTypeName(TaskType task) {
  switch (task) {
    case TaskType::kClosedEnded:
      return "closed_ended";
    case TaskType::kMultiObject:
      return "multi_object";
    case TaskType::kOpenText:
      return "open_text";
  }
  return "unknown";
}

void RewardConfig::Validate() const {
  CXRBENCH_REQUIRE(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1]");
  CXRBENCH_REQUIRE(ans_scale >= 0.0, "ans_scale must be nonnegative");
}

std::string NormalizeAnswer(std::string_view answer) {
  std::string out;
  bool pending_space = false;
  for (char ch : answer) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : ch);
  }
  while (!out.empty() && (out.back() == '.' || out.back() == ' ')) out.pop_back();
  return out;
}

std::set<std::string> ParseAnswerSet(std::string_view answer) {
  std::set<std::string> items;
  size_t start = 0;
  for (size_t i = 0; i <= answer.size(); ++i) {
    if (i == answer.size() || answer[i] == ',' || answer[i] == ';' ||
        answer[i] == '\n') {
      std::string item = text::NormalizeText(answer.substr(start, i - start));
      while (!item.empty() && (item.back() == '.' || item.back() == ' ')) {
        item.pop_back();
      }
      if (!item.empty()) items.insert(std::move(item));
      start = i + 1;
    }
  }
  return items;
}

double AnswerScore(const parse::ParsedResponse& parsed, const Gold& gold,
                   TaskType task, const RewardConfig& config) {
  const bool set_gold = std::holds_alternative<std::set<std::string>>(gold);
  CXRBENCH_REQUIRE(set_gold == (task == TaskType::kMultiObject),
                   "gold answer type does not match task type " +
                       std::string(TaskTypeName(task)));
  if (!parsed.boxed_answer) return 0.0;
  const std::string& answer = *parsed.boxed_answer;
  switch (task) {
    case TaskType::kClosedEnded: {
      const bool match =
          NormalizeAnswer(answer) == NormalizeAnswer(std::get<std::string>(gold));
      return match ? config.ans_scale : 0.0;
    }
    case TaskType::kMultiObject: {
      std::set<std::string> gold_items;
      for (const auto& g : std::get<std::set<std::string>>(gold)) {
        gold_items.insert(text::NormalizeText(g));
      }
      return config.ans_scale * text::SetF1(ParseAnswerSet(answer), gold_items).value;
    }
    case TaskType::kOpenText: {
      const auto candidate = text::Tokenize(answer);
      const auto reference = text::Tokenize(std::get<std::string>(gold));
      const double sum = text::BleuN(candidate, reference, 1, true).value +
                         text::BleuN(candidate, reference, 4, true).value +
                         text::RougeL(candidate, reference, config.rouge).value;
      return config.ans_scale * (sum / 3.0);
    }
  }
  return 0.0;
}

double CoordinateScore(const parse::ParsedResponse& parsed,
                       const parse::ImageDims& dims, const RewardConfig& config) {
  const int count = parse::CountCoordinates(parsed, config.coordinate_unit);
  const auto flags = parse::ValidateBoxes(parsed.boxes, dims);
  const auto offending = std::count(flags.begin(), flags.end(), false);
  double phi = 0.0;
  if (config.penalty_mode == PenaltyMode::kOnce) {
    phi = offending > 0 ? config.phi_penalty : 0.0;
  } else {
    phi = static_cast<double>(offending) * config.phi_penalty;
  }
  const double raw = count * config.per_box_bonus + phi;
  if (config.coordinate_mode == CoordinateMode::kLiteral) {
    return std::max(raw, config.coo_floor);
  }
  return std::clamp(raw, 0.0, config.coo_floor);
}

double FormatScore(const parse::ParsedResponse& parsed) {
  return parsed.format_ok ? 1.0 : 0.0;
}

double MixReward(double r_ans, double r_fom, double r_coo, double lambda) {
  return (1.0 - lambda) * r_ans + lambda * r_fom + r_coo;
}

RewardBreakdown TotalReward(const parse::ParsedResponse& parsed,
                            const Gold& gold, TaskType task,
                            const parse::ImageDims& dims,
                            const RewardConfig& config) {
  config.Validate();
  RewardBreakdown out;
  out.r_ans = AnswerScore(parsed, gold, task, config);
  out.r_coo = CoordinateScore(parsed, dims, config);
  out.r_fom = FormatScore(parsed);
  out.total = MixReward(out.r_ans, out.r_fom, out.r_coo, config.lambda);
  return out;
}

std::vector<RewardFixture> ReadRewardFixtures(std::istream& in) {
  std::vector<RewardFixture> fixtures;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RewardFixture f;
      f.id = j.value("id", "line" + std::to_string(line_no));
      f.raw_response = j.at("raw_response").get<std::string>();
      f.task = ParseTaskType(j.at("task_type").get<std::string>());
      const auto& gold = j.at("gold");
      if (gold.is_array()) {
        f.gold = gold.get<std::set<std::string>>();
      } else {
        f.gold = gold.get<std::string>();
      }
      f.image_width = j.at("image_width").get<int>();
      f.image_height = j.at("image_height").get<int>();
      const auto& e = j.at("expected_breakdown");
      f.expected = {e.at("r_ans").get<double>(), e.at("r_coo").get<double>(),
                    e.at("r_fom").get<double>(), e.at("total").get<double>()};
      fixtures.push_back(std::move(f));
    } catch (const nlohmann::json::exception& e) {
      throw ContractViolation("reward fixture line " + std::to_string(line_no) +
                              ": " + e.what());
    }
  }
  return fixtures;
}

}  // namespace cxrbench::reward
