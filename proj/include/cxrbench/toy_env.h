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

// Synthetic grounded-QA environment and the GRPO training loop that drives
// ToyPolicy through the full parse -> reward -> advantage -> update stack.

#ifndef CXRBENCH_TOY_ENV_H_
#define CXRBENCH_TOY_ENV_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cxrbench/grpo.h"
#include "cxrbench/response_parser.h"
#include "cxrbench/reward.h"
#include "cxrbench/toy_policy.h"

namespace cxrbench::grpo {

struct ToyQuery {
  int id = 0;
  std::string prompt;
  reward::TaskType task = reward::TaskType::kClosedEnded;
  reward::Gold gold;
  parse::ImageDims dims{512, 512};
};

// Queries about a synthetic 512x512 "image" with a planted left pleural
// effusion. Vocabulary tokens are text fragments; a sampled token sequence is
// joined with spaces and scored by the real parser and reward engine.
class ToyEnvironment {
 public:
  // `demonstrations[q]` is a well-formed reasoning trace for query q used by
  // the cold-start stage; it may be empty.
  ToyEnvironment(std::vector<std::string> vocabulary, int eos_token,
                 std::vector<ToyQuery> queries,
                 std::vector<std::vector<int>> demonstrations = {});

  static ToyEnvironment Bundled();

  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const std::vector<ToyQuery>& queries() const { return queries_; }
  const std::vector<std::vector<int>>& demonstrations() const {
    return demonstrations_;
  }
  int eos_token() const { return eos_token_; }

  // Joins token strings with single spaces; the end-of-sequence token is
  // dropped.
  std::string Detokenize(std::span<const int> tokens) const;

  // Uniform policy with one context per query.
  ToyPolicy InitialPolicy(int max_length = 10) const;

 private:
  std::vector<std::string> vocabulary_;
  int eos_token_;
  std::vector<ToyQuery> queries_;
  std::vector<std::vector<int>> demonstrations_;
};

// Cold-start stage: `steps` full-batch gradient-descent steps on the summed
// next-token loss of the demonstrations, starting from the uniform policy.
ToyPolicy ColdStartPolicy(const ToyEnvironment& env, int max_length, int steps,
                          double learning_rate);

struct Diagnostics {
  double mean_reward = 0.0;
  double format_rate = 0.0;
  double mean_kl = 0.0;  // token-mean KL estimate against the reference
  double mean_answer_score = 0.0;

  friend bool operator==(const Diagnostics&, const Diagnostics&) = default;
};

struct CurvePoint {
  int iteration = 0;
  Diagnostics diagnostics;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  Diagnostics initial;  // held-out evaluation of the starting policy
  Diagnostics final;    // same evaluation of the trained policy
  ToyPolicy policy;
};

struct TrainOptions {
  GrpoConfig grpo;
  reward::RewardConfig reward;
  int max_length = 10;
  // Deliberately short: the starting policy has seen the output format but
  // rarely completes it.
  int cold_start_steps = 5;
  double cold_start_learning_rate = 0.45;
  int eval_samples_per_query = 256;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::vector<CurvePoint> curve)
      : std::runtime_error(what), curve_(std::move(curve)) {}
  const std::vector<CurvePoint>& curve() const { return curve_; }

 private:
  std::vector<CurvePoint> curve_;
};

// Scores every output of `group` against `query`; fills rewards.
std::vector<reward::RewardBreakdown> ScoreGroup(const ToyEnvironment& env,
                                                const ToyQuery& query,
                                                const reward::RewardConfig& config,
                                                RolloutGroup& group);

// Samples `samples_per_query` outputs per query and reports the mean
// diagnostics.
Diagnostics EvaluatePolicy(const ToyPolicy& policy, const ToyPolicy& reference,
                           const ToyEnvironment& env,
                           const reward::RewardConfig& config,
                           int samples_per_query, uint64_t seed);

// Runs the cold start, freezes the result as the reference policy, then
// iterates sample -> reward -> advantage -> gradient ascent. Deterministic
// given `seed`. Throws TrainingDiverged when mean |logit| exceeds the bound.
TrainResult TrainGrpo(const ToyEnvironment& env, const TrainOptions& options,
                      uint64_t seed);

// One JSON object per line:
//   {"iteration", "mean_reward", "format_rate", "mean_kl", "mean_answer_score"}
void WriteCurve(std::ostream& out, const std::vector<CurvePoint>& curve);

}  // namespace cxrbench::grpo

#endif  // CXRBENCH_TOY_ENV_H_
