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

#include "cxrbench/toy_env.h"

#include <ostream>
#include <sstream>

#include "cxrbench/contract.h"
#include "cxrbench/random.h"
#include "nlohmann/json.hpp"

namespace cxrbench::grpo {
namespace {

constexpr uint64_t kEvalStream = 0xe7a1;
constexpr uint64_t kTrainStream = 0x7a11;

struct Accumulator {
  double reward = 0.0, format = 0.0, answer = 0.0, kl = 0.0;
  long outputs = 0, tokens = 0;

  void Add(const RolloutGroup& group,
           const std::vector<reward::RewardBreakdown>& scores,
           double kl_ceiling) {
    for (size_t i = 0; i < group.size(); ++i) {
      reward += scores[i].total;
      format += scores[i].r_fom;
      answer += scores[i].r_ans;
      ++outputs;
      const auto& o = group.outputs[i];
      for (size_t t = 0; t < o.size(); ++t) {
        kl += KlEstimate(o.logp_ref[t], o.logp_old[t], kl_ceiling);
        ++tokens;
      }
    }
  }

  Diagnostics Get() const {
    Diagnostics d;
    if (outputs > 0) {
      d.mean_reward = reward / outputs;
      d.format_rate = format / outputs;
      d.mean_answer_score = answer / outputs;
    }
    if (tokens > 0) d.mean_kl = kl / tokens;
    return d;
  }
};

}  // namespace

ToyEnvironment::ToyEnvironment(std::vector<std::string> vocabulary,
                               int eos_token, std::vector<ToyQuery> queries,
                               std::vector<std::vector<int>> demonstrations)
    : vocabulary_(std::move(vocabulary)),
      eos_token_(eos_token),
      queries_(std::move(queries)),
      demonstrations_(std::move(demonstrations)) {
  CXRBENCH_REQUIRE(demonstrations_.empty() || demonstrations_.size() == queries_.size(),
                   "one demonstration per query required");
  CXRBENCH_REQUIRE(!queries_.empty(), "environment needs at least one query");
  CXRBENCH_REQUIRE(eos_token_ >= 0 && eos_token_ < static_cast<int>(vocabulary_.size()),
                   "eos token outside vocabulary");
  for (size_t i = 0; i < queries_.size(); ++i) {
    CXRBENCH_REQUIRE(queries_[i].id == static_cast<int>(i),
                     "query ids must be 0..n-1 in order");
  }
}

ToyEnvironment ToyEnvironment::Bundled() {
  std::vector<std::string> vocab = {
      "<think>",
      "</think>",
      "lungs",
      "clear",
      "left",
      "pleural",
      "effusion",
      "[96, 300, 240, 452]",   // inside the 512x512 image
      "[380, 120, 640, 300]",  // x2 beyond the right edge
      "\\boxed{yes}",
      "\\boxed{no}",
      "\\boxed{left pleural effusion}",
      "\\boxed{lungs are clear}",
      "\\boxed{effusion, opacity}",
      "<eos>",
  };
  const parse::ImageDims dims(512, 512);
  std::vector<ToyQuery> queries = {
      {0, "Is there a pleural effusion?", reward::TaskType::kClosedEnded,
       std::string("yes"), dims},
      {1, "Is there a pneumothorax?", reward::TaskType::kClosedEnded,
       std::string("no"), dims},
      {2, "Describe the main finding and where it is.",
       reward::TaskType::kOpenText, std::string("left pleural effusion"), dims},
      {3, "List the abnormal findings.", reward::TaskType::kMultiObject,
       std::set<std::string>{"effusion", "opacity"}, dims},
  };
  std::vector<std::vector<int>> demos = {
      {0, 4, 5, 6, 7, 1, 9, 14},
      {0, 2, 3, 1, 10, 14},
      {0, 4, 5, 6, 7, 7, 7, 7, 1, 11},
      {0, 6, 7, 1, 13, 14},
  };
  return ToyEnvironment(std::move(vocab), 14, std::move(queries), std::move(demos));
}

std::string ToyEnvironment::Detokenize(std::span<const int> tokens) const {
  std::string out;
  for (int t : tokens) {
    if (t == eos_token_) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocabulary_.at(t);
  }
  return out;
}

ToyPolicy ToyEnvironment::InitialPolicy(int max_length) const {
  return ToyPolicy(static_cast<int>(queries_.size()),
                   static_cast<int>(vocabulary_.size()), max_length, eos_token_);
}

ToyPolicy ColdStartPolicy(const ToyEnvironment& env, int max_length, int steps,
                          double learning_rate) {
  ToyPolicy policy = env.InitialPolicy(max_length);
  for (int step = 0; step < steps; ++step) {
    std::vector<double> total(policy.logits().size(), 0.0);
    for (size_t q = 0; q < env.demonstrations().size(); ++q) {
      const int context[] = {static_cast<int>(q)};
      const auto grad = SftGradient(policy, env.demonstrations()[q], context);
      for (size_t k = 0; k < total.size(); ++k) total[k] += grad[k];
    }
    auto logits = policy.logits();
    for (size_t k = 0; k < total.size(); ++k) logits[k] -= learning_rate * total[k];
  }
  return policy;
}

std::vector<reward::RewardBreakdown> ScoreGroup(
    const ToyEnvironment& env, const ToyQuery& query,
    const reward::RewardConfig& config, RolloutGroup& group) {
  std::vector<reward::RewardBreakdown> scores;
  group.rewards.clear();
  for (const auto& o : group.outputs) {
    const auto parsed = parse::ParseResponse(env.Detokenize(o.tokens));
    scores.push_back(reward::TotalReward(parsed, query.gold, query.task,
                                         query.dims, config));
    group.rewards.push_back(scores.back().total);
  }
  return scores;
}

Diagnostics EvaluatePolicy(const ToyPolicy& policy, const ToyPolicy& reference,
                           const ToyEnvironment& env,
                           const reward::RewardConfig& config,
                           int samples_per_query, uint64_t seed) {
  Accumulator acc;
  for (const auto& query : env.queries()) {
    RolloutGroup group = SampleGroup(policy, query.id, query.id, {},
                                     samples_per_query, seed);
    RefreshReferenceLogProbs(reference, group);
    acc.Add(group, ScoreGroup(env, query, config, group), 1e6);
  }
  return acc.Get();
}

TrainResult TrainGrpo(const ToyEnvironment& env, const TrainOptions& options,
                      uint64_t seed) {
  const GrpoConfig& cfg = options.grpo;
  cfg.Validate();
  options.reward.Validate();
  ToyPolicy policy =
      ColdStartPolicy(env, options.max_length, options.cold_start_steps,
                      options.cold_start_learning_rate);
  const ToyPolicy reference = policy;
  const uint64_t eval_seed = DeriveSeed(seed, kEvalStream);

  TrainResult result{{},
                     EvaluatePolicy(policy, reference, env, options.reward,
                                    options.eval_samples_per_query, eval_seed),
                     {},
                     policy};
  const double num_queries = static_cast<double>(env.queries().size());

  for (int it = 0; it < cfg.iterations; ++it) {
    const uint64_t batch_seed = DeriveSeed(seed, kTrainStream, it);
    std::vector<RolloutGroup> groups;
    Accumulator acc;
    for (const auto& query : env.queries()) {
      RolloutGroup group = SampleGroup(policy, query.id, query.id, {},
                                       cfg.group_size, batch_seed);
      RefreshReferenceLogProbs(reference, group);
      const auto scores = ScoreGroup(env, query, options.reward, group);
      group.advantages = GroupAdvantages(group.rewards, cfg.degenerate_std_epsilon);
      acc.Add(group, scores, cfg.kl_ceiling);
      groups.push_back(std::move(group));
    }
    result.curve.push_back({it, acc.Get()});

    for (int step = 0; step < cfg.inner_steps; ++step) {
      std::vector<double> total(policy.logits().size(), 0.0);
      for (const auto& group : groups) {
        const auto grad = GrpoGradient(policy, group, cfg);
        for (size_t k = 0; k < total.size(); ++k) total[k] += grad[k];
      }
      auto logits = policy.logits();
      for (size_t k = 0; k < total.size(); ++k) {
        logits[k] += cfg.learning_rate * total[k] / num_queries;
      }
    }
    if (policy.MeanAbsLogit() > cfg.divergence_bound) {
      std::ostringstream msg;
      msg << "training diverged at iteration " << it << ": mean |logit| "
          << policy.MeanAbsLogit() << " exceeds " << cfg.divergence_bound;
      throw TrainingDiverged(msg.str(), result.curve);
    }
  }
  result.final = EvaluatePolicy(policy, reference, env, options.reward,
                                options.eval_samples_per_query, eval_seed);
  result.policy = policy;
  return result;
}

void WriteCurve(std::ostream& out, const std::vector<CurvePoint>& curve) {
  for (const auto& p : curve) {
    nlohmann::ordered_json j;
    j["iteration"] = p.iteration;
    j["mean_reward"] = p.diagnostics.mean_reward;
    j["format_rate"] = p.diagnostics.format_rate;
    j["mean_kl"] = p.diagnostics.mean_kl;
    j["mean_answer_score"] = p.diagnostics.mean_answer_score;
    out << j.dump() << '\n';
  }
}

}  // namespace cxrbench::grpo
