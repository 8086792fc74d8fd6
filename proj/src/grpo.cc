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

#include "cxrbench/grpo.h"

#include <algorithm>
#include <cmath>

#include "cxrbench/contract.h"

namespace cxrbench::grpo {

void GrpoConfig::Validate() const {
  CXRBENCH_REQUIRE(epsilon > 0.0, "epsilon must be positive");
  CXRBENCH_REQUIRE(beta >= 0.0, "beta must be nonnegative");
  CXRBENCH_REQUIRE(group_size >= 2, "group size must be at least 2");
  CXRBENCH_REQUIRE(inner_steps >= 1, "inner_steps must be at least 1");
  CXRBENCH_REQUIRE(iterations >= 0, "iterations must be nonnegative");
}

std::vector<double> GroupAdvantages(std::span<const double> rewards,
                                    double degenerate_eps) {
  CXRBENCH_REQUIRE(rewards.size() >= 2, "a group needs at least two rewards");
  const double n = rewards.size();
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std = std::sqrt(var / n);
  std::vector<double> adv(rewards.size(), 0.0);
  if (std < degenerate_eps) return adv;
  for (size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / std;
  return adv;
}

double KlEstimate(double logp_ref, double logp_new, double ceiling) {
  const double log_ratio = logp_ref - logp_new;
  // expm1(x) - x is exact near zero where rho - 1 - ln(rho) cancels.
  if (log_ratio > std::log(ceiling + 1.0)) return ceiling;
  const double value = std::expm1(log_ratio) - log_ratio;
  return std::clamp(value, 0.0, ceiling);
}

double GrpoObjective(const RolloutGroup& group, const GrpoConfig& config) {
  CXRBENCH_REQUIRE(group.size() >= 2, "a group needs at least two outputs");
  CXRBENCH_REQUIRE(group.advantages.size() == group.size(),
                   "one advantage per output required");
  double total = 0.0;
  for (size_t i = 0; i < group.size(); ++i) {
    const TokenLogProbs& o = group.outputs[i];
    CXRBENCH_REQUIRE(o.logp_old.size() == o.size() &&
                         o.logp_new.size() == o.size() &&
                         o.logp_ref.size() == o.size(),
                     "log-probability arrays must have equal length");
    if (o.size() == 0) continue;
    const double adv = group.advantages[i];
    double sum = 0.0;
    for (size_t t = 0; t < o.size(); ++t) {
      const double ratio = std::exp(o.logp_new[t] - o.logp_old[t]);
      const double clipped =
          std::clamp(ratio, 1.0 - config.epsilon, 1.0 + config.epsilon);
      sum += std::min(ratio * adv, clipped * adv) -
             config.beta * KlEstimate(o.logp_ref[t], o.logp_new[t], config.kl_ceiling);
    }
    total += sum / static_cast<double>(o.size());
  }
  return total / static_cast<double>(group.size());
}

}  // namespace cxrbench::grpo
