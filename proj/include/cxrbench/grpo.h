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

// Group-relative policy optimization: within-group reward standardization,
// the k3 KL estimator and the clipped surrogate objective.

#ifndef CXRBENCH_GRPO_H_
#define CXRBENCH_GRPO_H_

#include <span>
#include <string>
#include <vector>

namespace cxrbench::grpo {

struct GrpoConfig {
  double epsilon = 0.2;  // clip range
  double beta = 0.04;    // KL coefficient
  int group_size = 8;
  double learning_rate = 8.0;
  int iterations = 300;
  int inner_steps = 2;   // gradient steps per sampled batch
  double degenerate_std_epsilon = 1e-8;
  double kl_ceiling = 1e6;
  double divergence_bound = 50.0;  // halt if mean |logit| exceeds this

  // Throws ContractViolation on epsilon <= 0, beta < 0 or group_size < 2.
  void Validate() const;
};

// Per-token log-probabilities of one sampled output under the sampling
// (old), current (new) and frozen reference policies. All arrays align with
// `tokens`.
struct TokenLogProbs {
  std::vector<int> tokens;
  std::vector<double> logp_old;
  std::vector<double> logp_new;
  std::vector<double> logp_ref;

  size_t size() const { return tokens.size(); }
};

struct RolloutGroup {
  int query_id = 0;
  int context = 0;  // policy context the outputs were sampled under
  std::vector<int> prefix;  // forced tokens preceding every output
  std::vector<TokenLogProbs> outputs;
  std::vector<double> rewards;
  std::vector<double> advantages;

  size_t size() const { return outputs.size(); }
};

// (r_i - mean(r)) / std(r) with the population standard deviation. Groups
// whose std is below `degenerate_eps` carry no signal and get all zeros.
// Throws ContractViolation when fewer than two rewards are given.
std::vector<double> GroupAdvantages(std::span<const double> rewards,
                                    double degenerate_eps = 1e-8);

// rho - ln(rho) - 1 with rho = pi_ref / pi_new, evaluated in log space.
// Saturates at `ceiling` instead of overflowing.
double KlEstimate(double logp_ref, double logp_new, double ceiling = 1e6);

// Clipped surrogate minus the KL penalty, averaged over tokens of each
// output and then over the group. Uses the stored logp_new arrays.
double GrpoObjective(const RolloutGroup& group, const GrpoConfig& config);

}  // namespace cxrbench::grpo

#endif  // CXRBENCH_GRPO_H_
