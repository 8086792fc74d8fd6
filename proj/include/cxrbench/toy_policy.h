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

// A desk-scale autoregressive policy: a context-conditioned bigram table of
// logits over a small macro-token vocabulary. Context is the query, the
// bigram state is the previous token (or begin-of-sequence).

#ifndef CXRBENCH_TOY_POLICY_H_
#define CXRBENCH_TOY_POLICY_H_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cxrbench/grpo.h"

namespace cxrbench::grpo {

class ToyPolicy {
 public:
  // All logits start at zero (uniform conditionals). `eos_token` ends a
  // sampled sequence; pass -1 for fixed-length sampling up to max_length.
  ToyPolicy(int num_contexts, int vocab_size, int max_length, int eos_token);

  int num_contexts() const { return num_contexts_; }
  int vocab_size() const { return vocab_size_; }
  int max_length() const { return max_length_; }
  int eos_token() const { return eos_token_; }
  int begin_state() const { return vocab_size_; }

  // Flat parameter vector, laid out [context][prev state][next token] with
  // vocab_size + 1 prev states (the last is begin-of-sequence).
  std::span<double> logits() { return logits_; }
  std::span<const double> logits() const { return logits_; }
  size_t Index(int context, int prev, int next) const;

  // Softmax of one conditional.
  std::vector<double> Probabilities(int context, int prev) const;
  double LogProb(int context, int prev, int next) const;

  double MeanAbsLogit() const;

 private:
  int num_contexts_;
  int vocab_size_;
  int max_length_;
  int eos_token_;
  std::vector<double> logits_;
};

// Negative log-likelihood of `sequence` under teacher forcing. The first
// conditioning token selects the context; the remaining conditioning tokens
// are a forced prefix that is not scored. Throws ContractViolation on tokens
// outside the vocabulary.
double SftNll(const ToyPolicy& policy, std::span<const int> sequence,
              std::span<const int> conditioning);

// Gradient of SftNll with respect to the logits (same layout as logits()).
std::vector<double> SftGradient(const ToyPolicy& policy,
                                std::span<const int> sequence,
                                std::span<const int> conditioning);

// Ancestral sample of one output with per-token log-probabilities.
TokenLogProbs SampleOutput(const ToyPolicy& policy, int context,
                           std::span<const int> prefix, std::mt19937_64& gen);

// G samples drawn with independent per-output seed streams derived from
// `seed`. Rewards and advantages are left empty; logp_new = logp_old and
// logp_ref = logp_old until RefreshLogProbs is called.
RolloutGroup SampleGroup(const ToyPolicy& policy, int query_id, int context,
                         std::span<const int> prefix, int group_size,
                         uint64_t seed);

// Recomputes logp_new (and logp_ref when `reference` is given) for every
// token of every output in the group.
void RefreshLogProbs(const ToyPolicy& policy, RolloutGroup& group);
void RefreshReferenceLogProbs(const ToyPolicy& reference, RolloutGroup& group);

// GrpoObjective with logp_new taken from `policy`.
double GrpoObjectiveForPolicy(const ToyPolicy& policy, RolloutGroup group,
                              const GrpoConfig& config);

// Analytic gradient of GrpoObjectiveForPolicy with respect to the policy
// logits, same layout as ToyPolicy::logits().
std::vector<double> GrpoGradient(const ToyPolicy& policy,
                                 const RolloutGroup& group,
                                 const GrpoConfig& config);

}  // namespace cxrbench::grpo

#endif  // CXRBENCH_TOY_POLICY_H_
