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

#include "cxrbench/toy_policy.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "cxrbench/contract.h"
#include "cxrbench/random.h"

namespace cxrbench::grpo {
namespace {

int PrevState(const ToyPolicy& policy, std::span<const int> prefix,
              const std::vector<int>& tokens, size_t t) {
  if (t > 0) return tokens[t - 1];
  return prefix.empty() ? policy.begin_state() : prefix.back();
}

void CheckToken(const ToyPolicy& policy, int token) {
  CXRBENCH_REQUIRE(token >= 0 && token < policy.vocab_size(),
                   "token " + std::to_string(token) + " is not in the vocabulary");
}

}  // namespace

ToyPolicy::ToyPolicy(int num_contexts, int vocab_size, int max_length,
                     int eos_token)
    : num_contexts_(num_contexts),
      vocab_size_(vocab_size),
      max_length_(max_length),
      eos_token_(eos_token) {
  CXRBENCH_REQUIRE(num_contexts >= 1 && vocab_size >= 1 && max_length >= 1,
                   "policy dimensions must be positive");
  CXRBENCH_REQUIRE(eos_token < vocab_size, "eos token outside vocabulary");
  logits_.assign(static_cast<size_t>(num_contexts) * (vocab_size + 1) * vocab_size,
                 0.0);
}

size_t ToyPolicy::Index(int context, int prev, int next) const {
  return (static_cast<size_t>(context) * (vocab_size_ + 1) + prev) * vocab_size_ +
         next;
}

std::vector<double> ToyPolicy::Probabilities(int context, int prev) const {
  const double* row = &logits_[Index(context, prev, 0)];
  const double max = *std::max_element(row, row + vocab_size_);
  std::vector<double> p(vocab_size_);
  double z = 0.0;
  for (int k = 0; k < vocab_size_; ++k) {
    p[k] = std::exp(row[k] - max);
    z += p[k];
  }
  for (double& v : p) v /= z;
  return p;
}

double ToyPolicy::LogProb(int context, int prev, int next) const {
  const double* row = &logits_[Index(context, prev, 0)];
  const double max = *std::max_element(row, row + vocab_size_);
  double z = 0.0;
  for (int k = 0; k < vocab_size_; ++k) z += std::exp(row[k] - max);
  return row[next] - max - std::log(z);
}

double ToyPolicy::MeanAbsLogit() const {
  double sum = 0.0;
  for (double v : logits_) sum += std::abs(v);
  return sum / static_cast<double>(logits_.size());
}

double SftNll(const ToyPolicy& policy, std::span<const int> sequence,
              std::span<const int> conditioning) {
  int context = 0;
  std::span<const int> prefix;
  if (!conditioning.empty()) {
    context = conditioning.front();
    CXRBENCH_REQUIRE(context >= 0 && context < policy.num_contexts(),
                     "conditioning context out of range");
    prefix = conditioning.subspan(1);
  }
  for (int t : prefix) CheckToken(policy, t);
  for (int t : sequence) CheckToken(policy, t);
  std::vector<int> tokens(sequence.begin(), sequence.end());
  double nll = 0.0;
  for (size_t t = 0; t < tokens.size(); ++t) {
    nll -= policy.LogProb(context, PrevState(policy, prefix, tokens, t), tokens[t]);
  }
  return nll;
}

std::vector<double> SftGradient(const ToyPolicy& policy,
                                std::span<const int> sequence,
                                std::span<const int> conditioning) {
  int context = 0;
  std::span<const int> prefix;
  if (!conditioning.empty()) {
    context = conditioning.front();
    CXRBENCH_REQUIRE(context >= 0 && context < policy.num_contexts(),
                     "conditioning context out of range");
    prefix = conditioning.subspan(1);
  }
  for (int t : prefix) CheckToken(policy, t);
  for (int t : sequence) CheckToken(policy, t);
  std::vector<int> tokens(sequence.begin(), sequence.end());
  std::vector<double> grad(policy.logits().size(), 0.0);
  for (size_t t = 0; t < tokens.size(); ++t) {
    const int prev = PrevState(policy, prefix, tokens, t);
    const auto probs = policy.Probabilities(context, prev);
    const size_t base = policy.Index(context, prev, 0);
    for (int k = 0; k < policy.vocab_size(); ++k) {
      grad[base + k] += probs[k] - (k == tokens[t] ? 1.0 : 0.0);
    }
  }
  return grad;
}

TokenLogProbs SampleOutput(const ToyPolicy& policy, int context,
                           std::span<const int> prefix, std::mt19937_64& gen) {
  TokenLogProbs out;
  for (int t = 0; t < policy.max_length(); ++t) {
    const int prev = PrevState(policy, prefix, out.tokens, t);
    const auto probs = policy.Probabilities(context, prev);
    const double u = UniformDouble(gen);
    int token = policy.vocab_size() - 1;
    double cum = 0.0;
    for (int k = 0; k < policy.vocab_size(); ++k) {
      cum += probs[k];
      if (u < cum) {
        token = k;
        break;
      }
    }
    out.tokens.push_back(token);
    out.logp_old.push_back(policy.LogProb(context, prev, token));
    if (token == policy.eos_token()) break;
  }
  out.logp_new = out.logp_old;
  out.logp_ref = out.logp_old;
  return out;
}

RolloutGroup SampleGroup(const ToyPolicy& policy, int query_id, int context,
                         std::span<const int> prefix, int group_size,
                         uint64_t seed) {
  CXRBENCH_REQUIRE(group_size >= 2, "group size must be at least 2");
  RolloutGroup group;
  group.query_id = query_id;
  group.context = context;
  group.prefix.assign(prefix.begin(), prefix.end());
  for (int i = 0; i < group_size; ++i) {
    std::mt19937_64 gen(DeriveSeed(seed, static_cast<uint64_t>(query_id), i));
    group.outputs.push_back(SampleOutput(policy, context, prefix, gen));
  }
  return group;
}

void RefreshLogProbs(const ToyPolicy& policy, RolloutGroup& group) {
  for (auto& o : group.outputs) {
    o.logp_new.resize(o.size());
    for (size_t t = 0; t < o.size(); ++t) {
      o.logp_new[t] = policy.LogProb(
          group.context, PrevState(policy, group.prefix, o.tokens, t), o.tokens[t]);
    }
  }
}

void RefreshReferenceLogProbs(const ToyPolicy& reference, RolloutGroup& group) {
  for (auto& o : group.outputs) {
    o.logp_ref.resize(o.size());
    for (size_t t = 0; t < o.size(); ++t) {
      o.logp_ref[t] = reference.LogProb(
          group.context, PrevState(reference, group.prefix, o.tokens, t),
          o.tokens[t]);
    }
  }
}

double GrpoObjectiveForPolicy(const ToyPolicy& policy, RolloutGroup group,
                              const GrpoConfig& config) {
  RefreshLogProbs(policy, group);
  return GrpoObjective(group, config);
}

std::vector<double> GrpoGradient(const ToyPolicy& policy,
                                 const RolloutGroup& group,
                                 const GrpoConfig& config) {
  CXRBENCH_REQUIRE(group.size() >= 2, "a group needs at least two outputs");
  CXRBENCH_REQUIRE(group.advantages.size() == group.size(),
                   "one advantage per output required");
  std::vector<double> grad(policy.logits().size(), 0.0);
  const double inv_group = 1.0 / static_cast<double>(group.size());
  const double log_ceiling = std::log(config.kl_ceiling + 1.0);
  for (size_t i = 0; i < group.size(); ++i) {
    const TokenLogProbs& o = group.outputs[i];
    CXRBENCH_REQUIRE(o.logp_old.size() == o.size() && o.logp_ref.size() == o.size(),
                     "log-probability arrays must have equal length");
    if (o.size() == 0) continue;
    const double adv = group.advantages[i];
    const double scale = inv_group / static_cast<double>(o.size());
    for (size_t t = 0; t < o.size(); ++t) {
      const int prev = PrevState(policy, group.prefix, o.tokens, t);
      const auto probs = policy.Probabilities(group.context, prev);
      const double logp = std::log(probs[o.tokens[t]]);
      const double ratio = std::exp(logp - o.logp_old[t]);
      const double clipped =
          std::clamp(ratio, 1.0 - config.epsilon, 1.0 + config.epsilon);
      // d/d logp of min(ratio * A, clip(ratio) * A): the clipped branch is
      // constant whenever it is the strict minimum.
      double d_logp = ratio * adv <= clipped * adv ? ratio * adv : 0.0;
      const double log_ratio_ref = o.logp_ref[t] - logp;
      if (log_ratio_ref <= log_ceiling) {
        d_logp += config.beta * std::expm1(log_ratio_ref);
      }
      const double w = scale * d_logp;
      const size_t base = policy.Index(group.context, prev, 0);
      for (int k = 0; k < policy.vocab_size(); ++k) {
        grad[base + k] += w * ((k == o.tokens[t] ? 1.0 : 0.0) - probs[k]);
      }
    }
  }
  return grad;
}

}  // namespace cxrbench::grpo
