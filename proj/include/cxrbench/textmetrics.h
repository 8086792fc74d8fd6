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

// Deterministic text-similarity metrics: BLEU-n, ROUGE-L, an exact-match
// METEOR variant and set F1. All functions are pure.

#ifndef CXRBENCH_TEXTMETRICS_H_
#define CXRBENCH_TEXTMETRICS_H_

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cxrbench::text {

// Lowercase tokens with no whitespace; punctuation characters are tokens of
// their own.
using TokenSequence = std::vector<std::string>;

struct MetricScore {
  double value = 0.0;  // always in [0, 1]
  std::string metric_name;
  bool smoothed = false;
};

struct RougeConfig {
  double beta = 1.2;
};

struct MeteorConfig {
  double alpha = 0.9;
  double gamma = 0.5;
  double beta = 3.0;
  // Budget for the exact minimum-chunk search. When exhausted the best
  // alignment found so far (at worst the greedy one) is used.
  long search_budget = 200000;
};

TokenSequence Tokenize(std::string_view text);

// Tokenize and rejoin with single spaces. Used to normalize set elements.
std::string NormalizeText(std::string_view text);

// BLEU with modified n-gram precisions for k = 1..n and brevity penalty
// min(1, exp(1 - r/c)). With `smooth`, precisions for k >= 2 use add-one
// smoothing on numerator and denominator. An empty candidate scores 0.
MetricScore BleuN(const TokenSequence& candidate, const TokenSequence& reference,
                  int n, bool smooth);

// Corpus-level BLEU: clipped k-gram counts, candidate k-gram totals and
// lengths are pooled over all (candidate, reference) pairs before taking
// precisions and the brevity penalty. No smoothing. Throws ContractViolation
// on size mismatch.
MetricScore CorpusBleuN(const std::vector<TokenSequence>& candidates,
                        const std::vector<TokenSequence>& references, int n);

// Length of the longest common subsequence.
int LcsLength(const TokenSequence& a, const TokenSequence& b);

MetricScore RougeL(const TokenSequence& candidate,
                   const TokenSequence& reference,
                   const RougeConfig& config = {});

// Unigram alignment statistics used by MeteorSimple.
struct Alignment {
  int matches = 0;
  int chunks = 0;
  bool exact = true;  // false if the chunk search ran out of budget
};

// Maximum-cardinality exact-match alignment with the fewest chunks.
Alignment AlignUnigrams(const TokenSequence& candidate,
                        const TokenSequence& reference, long search_budget);

MetricScore MeteorSimple(const TokenSequence& candidate,
                         const TokenSequence& reference,
                         const MeteorConfig& config = {});

// F1 = 2|P∩G| / (|P| + |G|). Two empty sets agree perfectly (1.0).
MetricScore SetF1(const std::set<std::string>& predicted,
                  const std::set<std::string>& gold);

}  // namespace cxrbench::text

#endif  // CXRBENCH_TEXTMETRICS_H_
