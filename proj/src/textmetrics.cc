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

#include "cxrbench/textmetrics.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "cxrbench/contract.h"

namespace cxrbench::text {
namespace {

bool IsSpace(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

bool IsPunct(unsigned char c) { return c < 128 && std::ispunct(c); }

std::unordered_map<std::string, int> CountNgrams(const TokenSequence& tokens,
                                                 int k) {
  std::unordered_map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < k) return counts;
  for (size_t i = 0; i + k <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < k; ++j) {
      key.push_back('\x1f');
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

double Clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Chunks of an alignment given as match[i] = reference index or -1.
int CountChunks(const std::vector<int>& match) {
  int chunks = 0;
  for (size_t i = 0; i < match.size(); ++i) {
    if (match[i] < 0) continue;
    bool continues = i > 0 && match[i - 1] >= 0 && match[i - 1] + 1 == match[i];
    if (!continues) ++chunks;
  }
  return chunks;
}

// Repeatedly take the longest common run of unused positions.
std::vector<int> GreedyAlignment(const std::vector<int>& cand,
                                 const std::vector<int>& ref) {
  const int n = cand.size();
  const int m = ref.size();
  std::vector<int> match(n, -1);
  std::vector<bool> ref_used(m, false);
  while (true) {
    int best_len = 0, best_i = -1, best_j = -1;
    for (int i = 0; i < n; ++i) {
      if (match[i] >= 0 || cand[i] < 0) continue;
      for (int j = 0; j < m; ++j) {
        int len = 0;
        while (i + len < n && j + len < m && match[i + len] < 0 &&
               !ref_used[j + len] && cand[i + len] >= 0 &&
               cand[i + len] == ref[j + len]) {
          ++len;
        }
        if (len > best_len) {
          best_len = len;
          best_i = i;
          best_j = j;
        }
      }
    }
    if (best_len == 0) break;
    for (int k = 0; k < best_len; ++k) {
      match[best_i + k] = best_j + k;
      ref_used[best_j + k] = true;
    }
  }
  return match;
}

class ChunkSearch {
 public:
  ChunkSearch(const std::vector<int>& cand, const std::vector<int>& ref,
              int vocab, int target, long budget)
      : cand_(cand), ref_(ref), vocab_(vocab), target_(target),
        budget_(budget), used_(ref.size(), false) {
    suffix_.assign(cand.size() + 1, std::vector<int>(vocab, 0));
    for (int i = static_cast<int>(cand.size()) - 1; i >= 0; --i) {
      suffix_[i] = suffix_[i + 1];
      if (cand[i] >= 0) ++suffix_[i][cand[i]];
    }
    ref_free_.assign(vocab, 0);
    for (int t : ref) {
      if (t >= 0) ++ref_free_[t];
    }
  }

  // Minimum number of chunks over maximum alignments, or -1 when the state
  // budget is exhausted.
  int Solve() {
    int result = Visit(0, -1, 0);
    return exhausted_ ? -1 : result;
  }

 private:
  static constexpr int kInf = std::numeric_limits<int>::max() / 2;

  std::string Key(int i, int last) const {
    std::string key(reinterpret_cast<const char*>(&i), sizeof(i));
    key.append(reinterpret_cast<const char*>(&last), sizeof(last));
    uint64_t word = 0;
    for (size_t j = 0; j < used_.size(); ++j) {
      if (used_[j]) word |= uint64_t{1} << (j % 64);
      if (j % 64 == 63 || j + 1 == used_.size()) {
        key.append(reinterpret_cast<const char*>(&word), sizeof(word));
        word = 0;
      }
    }
    return key;
  }

  int UpperBound(int i) const {
    int total = 0;
    for (int w = 0; w < vocab_; ++w) total += std::min(suffix_[i][w], ref_free_[w]);
    return total;
  }

  // `last` is the reference index matched at i - 1, or -1.
  int Visit(int i, int last, int matched) {
    if (exhausted_) return kInf;
    if (matched == target_) return 0;
    if (i == static_cast<int>(cand_.size())) return kInf;
    if (matched + UpperBound(i) < target_) return kInf;
    std::string key = Key(i, last);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    if (static_cast<long>(memo_.size()) >= budget_) {
      exhausted_ = true;
      return kInf;
    }
    int best = Visit(i + 1, -1, matched);
    const int token = cand_[i];
    if (token >= 0) {
      for (size_t j = 0; j < ref_.size(); ++j) {
        if (used_[j] || ref_[j] != token) continue;
        used_[j] = true;
        --ref_free_[token];
        int sub = Visit(i + 1, static_cast<int>(j), matched + 1);
        ++ref_free_[token];
        used_[j] = false;
        if (sub >= kInf) continue;
        int cost = sub + (last >= 0 && last + 1 == static_cast<int>(j) ? 0 : 1);
        best = std::min(best, cost);
      }
    }
    memo_.emplace(std::move(key), best);
    return best;
  }

  const std::vector<int>& cand_;
  const std::vector<int>& ref_;
  int vocab_;
  int target_;
  long budget_;
  bool exhausted_ = false;
  std::vector<bool> used_;
  std::vector<std::vector<int>> suffix_;
  std::vector<int> ref_free_;
  std::unordered_map<std::string, int> memo_;
};

}  // namespace

TokenSequence Tokenize(std::string_view text) {
  TokenSequence tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (IsSpace(c)) {
      flush();
    } else if (IsPunct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return tokens;
}

std::string NormalizeText(std::string_view text) {
  std::string out;
  for (const std::string& token : Tokenize(text)) {
    if (!out.empty()) out.push_back(' ');
    out += token;
  }
  return out;
}

MetricScore BleuN(const TokenSequence& candidate, const TokenSequence& reference,
                  int n, bool smooth) {
  CXRBENCH_REQUIRE(n >= 1 && n <= 4, "BLEU order must be in 1..4");
  MetricScore score{0.0, "BLEU-" + std::to_string(n), smooth};
  if (candidate.empty()) return score;
  double log_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    auto cand_counts = CountNgrams(candidate, k);
    auto ref_counts = CountNgrams(reference, k);
    double clipped = 0.0;
    for (const auto& [gram, count] : cand_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) clipped += std::min(count, it->second);
    }
    double total = std::max<int>(0, static_cast<int>(candidate.size()) - k + 1);
    if (smooth && k >= 2) {
      clipped += 1.0;
      total += 1.0;
    }
    if (clipped <= 0.0 || total <= 0.0) return score;
    log_sum += std::log(clipped / total);
  }
  const double c = candidate.size();
  const double r = reference.size();
  const double brevity = c >= r ? 1.0 : std::exp(1.0 - r / c);
  score.value = Clamp01(brevity * std::exp(log_sum / n));
  return score;
}

MetricScore CorpusBleuN(const std::vector<TokenSequence>& candidates,
                        const std::vector<TokenSequence>& references, int n) {
  CXRBENCH_REQUIRE(n >= 1 && n <= 4, "BLEU order must be in 1..4");
  CXRBENCH_REQUIRE(candidates.size() == references.size(),
                   "corpus BLEU needs one reference per candidate");
  MetricScore score{0.0, "corpus-BLEU-" + std::to_string(n), false};
  std::vector<double> clipped(n + 1, 0.0), total(n + 1, 0.0);
  double c = 0.0, r = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    c += candidates[i].size();
    r += references[i].size();
    for (int k = 1; k <= n; ++k) {
      auto cand_counts = CountNgrams(candidates[i], k);
      auto ref_counts = CountNgrams(references[i], k);
      for (const auto& [gram, count] : cand_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) clipped[k] += std::min(count, it->second);
      }
      total[k] += std::max<int>(0, static_cast<int>(candidates[i].size()) - k + 1);
    }
  }
  if (c == 0.0) return score;
  double log_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    if (clipped[k] <= 0.0 || total[k] <= 0.0) return score;
    log_sum += std::log(clipped[k] / total[k]);
  }
  const double brevity = c >= r ? 1.0 : std::exp(1.0 - r / c);
  score.value = Clamp01(brevity * std::exp(log_sum / n));
  return score;
}

int LcsLength(const TokenSequence& a, const TokenSequence& b) {
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

MetricScore RougeL(const TokenSequence& candidate,
                   const TokenSequence& reference, const RougeConfig& config) {
  MetricScore score{0.0, "ROUGE-L", false};
  if (candidate.empty() || reference.empty()) return score;
  const int lcs = LcsLength(candidate, reference);
  if (lcs == 0) return score;
  const double precision = static_cast<double>(lcs) / candidate.size();
  const double recall = static_cast<double>(lcs) / reference.size();
  const double b2 = config.beta * config.beta;
  score.value =
      Clamp01((1.0 + b2) * precision * recall / (recall + b2 * precision));
  return score;
}

Alignment AlignUnigrams(const TokenSequence& candidate,
                        const TokenSequence& reference, long search_budget) {
  // Map tokens shared by both sides to dense ids; others become -1.
  std::unordered_map<std::string, int> ref_ids;
  for (const auto& t : reference) ref_ids.emplace(t, 0);
  std::unordered_map<std::string, int> ids;
  std::vector<int> cand(candidate.size(), -1), ref(reference.size(), -1);
  for (size_t i = 0; i < candidate.size(); ++i) {
    if (!ref_ids.count(candidate[i])) continue;
    auto [it, inserted] = ids.emplace(candidate[i], static_cast<int>(ids.size()));
    cand[i] = it->second;
  }
  for (size_t j = 0; j < reference.size(); ++j) {
    auto it = ids.find(reference[j]);
    if (it != ids.end()) ref[j] = it->second;
  }
  const int vocab = ids.size();
  std::vector<int> cand_count(vocab, 0), ref_count(vocab, 0);
  for (int t : cand) if (t >= 0) ++cand_count[t];
  for (int t : ref) if (t >= 0) ++ref_count[t];
  Alignment result;
  for (int w = 0; w < vocab; ++w) result.matches += std::min(cand_count[w], ref_count[w]);
  if (result.matches == 0) return result;

  const int greedy_chunks = CountChunks(GreedyAlignment(cand, ref));
  ChunkSearch search(cand, ref, vocab, result.matches, search_budget);
  const int exact_chunks = search.Solve();
  if (exact_chunks < 0) {
    result.chunks = greedy_chunks;
    result.exact = false;
  } else {
    result.chunks = exact_chunks;
  }
  return result;
}

MetricScore MeteorSimple(const TokenSequence& candidate,
                         const TokenSequence& reference,
                         const MeteorConfig& config) {
  MetricScore score{0.0, "METEOR", false};
  if (candidate.empty() || reference.empty()) return score;
  const Alignment alignment =
      AlignUnigrams(candidate, reference, config.search_budget);
  if (alignment.matches == 0) return score;
  const double m = alignment.matches;
  const double precision = m / candidate.size();
  const double recall = m / reference.size();
  const double fmean = precision * recall /
                       (config.alpha * precision + (1.0 - config.alpha) * recall);
  const double penalty =
      config.gamma * std::pow(alignment.chunks / m, config.beta);
  score.value = Clamp01(fmean * (1.0 - penalty));
  return score;
}

MetricScore SetF1(const std::set<std::string>& predicted,
                  const std::set<std::string>& gold) {
  MetricScore score{0.0, "F1", false};
  if (predicted.empty() && gold.empty()) {
    score.value = 1.0;
    return score;
  }
  int overlap = 0;
  for (const auto& item : predicted) overlap += gold.count(item);
  score.value = 2.0 * overlap / static_cast<double>(predicted.size() + gold.size());
  return score;
}

}  // namespace cxrbench::text
