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

#include "cxrbench/arena.h"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "Eigen/Dense"
#include "cxrbench/contract.h"
#include "cxrbench/random.h"
#include "nlohmann/json.hpp"

namespace cxrbench::arena {
namespace {

constexpr uint64_t kPairStream = 0x9a1;
constexpr uint64_t kSampleStream = 0x5a3;
constexpr uint64_t kJudgeStream = 0x1d6;

struct PairStat {
  int m1 = 0;
  int m2 = 0;
  double weight = 0.0;  // sum of 1/P
  double wins = 0.0;    // sum of H/P
};

std::vector<PairStat> Aggregate(const std::vector<Battle>& battles,
                                int num_models) {
  std::vector<PairStat> stats(NumPairs(num_models));
  for (const Battle& b : battles) {
    CXRBENCH_REQUIRE(b.m1 != b.m2 && b.m1 >= 0 && b.m2 >= 0 &&
                         b.m1 < num_models && b.m2 < num_models,
                     "battle references an invalid model pair");
    CXRBENCH_REQUIRE(b.propensity > 0.0, "battle propensity must be positive");
    PairStat& s = stats[PairId(b.m1, b.m2, num_models)];
    s.m1 = b.m1;
    s.m2 = b.m2;
    s.weight += 1.0 / b.propensity;
    s.wins += b.outcome / b.propensity;
  }
  stats.erase(std::remove_if(stats.begin(), stats.end(),
                             [](const PairStat& s) { return s.weight == 0.0; }),
              stats.end());
  return stats;
}

double Sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// log(1 + exp(x)) without overflow.
double Softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double Objective(const std::vector<PairStat>& stats, const Eigen::VectorXd& xi,
                 double ridge) {
  double f = ridge * xi.squaredNorm();
  for (const auto& s : stats) {
    const double d = xi[s.m1] - xi[s.m2];
    f += s.wins * Softplus(-d) + (s.weight - s.wins) * Softplus(d);
  }
  return f;
}

// Hessian of the data term only.
Eigen::MatrixXd DataHessian(const std::vector<PairStat>& stats,
                            const Eigen::VectorXd& xi) {
  const int m = xi.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, m);
  for (const auto& s : stats) {
    const double p = Sigmoid(xi[s.m1] - xi[s.m2]);
    const double c = s.weight * p * (1.0 - p);
    h(s.m1, s.m1) += c;
    h(s.m2, s.m2) += c;
    h(s.m1, s.m2) -= c;
    h(s.m2, s.m1) -= c;
  }
  return h;
}

Eigen::VectorXd Gradient(const std::vector<PairStat>& stats,
                         const Eigen::VectorXd& xi, double ridge) {
  Eigen::VectorXd g = 2.0 * ridge * xi;
  for (const auto& s : stats) {
    const double p = Sigmoid(xi[s.m1] - xi[s.m2]);
    const double r = s.weight * p - s.wins;
    g[s.m1] += r;
    g[s.m2] -= r;
  }
  return g;
}

Eigen::VectorXd Fit(const std::vector<Battle>& battles, int num_models,
                    const BtOptions& options) {
  const auto stats = Aggregate(battles, num_models);
  double total_weight = 0.0;
  for (const auto& s : stats) total_weight += s.weight;
  // Gradient entries are sums of weighted residuals, so their rounding floor
  // grows with the total weight.
  const double tolerance = options.tolerance * std::max(1.0, total_weight);
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(num_models);
  const Eigen::MatrixXd ridge_h =
      2.0 * options.ridge * Eigen::MatrixXd::Identity(num_models, num_models);
  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    const Eigen::VectorXd g = Gradient(stats, xi, options.ridge);
    if (g.norm() <= tolerance) {
      return xi.array() - xi.mean();
    }
    if (iter == options.max_iterations) break;
    const Eigen::MatrixXd h = DataHessian(stats, xi) + ridge_h;
    const Eigen::VectorXd step = h.ldlt().solve(-g);
    const double f0 = Objective(stats, xi, options.ridge);
    const double slope = g.dot(step);
    double t = 1.0;
    while (t > 1e-12 &&
           Objective(stats, xi + t * step, options.ridge) > f0 + 1e-4 * t * slope) {
      t *= 0.5;
    }
    xi += t * step;
  }
  throw ConvergenceError("Bradley-Terry fit did not reach gradient norm " +
                             std::to_string(options.tolerance),
                         xi.array() - xi.mean());
}

std::vector<double> Distribution(int num_models, const std::vector<int>& counts,
                                 const Eigen::MatrixXd& covariance,
                                 SamplingPolicy policy) {
  CXRBENCH_REQUIRE(num_models >= 2, "an arena needs at least two models");
  const int pairs = NumPairs(num_models);
  std::vector<double> p(pairs, 0.0);
  if (policy == SamplingPolicy::kAdaptive) {
    const int unvisited = std::count(counts.begin(), counts.end(), 0);
    if (unvisited > 0) {
      for (int a = 0; a < pairs; ++a) p[a] = counts[a] == 0 ? 1.0 / unvisited : 0.0;
      return p;
    }
    if (covariance.size() > 0) {
      double total = 0.0;
      for (int a = 0; a < pairs; ++a) {
        const auto [m1, m2] = PairModels(a, num_models);
        const double v = std::max(0.0, PairVariance(covariance, m1, m2));
        const double n = counts[a];
        p[a] = std::sqrt(v / n) - std::sqrt(v / (n + 1.0));
        total += p[a];
      }
      if (total > 0.0 && std::isfinite(total)) {
        for (double& x : p) x /= total;
        return p;
      }
    }
  }
  std::fill(p.begin(), p.end(), 1.0 / pairs);
  return p;
}

std::vector<double> Ranks(const std::vector<double>& v) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (i + j) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

int NumPairs(int num_models) { return num_models * (num_models - 1); }

int PairId(int m1, int m2, int num_models) {
  return m1 * (num_models - 1) + (m2 < m1 ? m2 : m2 - 1);
}

std::pair<int, int> PairModels(int pair_id, int num_models) {
  const int m1 = pair_id / (num_models - 1);
  int m2 = pair_id % (num_models - 1);
  if (m2 >= m1) ++m2;
  return {m1, m2};
}

ArenaState::ArenaState(int num_models)
    : num_models(num_models),
      pair_counts(std::max(0, NumPairs(num_models)), 0),
      scores(Eigen::VectorXd::Zero(std::max(0, num_models))),
      normalized(std::max(0, num_models), 0.5) {
  CXRBENCH_REQUIRE(num_models >= 2, "an arena needs at least two models");
}

void ArenaState::Append(const Battle& battle) {
  CXRBENCH_REQUIRE(battle.m1 != battle.m2, "a battle needs two distinct models");
  CXRBENCH_REQUIRE(battle.propensity > 0.0, "battle propensity must be positive");
  CXRBENCH_REQUIRE(battle.m1 >= 0 && battle.m1 < num_models && battle.m2 >= 0 &&
                       battle.m2 < num_models,
                   "battle model index out of range");
  battles.push_back(battle);
  ++pair_counts[PairId(battle.m1, battle.m2, num_models)];
}

double PairVariance(const Eigen::MatrixXd& covariance, int m1, int m2) {
  return covariance(m1, m1) + covariance(m2, m2) - 2.0 * covariance(m1, m2);
}

double MaxPairVariance(const Eigen::MatrixXd& covariance) {
  double best = 0.0;
  for (int i = 0; i < covariance.rows(); ++i) {
    for (int j = i + 1; j < covariance.rows(); ++j) {
      best = std::max(best, PairVariance(covariance, i, j));
    }
  }
  return best;
}

int DrawPair(const std::vector<double>& p, double u) {
  double cum = 0.0;
  int last_positive = 0;
  for (size_t a = 0; a < p.size(); ++a) {
    if (p[a] <= 0.0) continue;
    last_positive = a;
    cum += p[a];
    if (u < cum) return a;
  }
  return last_positive;
}

std::vector<double> PairSamplingDistribution(const ArenaState& state,
                                             SamplingPolicy policy) {
  return Distribution(state.num_models, state.pair_counts, state.covariance, policy);
}

Eigen::VectorXd FitBradleyTerry(const std::vector<Battle>& battles,
                                int num_models, const BtOptions& options) {
  CXRBENCH_REQUIRE(num_models >= 2, "need at least two models");
  std::vector<bool> seen(num_models, false);
  for (const Battle& b : battles) {
    if (b.m1 >= 0 && b.m1 < num_models) seen[b.m1] = true;
    if (b.m2 >= 0 && b.m2 < num_models) seen[b.m2] = true;
  }
  for (int m = 0; m < num_models; ++m) {
    CXRBENCH_REQUIRE(seen[m], "model " + std::to_string(m) + " appears in no battle");
  }
  return Fit(battles, num_models, options);
}

double BradleyTerryObjective(const std::vector<Battle>& battles,
                             const Eigen::VectorXd& xi, double ridge) {
  return Objective(Aggregate(battles, xi.size()), xi, ridge);
}

Eigen::MatrixXd EstimateCovariance(const std::vector<Battle>& battles,
                                   const Eigen::VectorXd& xi, double ridge,
                                   std::string* warning) {
  const int m = xi.size();
  const auto stats = Aggregate(battles, m);
  const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(m, m);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Constant(m, m, 1.0 / m);
  const Eigen::MatrixXd proj = ident - ones;
  Eigen::MatrixXd restricted =
      proj * (DataHessian(stats, xi) + 2.0 * ridge * ident) * proj;
  // On the mean-zero subspace `restricted` is the Hessian; adding the
  // projector onto the ones direction makes it invertible without touching
  // that subspace.
  double escalation = std::max(ridge, 1e-12);
  for (int attempt = 0; attempt < 20; ++attempt) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(restricted + ones);
    const double min_ev = eig.eigenvalues().minCoeff();
    const double max_ev = eig.eigenvalues().maxCoeff();
    if (min_ev > 1e-12 * std::max(1.0, max_ev)) {
      const Eigen::MatrixXd inv = eig.eigenvectors() *
                                  eig.eigenvalues().cwiseInverse().asDiagonal() *
                                  eig.eigenvectors().transpose();
      Eigen::MatrixXd cov = proj * inv * proj + ridge * ones;
      return 0.5 * (cov + cov.transpose());
    }
    if (warning) {
      *warning = "singular Hessian; covariance ridge escalated to " +
                 std::to_string(escalation);
    }
    restricted += escalation * proj;
    escalation *= 10.0;
  }
  throw ConvergenceError("covariance estimate stayed singular", xi);
}

std::vector<double> NormalizeScores(const Eigen::VectorXd& xi) {
  std::vector<double> out(xi.size(), 0.5);
  if (xi.size() == 0) return out;
  const double lo = xi.minCoeff();
  const double scale = (xi.array() - lo).abs().maxCoeff();
  if (!(scale > 0.0)) return out;
  for (int i = 0; i < xi.size(); ++i) out[i] = (xi[i] - lo) / scale;
  return out;
}

double SpearmanCorrelation(const std::vector<double>& a,
                           const std::vector<double>& b) {
  CXRBENCH_REQUIRE(a.size() == b.size() && a.size() >= 2,
                   "Spearman correlation needs two equal-length samples");
  const auto ra = Ranks(a);
  const auto rb = Ranks(b);
  const double n = a.size();
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

Eigen::MatrixXd WinRateMatrix(const ArenaState& state) {
  const int m = state.num_models;
  Eigen::MatrixXd wins = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(m, m);
  for (const Battle& b : state.battles) {
    wins(b.m1, b.m2) += b.outcome;
    total(b.m1, b.m2) += 1.0;
  }
  Eigen::MatrixXd rate(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      rate(i, j) = total(i, j) > 0 ? wins(i, j) / total(i, j)
                                   : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return rate;
}

Eigen::MatrixXi CountMatrix(const ArenaState& state) {
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(state.num_models, state.num_models);
  for (int a = 0; a < NumPairs(state.num_models); ++a) {
    const auto [m1, m2] = PairModels(a, state.num_models);
    counts(m1, m2) = state.pair_counts[a];
  }
  return counts;
}

SimulatedJudge::SimulatedJudge(std::vector<double> latent, uint64_t seed)
    : latent_(std::move(latent)), seed_(seed) {}

JudgeVerdict SimulatedJudge::Evaluate(const JudgeRequest& request) {
  CXRBENCH_REQUIRE(request.m1 >= 0 && request.m2 >= 0 &&
                       request.m1 < static_cast<int>(latent_.size()) &&
                       request.m2 < static_cast<int>(latent_.size()),
                   "no latent score for requested model");
  std::mt19937_64 gen(DeriveSeed(seed_, request.stream));
  const double gap = latent_[request.m1] - latent_[request.m2];
  const double p = std::isinf(gap) ? (gap > 0 ? 1.0 : 0.0) : Sigmoid(gap);
  const bool first = UniformDouble(gen) < p;
  JudgeVerdict verdict;
  verdict.parse_ok = true;
  verdict.winner = first ? JudgeVerdict::Winner::kFirst : JudgeVerdict::Winner::kSecond;
  verdict.raw = first ? "A" : "B";
  return verdict;
}

void Refit(ArenaState& state, const BtOptions& options, std::string* warning) {
  if (state.battles.empty()) return;
  state.scores = Fit(state.battles, state.num_models, options);
  state.covariance =
      EstimateCovariance(state.battles, state.scores, options.ridge, warning);
  state.normalized = NormalizeScores(state.scores);
  state.max_pair_variance.push_back(MaxPairVariance(state.covariance));
}

ArenaState RunArena(int num_models, const ResponseSource& source, Judge& judge,
                    int num_battles, const ArenaOptions& options,
                    const BattleSink& sink) {
  CXRBENCH_REQUIRE(num_models >= 2, "an arena needs at least two models");
  CXRBENCH_REQUIRE(num_battles >= 1, "battle budget must be at least 1");
  CXRBENCH_REQUIRE(source.num_samples() >= 1, "no evaluation samples");
  CXRBENCH_REQUIRE(options.refit_every >= 1 && options.max_in_flight >= 1 &&
                       options.max_attempts_per_battle >= 1,
                   "invalid arena options");
  ArenaState state(num_models);

  struct Pending {
    int m1 = 0, m2 = 0;
    double propensity = 1.0;
    std::optional<Battle> battle;
    int failures = 0;
  };

  auto judge_one = [&](Pending& pending, uint64_t draw) {
    for (int attempt = 0; attempt < options.max_attempts_per_battle; ++attempt) {
      std::mt19937_64 gen(DeriveSeed(options.seed, kSampleStream ^ draw, attempt));
      const int sample = static_cast<int>(gen() % source.num_samples());
      JudgeRequest request;
      request.m1 = pending.m1;
      request.m2 = pending.m2;
      request.sample_id = sample;
      request.query = source.Query(sample);
      request.reference = source.Reference(sample);
      request.first_report = source.Response(pending.m1, sample);
      request.second_report = source.Response(pending.m2, sample);
      request.stream = DeriveSeed(options.seed, kJudgeStream ^ draw, attempt);
      const JudgeVerdict verdict = judge.Evaluate(request);
      if (!verdict.parse_ok || !verdict.winner) {
        ++pending.failures;
        continue;
      }
      Battle b;
      b.m1 = pending.m1;
      b.m2 = pending.m2;
      b.outcome = *verdict.winner == JudgeVerdict::Winner::kFirst ? 1 : 0;
      b.propensity = pending.propensity;
      b.sample_id = sample;
      b.judge_raw_digest = Digest(verdict.raw);
      pending.battle = b;
      return;
    }
  };

  uint64_t draw = 0;
  int since_refit = 0;
  bool fitted_after_cold_start = false;
  while (static_cast<int>(state.battles.size()) < num_battles) {
    const int remaining = num_battles - static_cast<int>(state.battles.size());
    const int batch_size = std::min(options.max_in_flight, remaining);
    std::vector<int> counts = state.pair_counts;
    std::vector<Pending> batch(batch_size);
    for (auto& pending : batch) {
      const auto p = Distribution(num_models, counts, state.covariance, options.sampling);
      std::mt19937_64 gen(DeriveSeed(options.seed, kPairStream, draw + (&pending - batch.data())));
      const int a = DrawPair(p, UniformDouble(gen));
      std::tie(pending.m1, pending.m2) = PairModels(a, num_models);
      pending.propensity = p[a];
      ++counts[a];
    }
    if (batch_size == 1) {
      judge_one(batch[0], draw);
    } else {
      std::vector<std::future<void>> futures;
      for (int k = 0; k < batch_size; ++k) {
        futures.push_back(std::async(std::launch::async, judge_one,
                                     std::ref(batch[k]), draw + k));
      }
      for (auto& f : futures) f.get();
    }
    draw += batch_size;

    for (auto& pending : batch) {
      state.judge_failures += pending.failures;
      if (!pending.battle) {
        ++state.dropped_battles;
        continue;
      }
      pending.battle->t = static_cast<int>(state.battles.size());
      state.Append(*pending.battle);
      if (sink) sink(state.battles.back());
      ++since_refit;
      const bool cold_start_done =
          std::find(state.pair_counts.begin(), state.pair_counts.end(), 0) ==
          state.pair_counts.end();
      if (since_refit >= options.refit_every ||
          (cold_start_done && !fitted_after_cold_start)) {
        Refit(state, options.bt);
        since_refit = 0;
        fitted_after_cold_start = cold_start_done;
      }
    }
    // Every attempt failing for a whole budget's worth of draws means the
    // judge is broken; stop rather than spin.
    if (state.dropped_battles >= num_battles) break;
  }
  Refit(state, options.bt);
  return state;
}

std::string Digest(const std::string& raw) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(raw.data(), raw.size(), md, &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

void WriteBattle(std::ostream& out, const Battle& battle) {
  nlohmann::ordered_json j;
  j["t"] = battle.t;
  j["m1"] = battle.m1;
  j["m2"] = battle.m2;
  j["sample_id"] = battle.sample_id;
  j["H"] = battle.outcome;
  j["P_At"] = battle.propensity;
  j["judge_raw_digest"] = battle.judge_raw_digest;
  out << j.dump() << '\n';
}

std::vector<Battle> ReadBattleLog(std::istream& in) {
  std::vector<Battle> battles;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line);
    Battle b;
    b.t = j.at("t").get<int>();
    b.m1 = j.at("m1").get<int>();
    b.m2 = j.at("m2").get<int>();
    b.sample_id = j.at("sample_id").get<int>();
    b.outcome = j.at("H").get<int>();
    b.propensity = j.at("P_At").get<double>();
    b.judge_raw_digest = j.value("judge_raw_digest", "");
    battles.push_back(std::move(b));
  }
  return battles;
}

void WriteArenaReport(std::ostream& out, const ArenaState& state,
                      const std::vector<std::string>& model_names) {
  const int m = state.num_models;
  auto name = [&](int i) {
    return i < static_cast<int>(model_names.size()) ? model_names[i]
                                                    : "model" + std::to_string(i);
  };
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return state.scores[a] > state.scores[b]; });
  char buf[256];
  out << "# ranking (" << state.battles.size() << " battles, "
      << state.judge_failures << " judge failures)\n";
  std::snprintf(buf, sizeof(buf), "%-4s %-24s %12s %10s\n", "rank", "model", "xi", "score");
  out << buf;
  for (int r = 0; r < m; ++r) {
    const int i = order[r];
    std::snprintf(buf, sizeof(buf), "%-4d %-24s %12.6f %10.4f\n", r + 1,
                  name(i).c_str(), state.scores[i], state.normalized[i]);
    out << buf;
  }
  const Eigen::MatrixXi counts = CountMatrix(state);
  const Eigen::MatrixXd rates = WinRateMatrix(state);
  out << "\n# pair counts (row = first model)\n";
  for (int i = 0; i < m; ++i) {
    std::snprintf(buf, sizeof(buf), "%-24s", name(i).c_str());
    out << buf;
    for (int j = 0; j < m; ++j) {
      std::snprintf(buf, sizeof(buf), " %6d", counts(i, j));
      out << buf;
    }
    out << '\n';
  }
  out << "\n# win rate of row model over column model\n";
  for (int i = 0; i < m; ++i) {
    std::snprintf(buf, sizeof(buf), "%-24s", name(i).c_str());
    out << buf;
    for (int j = 0; j < m; ++j) {
      if (std::isnan(rates(i, j))) {
        std::snprintf(buf, sizeof(buf), " %6s", "-");
      } else {
        std::snprintf(buf, sizeof(buf), " %6.3f", rates(i, j));
      }
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace cxrbench::arena
