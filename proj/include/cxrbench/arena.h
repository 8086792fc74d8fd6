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

// Pairwise model ranking: adaptive battle sampling driven by the estimated
// score covariance, inverse-propensity-weighted Bradley-Terry fitting and
// score normalization.

#ifndef CXRBENCH_ARENA_H_
#define CXRBENCH_ARENA_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "Eigen/Core"

namespace cxrbench::arena {

// One judged comparison. `outcome` is 1 when the first model won.
struct Battle {
  int t = 0;
  int m1 = 0;
  int m2 = 0;
  int outcome = 0;
  double propensity = 1.0;  // probability the ordered pair was drawn
  int sample_id = 0;
  std::string judge_raw_digest;
};

// Ordered pairs (i, j), i != j, are distinct arms: M * (M - 1) of them.
// Pair ids run row-major over (m1, m2) with the diagonal skipped.
int NumPairs(int num_models);
int PairId(int m1, int m2, int num_models);
std::pair<int, int> PairModels(int pair_id, int num_models);

struct ArenaState {
  explicit ArenaState(int num_models);

  int num_models;
  std::vector<Battle> battles;
  std::vector<int> pair_counts;  // indexed by PairId
  Eigen::VectorXd scores;        // mean-zero Bradley-Terry scores
  Eigen::MatrixXd covariance;    // empty until the first fit
  std::vector<double> normalized;
  std::vector<double> max_pair_variance;  // max_a v_a after each refit
  int judge_failures = 0;
  int dropped_battles = 0;

  // Appends and updates pair counts. Throws ContractViolation on m1 == m2 or
  // a non-positive propensity.
  void Append(const Battle& battle);
};

enum class SamplingPolicy { kAdaptive, kUniform };

// Var(xi_m1 - xi_m2) = C11 + C22 - 2 C12.
double PairVariance(const Eigen::MatrixXd& covariance, int m1, int m2);
double MaxPairVariance(const Eigen::MatrixXd& covariance);

// Sampling distribution over ordered pairs. While any pair is unvisited the
// draw is uniform over unvisited pairs; afterwards each pair gets weight
// sqrt(v/n) - sqrt(v/(n+1)). Throws ContractViolation when M < 2.
std::vector<double> PairSamplingDistribution(
    const ArenaState& state, SamplingPolicy policy = SamplingPolicy::kAdaptive);

// Inverse-CDF draw of a pair id for u in [0, 1).
int DrawPair(const std::vector<double>& distribution, double u);

struct BtOptions {
  double ridge = 1e-4;
  double tolerance = 1e-8;  // on the gradient norm, relative to total weight
  int max_iterations = 200;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last)
      : std::runtime_error(what), last_(std::move(last)) {}
  const Eigen::VectorXd& last_iterate() const { return last_; }

 private:
  Eigen::VectorXd last_;
};

// Minimizes sum_t (1/P_t) CE(H_t, sigmoid(xi_m1 - xi_m2)) + ridge * |xi|^2 by
// damped Newton iteration, then recenters to mean zero. Throws
// ContractViolation if some model never appears, ConvergenceError if the
// gradient norm stays above tolerance.
Eigen::VectorXd FitBradleyTerry(const std::vector<Battle>& battles,
                                int num_models, const BtOptions& options = {});

// Weighted objective value at xi (for tests and diagnostics).
double BradleyTerryObjective(const std::vector<Battle>& battles,
                             const Eigen::VectorXd& xi, double ridge);

// Inverse of the objective Hessian restricted to the mean-zero subspace,
// plus `ridge` along the all-ones direction so the result is positive
// definite. If the restricted Hessian is singular the ridge is escalated and
// a message is written to `warning`.
Eigen::MatrixXd EstimateCovariance(const std::vector<Battle>& battles,
                                   const Eigen::VectorXd& xi, double ridge,
                                   std::string* warning = nullptr);

// Shift so the minimum is 0, then divide by the largest absolute value.
// Constant input maps to all 0.5.
std::vector<double> NormalizeScores(const Eigen::VectorXd& xi);

double SpearmanCorrelation(const std::vector<double>& a,
                           const std::vector<double>& b);

// Ordered-pair win rates; NaN where a pair was never judged.
Eigen::MatrixXd WinRateMatrix(const ArenaState& state);
Eigen::MatrixXi CountMatrix(const ArenaState& state);

struct JudgeRequest {
  int m1 = 0;
  int m2 = 0;
  int sample_id = 0;
  std::string query;
  std::string reference;
  std::string first_report;
  std::string second_report;
  uint64_t stream = 0;  // per-battle random stream
};

struct JudgeVerdict {
  enum class Winner { kFirst, kSecond };
  std::optional<Winner> winner;  // set only when parse_ok
  std::string raw;
  bool parse_ok = false;
};

class Judge {
 public:
  virtual ~Judge() = default;
  virtual JudgeVerdict Evaluate(const JudgeRequest& request) = 0;
};

// Draws H ~ Bernoulli(sigmoid(q_m1 - q_m2)) from the request's stream, so a
// verdict depends only on (seed, stream).
class SimulatedJudge : public Judge {
 public:
  SimulatedJudge(std::vector<double> latent, uint64_t seed);
  JudgeVerdict Evaluate(const JudgeRequest& request) override;

 private:
  std::vector<double> latent_;
  uint64_t seed_;
};

// Where battle material comes from. The simulated arena needs only the
// sample count.
class ResponseSource {
 public:
  virtual ~ResponseSource() = default;
  virtual int num_samples() const = 0;
  virtual std::string Query(int /*sample*/) const { return {}; }
  virtual std::string Reference(int /*sample*/) const { return {}; }
  virtual std::string Response(int /*model*/, int /*sample*/) const { return {}; }
};

class BlankResponseSource : public ResponseSource {
 public:
  explicit BlankResponseSource(int num_samples) : num_samples_(num_samples) {}
  int num_samples() const override { return num_samples_; }

 private:
  int num_samples_;
};

struct ArenaOptions {
  int refit_every = 50;
  BtOptions bt;
  SamplingPolicy sampling = SamplingPolicy::kAdaptive;
  int max_attempts_per_battle = 5;
  int max_in_flight = 1;
  uint64_t seed = 0;
};

// Called for every accepted battle, in log order.
using BattleSink = std::function<void(const Battle&)>;

// Runs T accepted battles (fewer only if battles are dropped after
// exhausting their attempts), refitting every `refit_every` battles and once
// more at the end. Throws ContractViolation when M < 2 or T < 1.
ArenaState RunArena(int num_models, const ResponseSource& source, Judge& judge,
                    int num_battles, const ArenaOptions& options,
                    const BattleSink& sink = {});

// Refit scores, covariance and normalized scores from the current log and
// append max_a v_a to the variance trace.
void Refit(ArenaState& state, const BtOptions& options,
           std::string* warning = nullptr);

// Hex SHA-256 of a judge's raw output.
std::string Digest(const std::string& raw);

// One JSON object per line:
//   {"t", "m1", "m2", "sample_id", "H", "P_At", "judge_raw_digest"}
void WriteBattle(std::ostream& out, const Battle& battle);
std::vector<Battle> ReadBattleLog(std::istream& in);

// Ranking table (xi, normalized score), then the pair-count and win-rate
// matrices.
void WriteArenaReport(std::ostream& out, const ArenaState& state,
                      const std::vector<std::string>& model_names);

}  // namespace cxrbench::arena

#endif  // CXRBENCH_ARENA_H_
