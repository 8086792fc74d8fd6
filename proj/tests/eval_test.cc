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


#include "cxrbench/eval.h"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cxrbench/contract.h"

namespace cxrbench::eval {
namespace {

using reward::TaskType;

ObservationLabels Labels(std::initializer_list<int> on) {
  ObservationLabels l{};
  for (int c : on) l[c] = true;
  return l;
}

struct OracleCounts {
  long tp = 0, fp = 0, fn = 0;
};

// Plain confusion counting, class by class.
OracleCounts Count(const std::vector<ObservationLabels>& p,
                   const std::vector<ObservationLabels>& g, int c) {
  OracleCounts o;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i][c] && g[i][c]) ++o.tp;
    if (p[i][c] && !g[i][c]) ++o.fp;
    if (!p[i][c] && g[i][c]) ++o.fn;
  }
  return o;
}

double OracleF1(const OracleCounts& o) {
  const long den = 2 * o.tp + o.fp + o.fn;
  return den == 0 ? 0.0 : 2.0 * o.tp / den;
}

std::vector<int> SubsetOf(LabelSubset s) {
  if (s == LabelSubset::kTop5) {
    return {kTop5Observations.begin(), kTop5Observations.end()};
  }
  std::vector<int> all(kNumObservations);
  for (int c = 0; c < kNumObservations; ++c) all[c] = c;
  return all;
}

F1Aggregate OracleAggregate(const std::vector<ObservationLabels>& p,
                            const std::vector<ObservationLabels>& g,
                            LabelSubset s) {
  OracleCounts pooled;
  double sum = 0;
  int classes = 0;
  for (int c : SubsetOf(s)) {
    const auto o = Count(p, g, c);
    pooled.tp += o.tp;
    pooled.fp += o.fp;
    pooled.fn += o.fn;
    if (o.tp + o.fp + o.fn == 0) continue;
    sum += OracleF1(o);
    ++classes;
  }
  if (classes == 0) return {std::nan(""), std::nan("")};
  return {OracleF1(pooled), sum / classes};
}

std::vector<ObservationLabels> RandomLabels(std::mt19937_64& gen, int n,
                                            const std::vector<double>& rate) {
  std::vector<ObservationLabels> out(n);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& l : out) {
    for (int c = 0; c < kNumObservations; ++c) l[c] = u(gen) < rate[c];
  }
  return out;
}

TEST(F1AggregateTest, Examples) {
  // Single class: TP = 1, FP = 1, FN = 1.
  std::vector<ObservationLabels> p = {Labels({10}), Labels({10}), Labels({})};
  std::vector<ObservationLabels> g = {Labels({10}), Labels({}), Labels({10})};
  auto f = ComputeF1(p, g, LabelSubset::kTop5);
  EXPECT_DOUBLE_EQ(f.micro, 0.5);
  EXPECT_DOUBLE_EQ(f.macro, 0.5);
  // Class 8 perfect with TP = 2, class 2 missed with FN = 2.
  p = {Labels({8}), Labels({8})};
  g = {Labels({8, 2}), Labels({8, 2})};
  f = ComputeF1(p, g, LabelSubset::kTop5);
  EXPECT_DOUBLE_EQ(f.macro, 0.5);
  EXPECT_DOUBLE_EQ(f.micro, 4.0 / 6.0);
  f = ComputeF1(g, g, LabelSubset::kAll14);
  EXPECT_EQ(f.micro, 1.0);
  EXPECT_EQ(f.macro, 1.0);
}

TEST(F1AggregateTest, UndefinedWithoutSupportOrPredictions) {
  const std::vector<ObservationLabels> p = {Labels({0})};
  const std::vector<ObservationLabels> g = {Labels({0})};
  const auto f = ComputeF1(p, g, LabelSubset::kTop5);
  EXPECT_TRUE(std::isnan(f.micro));
  EXPECT_TRUE(std::isnan(f.macro));
  EXPECT_THROW(ComputeF1({}, {}, LabelSubset::kAll14), ContractViolation);
  EXPECT_THROW(ComputeF1(p, {}, LabelSubset::kAll14), ContractViolation);
}

TEST(F1AggregateTest, MatchesConfusionOracleOn500Fixtures) {
  std::mt19937_64 gen(51);
  std::uniform_int_distribution<int> size(1, 40);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> pr(kNumObservations), gr(kNumObservations);
    for (int c = 0; c < kNumObservations; ++c) {
      // Some classes never occur, which exercises the macro exclusion rule.
      pr[c] = u(gen) < 0.2 ? 0.0 : u(gen) * 0.5;
      gr[c] = u(gen) < 0.2 ? 0.0 : u(gen) * 0.5;
    }
    const int n = size(gen);
    const auto p = RandomLabels(gen, n, pr);
    const auto g = RandomLabels(gen, n, gr);
    for (auto s : {LabelSubset::kAll14, LabelSubset::kTop5}) {
      const auto got = ComputeF1(p, g, s);
      const auto want = OracleAggregate(p, g, s);
      if (std::isnan(want.micro)) {
        ASSERT_TRUE(std::isnan(got.micro) && std::isnan(got.macro));
        continue;
      }
      ASSERT_EQ(got.micro, want.micro) << t;
      ASSERT_EQ(got.macro, want.macro) << t;
    }
    for (int c = 0; c < kNumObservations; ++c) {
      const auto o = Count(p, g, c);
      const auto cc = CountClass(p, g, c);
      ASSERT_EQ(cc.tp, o.tp);
      ASSERT_EQ(cc.fp, o.fp);
      ASSERT_EQ(cc.fn, o.fn);
      ASSERT_EQ(cc.f1(), OracleF1(o));
    }
    const auto rows = PerObservationF1(p, g, 10);
    std::vector<std::pair<long, std::string>> want_order;
    for (int c = 0; c < kNumObservations; ++c) {
      const auto o = Count(p, g, c);
      if (o.tp + o.fn > 0) {
        want_order.emplace_back(-(o.tp + o.fn), std::string(kObservationNames[c]));
      }
    }
    std::sort(want_order.begin(), want_order.end());
    ASSERT_EQ(rows.size(), std::min<size_t>(10, want_order.size()));
    for (size_t k = 0; k < rows.size(); ++k) {
      ASSERT_EQ(rows[k].name, want_order[k].second);
      ASSERT_EQ(rows[k].support, -want_order[k].first);
      const int c = std::find(kObservationNames.begin(), kObservationNames.end(),
                              rows[k].name) - kObservationNames.begin();
      ASSERT_EQ(rows[k].f1, OracleF1(Count(p, g, c)));
    }
  }
}

TEST(F1AggregateTest, SingleClassMicroEqualsClassF1) {
  std::mt19937_64 gen(52);
  std::vector<double> rate(kNumObservations, 0.0);
  rate[5] = 0.4;
  for (int t = 0; t < 100; ++t) {
    const auto p = RandomLabels(gen, 20, rate);
    const auto g = RandomLabels(gen, 20, rate);
    const auto f = ComputeF1(p, g, LabelSubset::kAll14);
    if (std::isnan(f.micro)) continue;
    ASSERT_EQ(f.micro, CountClass(p, g, 5).f1());
    ASSERT_EQ(f.macro, CountClass(p, g, 5).f1());
  }
}

TEST(F1AggregateTest, MacroFiveEqualsMacroFourteenWhenOthersAreEmpty) {
  std::mt19937_64 gen(53);
  std::vector<double> rate(kNumObservations, 0.0);
  for (int c : kTop5Observations) rate[c] = 0.5;
  for (int t = 0; t < 200; ++t) {
    const auto p = RandomLabels(gen, 15, rate);
    const auto g = RandomLabels(gen, 15, rate);
    const auto a = ComputeF1(p, g, LabelSubset::kAll14);
    const auto b = ComputeF1(p, g, LabelSubset::kTop5);
    ASSERT_DOUBLE_EQ(a.macro, b.macro);
    ASSERT_EQ(a.micro, b.micro);
  }
}

TEST(PerObservationF1Test, ExamplesAndTies) {
  const std::vector<ObservationLabels> g = {Labels({10, 2}), Labels({10, 8}),
                                            Labels({2})};
  const std::vector<ObservationLabels> p = {Labels({10}), Labels({10, 8}),
                                            Labels({5})};
  const auto rows = PerObservationF1(p, g);
  ASSERT_EQ(rows.size(), 3u);  // Edema has predictions but no support
  EXPECT_EQ(rows[0].name, "Cardiomegaly");  // support 2, tie broken by name
  EXPECT_EQ(rows[0].f1, 0.0);
  EXPECT_EQ(rows[1].name, "Pleural Effusion");
  EXPECT_EQ(rows[1].f1, 1.0);
  EXPECT_EQ(rows[2].name, "Atelectasis");
  EXPECT_EQ(PerObservationF1(p, g, 1).size(), 1u);
  for (const auto& r : PerObservationF1(g, g)) EXPECT_EQ(r.f1, 1.0);
}

EvalSample Vqa(const std::string& id, TaskType task, reward::Gold gold,
               std::optional<std::string> type = {}) {
  EvalSample s;
  s.id = id;
  s.split = Split::kCxrVqa;
  s.task = task;
  s.gold = std::move(gold);
  s.dims = parse::ImageDims(512, 512);
  s.question_type = std::move(type);
  return s;
}

TEST(VqaAccuracyTest, HandFixtures) {
  const std::vector<EvalSample> samples = {
      Vqa("q1", TaskType::kClosedEnded, std::string("yes"), "presence"),
      Vqa("q2", TaskType::kClosedEnded, std::string("no"), "presence"),
      Vqa("q3", TaskType::kMultiObject, std::set<std::string>{"a", "b"},
          "abnormality"),
  };
  auto r = VqaAccuracy({{"q1", "Yes."}, {"q2", "no"}, {"q3", "a, b"}}, samples);
  EXPECT_EQ(r.overall, 1.0);
  r = VqaAccuracy({{"q1", "yes"}, {"q2", "yes"}}, {samples[0], samples[1]});
  EXPECT_EQ(r.overall, 0.5);
  r = VqaAccuracy({{"q1", "yes"}, {"q3", "b, c"}}, {samples[0], samples[2]});
  EXPECT_NEAR(r.overall, 0.75, 1e-12);
  r = VqaAccuracy({{"q3", "b"}}, samples);
  EXPECT_NEAR(r.overall, (0 + 0 + 2.0 / 3.0) / 3, 1e-12);
  EXPECT_EQ(r.missing, (std::vector<std::string>{"q1", "q2"}));
  EXPECT_EQ(r.per_type.at("presence").accuracy, 0.0);
  EXPECT_EQ(r.per_type.at("presence").count, 2);
  EXPECT_NEAR(r.per_type.at("abnormality").accuracy, 2.0 / 3.0, 1e-12);
  EXPECT_THROW(VqaAccuracy({{"zzz", "yes"}}, samples), ContractViolation);
}

TEST(VqaAccuracyTest, OrderInvariant) {
  std::vector<EvalSample> samples;
  std::map<std::string, std::string> preds;
  for (int k = 0; k < 30; ++k) {
    const std::string id = "s" + std::to_string(k);
    samples.push_back(Vqa(id, TaskType::kClosedEnded, std::string(k % 3 ? "yes" : "no")));
    preds[id] = k % 2 ? "yes" : "no";
  }
  const double a = VqaAccuracy(preds, samples).overall;
  std::reverse(samples.begin(), samples.end());
  EXPECT_NEAR(VqaAccuracy(preds, samples).overall, a, 1e-12);
}

TEST(LengthDistributionTest, Examples) {
  EXPECT_TRUE(LengthDistribution({}, 5).empty());
  EXPECT_EQ(LengthDistribution({"one two three four five six seven"}, 5),
            (std::map<int, int>{{5, 1}}));
  EXPECT_EQ(LengthDistribution({"a b.", ""}, 2),
            (std::map<int, int>{{0, 1}, {2, 1}}));
  EXPECT_THROW(LengthDistribution({"a"}, 0), ContractViolation);
  std::mt19937_64 gen(54);
  std::uniform_int_distribution<int> len(0, 120);
  std::vector<std::string> texts(1000);
  for (auto& t : texts) {
    for (int k = len(gen); k > 0; --k) t += "w ";
  }
  int total = 0;
  for (const auto& [bin, c] : LengthDistribution(texts, 10)) total += c;
  EXPECT_EQ(total, 1000);
}

TEST(WeightedAverageTest, Examples) {
  auto r = WeightedAverage({{"a", {{"BLEU-1", 0.0}}}, {"b", {{"BLEU-1", 1.0}}}},
                           {{"a", 3}, {"b", 1}});
  EXPECT_NEAR(r.at("BLEU-1"), 0.25, 1e-12);
  r = WeightedAverage({{"a", {{"m", 0.3}}}, {"b", {{"m", 0.7}}}, {"c", {{"m", 0.2}}}},
                      {{"a", 5}, {"b", 5}, {"c", 5}});
  EXPECT_NEAR(r.at("m"), (0.3 + 0.7 + 0.2) / 3, 1e-12);
  r = WeightedAverage({{"a", {{"m", 0.42}}}}, {{"a", 9}});
  EXPECT_NEAR(r.at("m"), 0.42, 1e-12);
  EXPECT_THROW(WeightedAverage({{"a", {{"m", 1}}}}, {{"b", 1}}), ContractViolation);
  EXPECT_THROW(WeightedAverage({{"a", {{"m", 1}}}}, {{"a", 0}}), ContractViolation);
  EXPECT_THROW(WeightedAverage({{"a", {{"m", 1}}}, {"b", {{"n", 1}}}},
                               {{"a", 1}, {"b", 1}}),
               ContractViolation);
}

TEST(DatasetTest, EmptyAndErrorsAndSchema) {
  std::istringstream empty("");
  const auto d = ReadDataset(empty);
  EXPECT_TRUE(d.samples.empty());
  EXPECT_TRUE(d.errors.empty());

  std::istringstream mixed(
      "{\"schema_version\": 1}\n"
      "{\"id\": \"a\", \"split\": \"cxr_vqa\", \"task\": \"closed_ended\", "
      "\"instruction\": \"Effusion?\", \"image_ref\": \"a.png\", "
      "\"image_width\": 512, \"image_height\": 512, \"gold\": \"yes\"}\n"
      "{\"id\": \"b\", \"split\": \"cxr_vqa\", \"task\": \"closed_ended\"}\n");
  const auto m = ReadDataset(mixed);
  EXPECT_EQ(m.samples.size(), 1u);
  ASSERT_EQ(m.errors.size(), 1u);
  EXPECT_EQ(m.errors[0].line, 3);

  std::istringstream v2("{\"schema_version\": 2}\n");
  try {
    ReadDataset(v2);
    FAIL();
  } catch (const SchemaMismatch& e) {
    EXPECT_EQ(e.expected(), "1");
    EXPECT_EQ(e.found(), "2");
  }
  std::istringstream headless("{\"id\": \"a\"}\n");
  EXPECT_THROW(ReadDataset(headless), SchemaMismatch);
}

TEST(DatasetTest, SplitMustMatchTask) {
  EvalSample s = Vqa("x", TaskType::kOpenText, std::string("report"));
  EXPECT_THROW(ValidateSample(s), ContractViolation);
  s.split = Split::kMimicFindings;
  EXPECT_NO_THROW(ValidateSample(s));
  s.question_type = "color";
  EXPECT_THROW(ValidateSample(s), ContractViolation);
}

TEST(DatasetTest, RoundTrip) {
  std::vector<EvalSample> samples = {
      Vqa("q1", TaskType::kClosedEnded, std::string("yes"), "plane"),
      Vqa("q2", TaskType::kMultiObject, std::set<std::string>{"edema", "mass"}),
  };
  EvalSample r;
  r.id = "r1";
  r.split = Split::kOpeniImpression;
  r.task = TaskType::kOpenText;
  r.instruction = "Write the impression.";
  r.image_ref = "img/r1.png";
  r.dims = parse::ImageDims(1024, 768);
  r.gold = std::string("No acute disease.");
  samples.push_back(r);
  std::stringstream io;
  WriteDataset(io, samples);
  const auto d = ReadDataset(io);
  ASSERT_TRUE(d.errors.empty());
  ASSERT_EQ(d.samples.size(), samples.size());
  for (size_t k = 0; k < samples.size(); ++k) {
    const auto& a = samples[k];
    const auto& b = d.samples[k];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.split, b.split);
    EXPECT_EQ(a.task, b.task);
    EXPECT_EQ(a.instruction, b.instruction);
    EXPECT_EQ(a.image_ref, b.image_ref);
    EXPECT_EQ(a.dims.width(), b.dims.width());
    EXPECT_EQ(a.dims.height(), b.dims.height());
    EXPECT_EQ(a.gold, b.gold);
    EXPECT_EQ(a.question_type, b.question_type);
  }
}

TEST(ScoreReportsTest, SentenceAveragedTableAndWeightedRow) {
  std::vector<EvalSample> samples;
  auto report = [&](const std::string& id, Split split, const std::string& gold) {
    EvalSample s;
    s.id = id;
    s.split = split;
    s.task = TaskType::kOpenText;
    s.gold = gold;
    samples.push_back(s);
  };
  report("f1", Split::kMimicFindings, "the cat sat down");
  report("f2", Split::kMimicFindings, "a b c");
  report("i1", Split::kMimicImpression, "no acute disease");
  ModelPredictions preds;
  preds.text["m"] = {{"f1", "the cat sat"}, {"f2", "a b c"}, {"i1", "no acute disease"}};
  const auto table = ScoreReports(samples, preds, {}, {});
  ASSERT_EQ(table.rows.size(), 3u);
  const auto& f = table.rows[0];
  EXPECT_EQ(f.split, "mimic_findings");
  EXPECT_EQ(f.count, 2);
  EXPECT_NEAR(f.values.at("BLEU-1"), (std::exp(1 - 4.0 / 3) + 1.0) / 2, 1e-12);
  EXPECT_FALSE(f.values.count("Macro-14"));
  const auto& w = table.rows[2];
  EXPECT_EQ(w.split, "weighted_average");
  EXPECT_EQ(w.count, 3);
  EXPECT_NEAR(w.values.at("BLEU-1"),
              (2 * f.values.at("BLEU-1") + 1 * table.rows[1].values.at("BLEU-1")) / 3,
              1e-12);
  ASSERT_FALSE(table.notes.empty());
  EXPECT_NE(table.notes[0].find("sentence-averaged"), std::string::npos);
}

}  // namespace
}  // namespace cxrbench::eval
