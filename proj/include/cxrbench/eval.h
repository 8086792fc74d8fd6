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

// Dataset ingestion and the aggregate scores of the evaluation tables: VQA
// accuracy, observation-label F1, length histograms, split-weighted averages
// and the per-model report-generation table.

#ifndef CXRBENCH_EVAL_H_
#define CXRBENCH_EVAL_H_

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cxrbench/response_parser.h"
#include "cxrbench/reward.h"

namespace cxrbench::eval {

inline constexpr int kSchemaVersion = 1;

enum class Split {
  kMimicFindings,
  kMimicImpression,
  kOpeniFindings,
  kOpeniImpression,
  kExtVqa,
  kCxrVqa,
};

// "mimic_findings", ..., "cxr_vqa". Throws ContractViolation otherwise.
Split ParseSplit(std::string_view name);
std::string_view SplitName(Split split);
bool IsReportSplit(Split split);

// Allowed question-type tags for VQA samples.
bool IsKnownQuestionType(std::string_view tag);

struct EvalSample {
  std::string id;
  Split split = Split::kMimicFindings;
  reward::TaskType task = reward::TaskType::kOpenText;
  std::string instruction;
  std::string image_ref;
  parse::ImageDims dims{1, 1};
  reward::Gold gold;
  std::optional<std::string> question_type;
};

// Throws ContractViolation when the split and task family disagree, the gold
// alternative does not match the task, or the question type is unknown.
void ValidateSample(const EvalSample& sample);

struct LoadError {
  int line = 0;
  std::string message;
};

struct Dataset {
  std::vector<EvalSample> samples;
  std::vector<LoadError> errors;
};

class SchemaMismatch : public std::runtime_error {
 public:
  SchemaMismatch(std::string expected, std::string found)
      : std::runtime_error("dataset schema version mismatch: expected " +
                           expected + ", found " + found),
        expected_(std::move(expected)),
        found_(std::move(found)) {}
  const std::string& expected() const { return expected_; }
  const std::string& found() const { return found_; }

 private:
  std::string expected_;
  std::string found_;
};

// Line-delimited JSON. The first non-blank line is a header
// {"schema_version": 1}; each further line is one sample:
//   {"id", "split", "task", "instruction", "image_ref", "image_width",
//    "image_height", "gold", "question_type"?}
// Malformed sample lines are recorded in `errors` and skipped. A missing or
// different header throws SchemaMismatch. An empty input is an empty dataset.
Dataset ReadDataset(std::istream& in);
// Throws std::runtime_error if the file cannot be opened.
Dataset LoadDataset(const std::string& path);
void WriteDataset(std::ostream& out, const std::vector<EvalSample>& samples);

struct TypeAccuracy {
  double accuracy = 0.0;
  int count = 0;
};

struct VqaResult {
  double overall = 0.0;
  int count = 0;
  std::map<std::string, TypeAccuracy> per_type;  // untagged samples under ""
  std::vector<std::string> missing;              // ids without a prediction
};

// Closed-ended samples score normalized exact match, multi-object samples
// set F1. Missing predictions score 0 and are listed. Throws
// ContractViolation if a prediction id is not a sample id or a sample is an
// open-text task.
VqaResult VqaAccuracy(const std::map<std::string, std::string>& predictions,
                      const std::vector<EvalSample>& samples);

inline constexpr int kNumObservations = 14;
inline constexpr std::array<std::string_view, kNumObservations>
    kObservationNames = {
        "No Finding",      "Enlarged Cardiomediastinum",
        "Cardiomegaly",    "Lung Opacity",
        "Lung Lesion",     "Edema",
        "Consolidation",   "Pneumonia",
        "Atelectasis",     "Pneumothorax",
        "Pleural Effusion", "Pleural Other",
        "Fracture",        "Support Devices",
};
// Atelectasis, Cardiomegaly, Consolidation, Edema, Pleural Effusion.
inline constexpr std::array<int, 5> kTop5Observations = {8, 2, 6, 5, 10};

using ObservationLabels = std::array<bool, kNumObservations>;

enum class LabelSubset { kAll14, kTop5 };

struct ClassCounts {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int support() const { return tp + fn; }
  int predicted() const { return tp + fp; }
  // 2TP / (2TP + FP + FN); 0 when the denominator is 0.
  double f1() const;
};

ClassCounts CountClass(const std::vector<ObservationLabels>& pred,
                       const std::vector<ObservationLabels>& gold, int cls);

struct F1Aggregate {
  double micro = 0.0;
  double macro = 0.0;
};

// Micro pools TP/FP/FN over the subset's classes; macro averages per-class
// F1 over classes with gold support or predictions. Either value is NaN when
// no class in the subset has support or predictions. Throws
// ContractViolation on length mismatch or empty input.
F1Aggregate ComputeF1(const std::vector<ObservationLabels>& pred,
                      const std::vector<ObservationLabels>& gold,
                      LabelSubset subset);

struct ObservationF1 {
  std::string name;
  int support = 0;
  ClassCounts counts;
  double f1 = 0.0;
};

// Per-class F1 for classes with gold support, sorted by support descending
// then name, truncated to `top_k`.
std::vector<ObservationF1> PerObservationF1(
    const std::vector<ObservationLabels>& pred,
    const std::vector<ObservationLabels>& gold, int top_k = kNumObservations);

// Histogram of token counts; key k * bin_width counts texts with length in
// [k * w, (k + 1) * w). Throws ContractViolation when bin_width < 1.
std::map<int, int> LengthDistribution(const std::vector<std::string>& texts,
                                      int bin_width);

using MetricRow = std::map<std::string, double>;

// Per metric: sum_s count_s * score_s / sum_s count_s. Throws
// ContractViolation when the split sets differ, a count is not positive or a
// metric is missing from some split.
MetricRow WeightedAverage(const std::map<std::string, MetricRow>& per_split,
                          const std::map<std::string, int>& counts);

// Column order of the report-generation table.
inline const std::vector<std::string> kTableColumns = {
    "BLEU-1",  "BLEU-2",   "BLEU-3",   "BLEU-4",  "METEOR", "ROUGE-L",
    "F1-RadGraph", "Macro-14", "Micro-14", "Macro-5", "Micro-5", "Average"};

struct ScoreOptions {
  bool corpus_bleu = false;  // sentence-averaged by default
  text::MeteorConfig meteor;
  text::RougeConfig rouge;
};

// Inputs keyed by (model, sample id).
struct ModelPredictions {
  std::map<std::string, std::map<std::string, std::string>> text;
  std::map<std::string, std::map<std::string, ObservationLabels>> labels;
};

struct ScoreRow {
  std::string model;
  std::string split;  // split name or "weighted_average"
  int count = 0;
  MetricRow values;   // absent columns are unavailable
};

struct ScoreTable {
  std::vector<ScoreRow> rows;
  std::vector<std::string> notes;
};

// One row per (model, report split) plus a weighted-average row per model.
// Label columns need gold labels (`gold_labels`) and model labels for every
// sample of the split; F1-RadGraph comes precomputed keyed by
// (model, split). Missing predictions score as empty reports and are noted.
ScoreTable ScoreReports(
    const std::vector<EvalSample>& samples, const ModelPredictions& predictions,
    const std::map<std::string, ObservationLabels>& gold_labels,
    const std::map<std::string, std::map<std::string, double>>& radgraph,
    const ScoreOptions& options = {});

void WriteTableText(std::ostream& out, const ScoreTable& table);
void WriteTableCsv(std::ostream& out, const ScoreTable& table);

// Predictions file: {"id", "model", "prediction"} per line.
ModelPredictions ReadPredictions(std::istream& in);
// Label file: {"id", "source", "labels": [14 x 0/1]} per line, where source
// is "gold" or a model name. Gold labels go to `gold`.
void ReadLabels(std::istream& in, ModelPredictions& predictions,
                std::map<std::string, ObservationLabels>& gold);
// RadGraph file: {"model", "split", "f1_radgraph"} per line.
std::map<std::string, std::map<std::string, double>> ReadRadGraph(
    std::istream& in);

}  // namespace cxrbench::eval

#endif  // CXRBENCH_EVAL_H_
