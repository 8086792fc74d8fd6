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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "cxrbench/contract.h"
#include "cxrbench/textmetrics.h"
#include "nlohmann/json.hpp"

namespace cxrbench::eval {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 6> kSplitNames = {
    "mimic_findings", "mimic_impression", "openi_findings",
    "openi_impression", "ext_vqa", "cxr_vqa"};

constexpr std::array<std::string_view, 11> kQuestionTypes = {
    "presence", "abnormality", "attribute", "anatomy", "size", "plane",
    "gender", "location", "view", "level", "type"};

bool IsBlank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

EvalSample SampleFromJson(const json& j) {
  EvalSample s;
  s.id = j.at("id").get<std::string>();
  CXRBENCH_REQUIRE(!s.id.empty(), "sample id must be nonempty");
  s.split = ParseSplit(j.at("split").get<std::string>());
  s.task = reward::ParseTaskType(j.at("task").get<std::string>());
  s.instruction = j.value("instruction", "");
  s.image_ref = j.value("image_ref", "");
  s.dims = parse::ImageDims(j.at("image_width").get<int>(),
                            j.at("image_height").get<int>());
  const json& gold = j.at("gold");
  if (gold.is_array()) {
    std::set<std::string> items;
    for (const auto& item : gold) items.insert(text::NormalizeText(item.get<std::string>()));
    s.gold = std::move(items);
  } else {
    s.gold = gold.get<std::string>();
  }
  if (j.contains("question_type") && !j["question_type"].is_null()) {
    s.question_type = j["question_type"].get<std::string>();
  }
  ValidateSample(s);
  return s;
}

json SampleToJson(const EvalSample& s) {
  json j;
  j["id"] = s.id;
  j["split"] = SplitName(s.split);
  j["task"] = reward::TaskTypeName(s.task);
  j["instruction"] = s.instruction;
  j["image_ref"] = s.image_ref;
  j["image_width"] = s.dims.width();
  j["image_height"] = s.dims.height();
  if (const auto* set = std::get_if<std::set<std::string>>(&s.gold)) {
    j["gold"] = *set;
  } else {
    j["gold"] = std::get<std::string>(s.gold);
  }
  if (s.question_type) j["question_type"] = *s.question_type;
  return j;
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / v.size();
}

std::vector<int> SubsetClasses(LabelSubset subset) {
  if (subset == LabelSubset::kTop5) {
    return {kTop5Observations.begin(), kTop5Observations.end()};
  }
  std::vector<int> all(kNumObservations);
  for (int i = 0; i < kNumObservations; ++i) all[i] = i;
  return all;
}

void CheckLabelInputs(const std::vector<ObservationLabels>& pred,
                      const std::vector<ObservationLabels>& gold) {
  CXRBENCH_REQUIRE(pred.size() == gold.size(),
                   "prediction and gold label lists differ in length");
  CXRBENCH_REQUIRE(!pred.empty(), "label lists must be nonempty");
}

ObservationLabels LabelsFromJson(const json& j) {
  CXRBENCH_REQUIRE(j.is_array() && j.size() == kNumObservations,
                   "labels must be an array of 14 flags");
  ObservationLabels labels{};
  for (int i = 0; i < kNumObservations; ++i) {
    const int v = j[i].get<int>();
    CXRBENCH_REQUIRE(v == 0 || v == 1, "label flags must be 0 or 1");
    labels[i] = v == 1;
  }
  return labels;
}

std::string FormatValue(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

Split ParseSplit(std::string_view name) {
  for (size_t i = 0; i < kSplitNames.size(); ++i) {
    if (kSplitNames[i] == name) return static_cast<Split>(i);
  }
  throw ContractViolation("unknown split '" + std::string(name) + "'");
}

std::string_view SplitName(Split split) {
  return kSplitNames[static_cast<int>(split)];
}

bool IsReportSplit(Split split) {
  return split != Split::kExtVqa && split != Split::kCxrVqa;
}

bool IsKnownQuestionType(std::string_view tag) {
  return std::find(kQuestionTypes.begin(), kQuestionTypes.end(), tag) !=
         kQuestionTypes.end();
}

void ValidateSample(const EvalSample& sample) {
  const bool open = sample.task == reward::TaskType::kOpenText;
  CXRBENCH_REQUIRE(IsReportSplit(sample.split) == open,
                   "split " + std::string(SplitName(sample.split)) +
                       " does not admit task " +
                       std::string(reward::TaskTypeName(sample.task)));
  const bool set_gold = std::holds_alternative<std::set<std::string>>(sample.gold);
  CXRBENCH_REQUIRE(set_gold == (sample.task == reward::TaskType::kMultiObject),
                   "gold answer shape does not match the task");
  if (sample.question_type) {
    CXRBENCH_REQUIRE(IsKnownQuestionType(*sample.question_type),
                     "unknown question type '" + *sample.question_type + "'");
  }
}

Dataset ReadDataset(std::istream& in) {
  Dataset dataset;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (IsBlank(line)) continue;
    if (!header_seen) {
      header_seen = true;
      json header;
      try {
        header = json::parse(line);
      } catch (const json::exception&) {
        throw SchemaMismatch(std::to_string(kSchemaVersion), "unparseable header");
      }
      if (!header.is_object() || !header.contains("schema_version")) {
        throw SchemaMismatch(std::to_string(kSchemaVersion), "no schema_version");
      }
      if (header["schema_version"] != kSchemaVersion) {
        throw SchemaMismatch(std::to_string(kSchemaVersion),
                             header["schema_version"].dump());
      }
      continue;
    }
    try {
      EvalSample sample = SampleFromJson(json::parse(line));
      CXRBENCH_REQUIRE(ids.insert(sample.id).second,
                       "duplicate sample id '" + sample.id + "'");
      dataset.samples.push_back(std::move(sample));
    } catch (const std::exception& e) {
      dataset.errors.push_back({line_no, e.what()});
    }
  }
  return dataset;
}

Dataset LoadDataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path);
  return ReadDataset(in);
}

void WriteDataset(std::ostream& out, const std::vector<EvalSample>& samples) {
  out << json{{"schema_version", kSchemaVersion}}.dump() << '\n';
  for (const auto& s : samples) out << SampleToJson(s).dump() << '\n';
}

VqaResult VqaAccuracy(const std::map<std::string, std::string>& predictions,
                      const std::vector<EvalSample>& samples) {
  std::set<std::string> ids;
  for (const auto& s : samples) ids.insert(s.id);
  for (const auto& [id, _] : predictions) {
    CXRBENCH_REQUIRE(ids.count(id), "prediction for unknown sample '" + id + "'");
  }
  VqaResult result;
  std::vector<double> all;
  std::map<std::string, std::vector<double>> by_type;
  for (const auto& s : samples) {
    CXRBENCH_REQUIRE(s.task != reward::TaskType::kOpenText,
                     "VQA accuracy needs closed-ended or multi-object samples");
    double score = 0.0;
    auto it = predictions.find(s.id);
    if (it == predictions.end()) {
      result.missing.push_back(s.id);
    } else if (s.task == reward::TaskType::kClosedEnded) {
      score = reward::NormalizeAnswer(it->second) ==
                      reward::NormalizeAnswer(std::get<std::string>(s.gold))
                  ? 1.0
                  : 0.0;
    } else {
      score = text::SetF1(reward::ParseAnswerSet(it->second),
                          std::get<std::set<std::string>>(s.gold))
                  .value;
    }
    all.push_back(score);
    by_type[s.question_type.value_or("")].push_back(score);
  }
  result.count = all.size();
  result.overall = Mean(all);
  for (const auto& [type, scores] : by_type) {
    result.per_type[type] = {Mean(scores), static_cast<int>(scores.size())};
  }
  return result;
}

double ClassCounts::f1() const {
  const int denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * tp / denom;
}

ClassCounts CountClass(const std::vector<ObservationLabels>& pred,
                       const std::vector<ObservationLabels>& gold, int cls) {
  CheckLabelInputs(pred, gold);
  CXRBENCH_REQUIRE(cls >= 0 && cls < kNumObservations, "class index out of range");
  ClassCounts c;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i][cls];
    const bool g = gold[i][cls];
    c.tp += p && g;
    c.fp += p && !g;
    c.fn += !p && g;
  }
  return c;
}

F1Aggregate ComputeF1(const std::vector<ObservationLabels>& pred,
                      const std::vector<ObservationLabels>& gold,
                      LabelSubset subset) {
  CheckLabelInputs(pred, gold);
  ClassCounts pooled;
  std::vector<double> per_class;
  for (int cls : SubsetClasses(subset)) {
    const ClassCounts c = CountClass(pred, gold, cls);
    pooled.tp += c.tp;
    pooled.fp += c.fp;
    pooled.fn += c.fn;
    if (c.support() > 0 || c.predicted() > 0) per_class.push_back(c.f1());
  }
  if (per_class.empty()) {
    const double nan = std::nan("");
    return {nan, nan};
  }
  return {pooled.f1(), Mean(per_class)};
}

std::vector<ObservationF1> PerObservationF1(
    const std::vector<ObservationLabels>& pred,
    const std::vector<ObservationLabels>& gold, int top_k) {
  CheckLabelInputs(pred, gold);
  CXRBENCH_REQUIRE(top_k >= 0, "top_k must be nonnegative");
  std::vector<ObservationF1> rows;
  for (int cls = 0; cls < kNumObservations; ++cls) {
    const ClassCounts c = CountClass(pred, gold, cls);
    if (c.support() == 0) continue;
    rows.push_back({std::string(kObservationNames[cls]), c.support(), c, c.f1()});
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.support != b.support ? a.support > b.support : a.name < b.name;
  });
  if (static_cast<int>(rows.size()) > top_k) rows.resize(top_k);
  return rows;
}

std::map<int, int> LengthDistribution(const std::vector<std::string>& texts,
                                      int bin_width) {
  CXRBENCH_REQUIRE(bin_width >= 1, "bin width must be at least 1");
  std::map<int, int> hist;
  for (const auto& t : texts) {
    const int len = text::Tokenize(t).size();
    ++hist[(len / bin_width) * bin_width];
  }
  return hist;
}

MetricRow WeightedAverage(const std::map<std::string, MetricRow>& per_split,
                          const std::map<std::string, int>& counts) {
  CXRBENCH_REQUIRE(!per_split.empty(), "no splits to average");
  for (const auto& [split, _] : per_split) {
    CXRBENCH_REQUIRE(counts.count(split), "no sample count for split '" + split + "'");
  }
  for (const auto& [split, count] : counts) {
    CXRBENCH_REQUIRE(per_split.count(split), "no scores for split '" + split + "'");
    CXRBENCH_REQUIRE(count > 0, "split counts must be positive");
  }
  const MetricRow& first = per_split.begin()->second;
  MetricRow out;
  for (const auto& [metric, _] : first) {
    double num = 0.0, den = 0.0;
    for (const auto& [split, row] : per_split) {
      auto it = row.find(metric);
      CXRBENCH_REQUIRE(it != row.end(),
                       "metric '" + metric + "' missing for split '" + split + "'");
      num += counts.at(split) * it->second;
      den += counts.at(split);
    }
    out[metric] = num / den;
  }
  for (const auto& [split, row] : per_split) {
    for (const auto& [metric, _] : row) {
      CXRBENCH_REQUIRE(first.count(metric),
                       "metric '" + metric + "' missing for some split");
    }
  }
  return out;
}

ScoreTable ScoreReports(
    const std::vector<EvalSample>& samples, const ModelPredictions& predictions,
    const std::map<std::string, ObservationLabels>& gold_labels,
    const std::map<std::string, std::map<std::string, double>>& radgraph,
    const ScoreOptions& options) {
  ScoreTable table;
  table.notes.push_back(options.corpus_bleu
                            ? "BLEU: corpus-level, unsmoothed"
                            : "BLEU: sentence-averaged, unsmoothed");
  table.notes.push_back("METEOR: exact-match unigram alignment only");

  std::map<std::string, std::vector<const EvalSample*>> by_split;
  for (const auto& s : samples) {
    if (IsReportSplit(s.split)) by_split[std::string(SplitName(s.split))].push_back(&s);
  }
  std::set<std::string> models;
  for (const auto& [model, _] : predictions.text) models.insert(model);

  for (const auto& model : models) {
    const auto& texts = predictions.text.at(model);
    auto label_it = predictions.labels.find(model);
    std::map<std::string, MetricRow> per_split;
    std::map<std::string, int> counts;
    int missing = 0;
    for (const auto& [split, split_samples] : by_split) {
      std::vector<text::TokenSequence> cands, refs;
      MetricRow row;
      std::array<std::vector<double>, 4> bleu;
      std::vector<double> meteor, rouge;
      for (const EvalSample* s : split_samples) {
        auto it = texts.find(s->id);
        if (it == texts.end()) ++missing;
        const auto cand = text::Tokenize(it == texts.end() ? "" : it->second);
        const auto ref = text::Tokenize(std::get<std::string>(s->gold));
        for (int n = 1; n <= 4; ++n) {
          bleu[n - 1].push_back(text::BleuN(cand, ref, n, false).value);
        }
        meteor.push_back(text::MeteorSimple(cand, ref, options.meteor).value);
        rouge.push_back(text::RougeL(cand, ref, options.rouge).value);
        cands.push_back(cand);
        refs.push_back(ref);
      }
      for (int n = 1; n <= 4; ++n) {
        row["BLEU-" + std::to_string(n)] =
            options.corpus_bleu ? text::CorpusBleuN(cands, refs, n).value
                                : Mean(bleu[n - 1]);
      }
      row["METEOR"] = Mean(meteor);
      row["ROUGE-L"] = Mean(rouge);
      if (auto rg = radgraph.find(model); rg != radgraph.end()) {
        if (auto v = rg->second.find(split); v != rg->second.end()) {
          row["F1-RadGraph"] = v->second;
        }
      }
      if (label_it != predictions.labels.end()) {
        std::vector<ObservationLabels> pred, gold;
        for (const EvalSample* s : split_samples) {
          auto p = label_it->second.find(s->id);
          auto g = gold_labels.find(s->id);
          if (p == label_it->second.end() || g == gold_labels.end()) {
            pred.clear();
            break;
          }
          pred.push_back(p->second);
          gold.push_back(g->second);
        }
        if (!pred.empty()) {
          const F1Aggregate all = ComputeF1(pred, gold, LabelSubset::kAll14);
          const F1Aggregate top = ComputeF1(pred, gold, LabelSubset::kTop5);
          const std::pair<const char*, double> cols[] = {
              {"Macro-14", all.macro}, {"Micro-14", all.micro},
              {"Macro-5", top.macro}, {"Micro-5", top.micro}};
          for (const auto& [name, v] : cols) {
            if (!std::isnan(v)) row[name] = v;
          }
        }
      }
      per_split[split] = row;
      counts[split] = split_samples.size();
    }
    if (missing > 0) {
      table.notes.push_back(model + ": " + std::to_string(missing) +
                            " missing predictions scored as empty reports");
    }
    if (per_split.empty()) continue;
    // Only columns present for every split enter the weighted average.
    std::map<std::string, MetricRow> common = per_split;
    for (const auto& [split, row] : per_split) {
      for (auto& [other, other_row] : common) {
        for (auto it = other_row.begin(); it != other_row.end();) {
          it = row.count(it->first) ? std::next(it) : other_row.erase(it);
        }
      }
    }
    per_split["weighted_average"] = WeightedAverage(common, counts);
    int total = 0;
    for (const auto& [_, c] : counts) total += c;
    counts["weighted_average"] = total;
    for (auto& [split, row] : per_split) {
      std::vector<double> available;
      for (const auto& col : kTableColumns) {
        if (col == "Average") continue;
        if (auto it = row.find(col); it != row.end()) available.push_back(it->second);
      }
      row["Average"] = Mean(available);
    }
    for (const auto& [split, _] : by_split) {
      table.rows.push_back({model, split, counts[split], per_split[split]});
    }
    table.rows.push_back({model, "weighted_average", counts["weighted_average"],
                          per_split["weighted_average"]});
  }
  return table;
}

void WriteTableText(std::ostream& out, const ScoreTable& table) {
  for (const auto& note : table.notes) out << "# " << note << '\n';
  size_t model_w = 5, split_w = 5;
  for (const auto& row : table.rows) {
    model_w = std::max(model_w, row.model.size());
    split_w = std::max(split_w, row.split.size());
  }
  char buf[64];
  auto pad = [&](const std::string& s, size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  out << pad("model", model_w) << "  " << pad("split", split_w) << "  "
      << pad("n", 5);
  for (const auto& col : kTableColumns) {
    std::snprintf(buf, sizeof(buf), "  %11s", col.c_str());
    out << buf;
  }
  out << '\n';
  for (const auto& row : table.rows) {
    out << pad(row.model, model_w) << "  " << pad(row.split, split_w) << "  "
        << pad(std::to_string(row.count), 5);
    for (const auto& col : kTableColumns) {
      auto it = row.values.find(col);
      std::snprintf(buf, sizeof(buf), "  %11s",
                    it == row.values.end() ? "-" : FormatValue(it->second).c_str());
      out << buf;
    }
    out << '\n';
  }
}

void WriteTableCsv(std::ostream& out, const ScoreTable& table) {
  out << "model,split,n";
  for (const auto& col : kTableColumns) out << ',' << col;
  out << '\n';
  for (const auto& row : table.rows) {
    out << row.model << ',' << row.split << ',' << row.count;
    for (const auto& col : kTableColumns) {
      auto it = row.values.find(col);
      out << ',' << (it == row.values.end() ? "" : FormatValue(it->second));
    }
    out << '\n';
  }
}

ModelPredictions ReadPredictions(std::istream& in) {
  ModelPredictions preds;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (IsBlank(line)) continue;
    try {
      const json j = json::parse(line);
      preds.text[j.at("model").get<std::string>()][j.at("id").get<std::string>()] =
          j.at("prediction").get<std::string>();
    } catch (const json::exception& e) {
      throw ContractViolation("predictions line " + std::to_string(line_no) +
                              ": " + e.what());
    }
  }
  return preds;
}

void ReadLabels(std::istream& in, ModelPredictions& predictions,
                std::map<std::string, ObservationLabels>& gold) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (IsBlank(line)) continue;
    try {
      const json j = json::parse(line);
      const auto id = j.at("id").get<std::string>();
      const auto source = j.at("source").get<std::string>();
      const auto labels = LabelsFromJson(j.at("labels"));
      if (source == "gold") {
        gold[id] = labels;
      } else {
        predictions.labels[source][id] = labels;
      }
    } catch (const std::exception& e) {
      throw ContractViolation("labels line " + std::to_string(line_no) + ": " +
                              e.what());
    }
  }
}

std::map<std::string, std::map<std::string, double>> ReadRadGraph(
    std::istream& in) {
  std::map<std::string, std::map<std::string, double>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (IsBlank(line)) continue;
    try {
      const json j = json::parse(line);
      out[j.at("model").get<std::string>()][j.at("split").get<std::string>()] =
          j.at("f1_radgraph").get<double>();
    } catch (const json::exception& e) {
      throw ContractViolation("radgraph line " + std::to_string(line_no) + ": " +
                              e.what());
    }
  }
  return out;
}

}  // namespace cxrbench::eval
