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

// Five-dimension expert annotation records, per-group aggregation and
// inter-group agreement.

#ifndef CXRBENCH_ANNOTATION_H_
#define CXRBENCH_ANNOTATION_H_

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nlohmann/json.hpp"

namespace cxrbench::annotation {

enum class Preference { kThis, kOther };

// "this" / "other". Throws ContractViolation otherwise.
Preference ParsePreference(std::string_view name);
std::string_view PreferenceName(Preference p);

// One model's response to one sample as judged by one group.
struct AnnotationRecord {
  std::string sample_id;
  std::string model_id;
  int group = 1;
  std::vector<int> relevance;    // per reasoning step, 0/1
  std::vector<int> correctness;  // per reasoning step, 0/1
  int completeness = 0;
  Preference grounded_preference = Preference::kThis;
  Preference overall_preference = Preference::kThis;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

// Throws ContractViolation on a group outside {1, 2}, step lists of
// different length, non-binary flags or empty ids.
void ValidateRecord(const AnnotationRecord& record);

nlohmann::json ToJson(const AnnotationRecord& record);
// Validates.
AnnotationRecord RecordFromJson(const nlohmann::json& j);

inline constexpr int kNumDimensions = 5;
inline constexpr std::string_view kDimensionNames[kNumDimensions] = {
    "relevance", "correctness", "completeness", "grounded_preference",
    "overall_preference"};

// Undefined dimensions (no records, or no steps) are empty optionals.
struct DimensionScores {
  std::optional<double> values[kNumDimensions];

  friend bool operator==(const DimensionScores&, const DimensionScores&) = default;
};

struct ModelAnnotationScores {
  DimensionScores group[2];
  DimensionScores average;  // mean of the two groups; undefined if either is

  friend bool operator==(const ModelAnnotationScores&,
                         const ModelAnnotationScores&) = default;
};

// Relevance and correctness pool every step flag of a group's records;
// completeness is the mean sample flag; preferences are the fraction of
// samples where the model was preferred. Validates every record.
std::map<std::string, ModelAnnotationScores> AggregateAnnotations(
    const std::vector<AnnotationRecord>& records);

// Per (sample, model) unit: binary dimensions agree iff equal, step
// dimensions are the fraction of equal steps. Each dimension is the mean over
// units (units with no steps are skipped for step dimensions). Throws
// ContractViolation listing the uncovered units when the groups do not cover
// the same (sample, model) units, or when step counts differ.
DimensionScores GroupAgreement(const std::vector<AnnotationRecord>& group1,
                               const std::vector<AnnotationRecord>& group2);

nlohmann::json ToJson(const DimensionScores& scores);
nlohmann::json ToJson(const std::map<std::string, ModelAnnotationScores>& table);

}  // namespace cxrbench::annotation

#endif  // CXRBENCH_ANNOTATION_H_
