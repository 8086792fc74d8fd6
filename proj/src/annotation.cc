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

#include "cxrbench/annotation.h"

#include <array>
#include <set>
#include <utility>

#include "cxrbench/contract.h"

namespace cxrbench::annotation {
namespace {

using nlohmann::json;

struct Tally {
  double sum = 0.0;
  int count = 0;
  void Add(double v) {
    sum += v;
    ++count;
  }
  std::optional<double> Mean() const {
    if (count == 0) return std::nullopt;
    return sum / count;
  }
};

void CheckFlags(const std::vector<int>& flags, const char* what) {
  for (int f : flags) {
    CXRBENCH_REQUIRE(f == 0 || f == 1, std::string(what) + " flags must be 0 or 1");
  }
}

std::vector<int> FlagsFromJson(const json& j, const char* key) {
  CXRBENCH_REQUIRE(j.contains(key) && j[key].is_array(),
                   std::string(key) + " must be an array of 0/1 flags");
  std::vector<int> flags;
  for (const auto& v : j[key]) {
    CXRBENCH_REQUIRE(v.is_number_integer(), std::string(key) + " flags must be integers");
    flags.push_back(v.get<int>());
  }
  return flags;
}

using Unit = std::pair<std::string, std::string>;

std::map<Unit, const AnnotationRecord*> IndexUnits(
    const std::vector<AnnotationRecord>& records) {
  std::map<Unit, const AnnotationRecord*> index;
  for (const auto& r : records) {
    ValidateRecord(r);
    CXRBENCH_REQUIRE(index.emplace(Unit{r.sample_id, r.model_id}, &r).second,
                     "duplicate record for sample '" + r.sample_id + "', model '" +
                         r.model_id + "'");
  }
  return index;
}

std::optional<double> OptionalMean(const std::optional<double>& a,
                                   const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return (*a + *b) / 2.0;
}

}  // namespace

Preference ParsePreference(std::string_view name) {
  if (name == "this") return Preference::kThis;
  if (name == "other") return Preference::kOther;
  throw ContractViolation("preference must be 'this' or 'other'");
}

std::string_view PreferenceName(Preference p) {
  return p == Preference::kThis ? "this" : "other";
}

void ValidateRecord(const AnnotationRecord& record) {
  CXRBENCH_REQUIRE(!record.sample_id.empty(), "sample_id must be nonempty");
  CXRBENCH_REQUIRE(!record.model_id.empty(), "model_id must be nonempty");
  CXRBENCH_REQUIRE(record.group == 1 || record.group == 2, "group must be 1 or 2");
  CXRBENCH_REQUIRE(record.relevance.size() == record.correctness.size(),
                   "relevance and correctness must have one flag per step");
  CheckFlags(record.relevance, "relevance");
  CheckFlags(record.correctness, "correctness");
  CXRBENCH_REQUIRE(record.completeness == 0 || record.completeness == 1,
                   "completeness must be 0 or 1");
}

json ToJson(const AnnotationRecord& r) {
  json j;
  j["sample_id"] = r.sample_id;
  j["model_id"] = r.model_id;
  j["group"] = r.group;
  j["relevance"] = r.relevance;
  j["correctness"] = r.correctness;
  j["completeness"] = r.completeness;
  j["grounded_preference"] = PreferenceName(r.grounded_preference);
  j["overall_preference"] = PreferenceName(r.overall_preference);
  return j;
}

AnnotationRecord RecordFromJson(const json& j) {
  CXRBENCH_REQUIRE(j.is_object(), "annotation record must be an object");
  AnnotationRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.group = j.at("group").get<int>();
  r.relevance = FlagsFromJson(j, "relevance");
  r.correctness = FlagsFromJson(j, "correctness");
  r.completeness = j.at("completeness").get<int>();
  r.grounded_preference = ParsePreference(j.at("grounded_preference").get<std::string>());
  r.overall_preference = ParsePreference(j.at("overall_preference").get<std::string>());
  ValidateRecord(r);
  return r;
}

std::map<std::string, ModelAnnotationScores> AggregateAnnotations(
    const std::vector<AnnotationRecord>& records) {
  std::map<std::string, std::array<std::array<Tally, kNumDimensions>, 2>> tallies;
  for (const auto& r : records) {
    ValidateRecord(r);
    auto& t = tallies[r.model_id][r.group - 1];
    for (int f : r.relevance) t[0].Add(f);
    for (int f : r.correctness) t[1].Add(f);
    t[2].Add(r.completeness);
    t[3].Add(r.grounded_preference == Preference::kThis ? 1.0 : 0.0);
    t[4].Add(r.overall_preference == Preference::kThis ? 1.0 : 0.0);
  }
  std::map<std::string, ModelAnnotationScores> out;
  for (const auto& [model, groups] : tallies) {
    ModelAnnotationScores& s = out[model];
    for (int g = 0; g < 2; ++g) {
      for (int d = 0; d < kNumDimensions; ++d) {
        s.group[g].values[d] = groups[g][d].Mean();
      }
    }
    for (int d = 0; d < kNumDimensions; ++d) {
      s.average.values[d] = OptionalMean(s.group[0].values[d], s.group[1].values[d]);
    }
  }
  return out;
}

DimensionScores GroupAgreement(const std::vector<AnnotationRecord>& group1,
                               const std::vector<AnnotationRecord>& group2) {
  const auto a = IndexUnits(group1);
  const auto b = IndexUnits(group2);
  std::string missing;
  for (const auto& [unit, _] : a) {
    if (!b.count(unit)) missing += " " + unit.first + "/" + unit.second;
  }
  for (const auto& [unit, _] : b) {
    if (!a.count(unit)) missing += " " + unit.first + "/" + unit.second;
  }
  CXRBENCH_REQUIRE(missing.empty(), "groups cover different samples:" + missing);
  std::array<Tally, kNumDimensions> agree;
  for (const auto& [unit, ra] : a) {
    const AnnotationRecord* rb = b.at(unit);
    CXRBENCH_REQUIRE(ra->relevance.size() == rb->relevance.size(),
                     "step counts differ for sample '" + unit.first + "'");
    const size_t steps = ra->relevance.size();
    if (steps > 0) {
      int rel = 0, cor = 0;
      for (size_t k = 0; k < steps; ++k) {
        rel += ra->relevance[k] == rb->relevance[k];
        cor += ra->correctness[k] == rb->correctness[k];
      }
      agree[0].Add(static_cast<double>(rel) / steps);
      agree[1].Add(static_cast<double>(cor) / steps);
    }
    agree[2].Add(ra->completeness == rb->completeness);
    agree[3].Add(ra->grounded_preference == rb->grounded_preference);
    agree[4].Add(ra->overall_preference == rb->overall_preference);
  }
  DimensionScores out;
  for (int d = 0; d < kNumDimensions; ++d) out.values[d] = agree[d].Mean();
  return out;
}

json ToJson(const DimensionScores& scores) {
  json j = json::object();
  for (int d = 0; d < kNumDimensions; ++d) {
    const std::string key(kDimensionNames[d]);
    j[key] = scores.values[d] ? json(*scores.values[d]) : json(nullptr);
  }
  return j;
}

json ToJson(const std::map<std::string, ModelAnnotationScores>& table) {
  json j = json::object();
  for (const auto& [model, s] : table) {
    j[model] = {{"group1", ToJson(s.group[0])},
                {"group2", ToJson(s.group[1])},
                {"average", ToJson(s.average)}};
  }
  return j;
}

}  // namespace cxrbench::annotation
