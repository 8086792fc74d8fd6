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

#include "cxrbench/config.h"

#include <fstream>
#include <functional>
#include <map>

#include "cxrbench/contract.h"

namespace cxrbench::config {
namespace {

using nlohmann::json;
using Setter = std::function<void(const json&)>;

void Overlay(const json& j, const std::string& section,
             const std::map<std::string, Setter>& setters) {
  if (j.is_null()) return;
  if (!j.is_object()) throw ConfigError(section + " config must be an object");
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw ConfigError("unknown " + section + " config key '" + key + "'");
    }
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError(section + "." + key + ": " + e.what());
    }
  }
}

template <typename T>
Setter Set(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

}  // namespace

json LoadFile(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    json j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    if (!j.is_object()) throw ConfigError("config root must be an object");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

json Section(const json& j, const std::string& key) {
  return j.contains(key) ? j.at(key) : json::object();
}

reward::RewardConfig ApplyReward(const json& j, reward::RewardConfig c) {
  Overlay(j, "reward",
          {{"lambda", Set(c.lambda)},
           {"phi_penalty", Set(c.phi_penalty)},
           {"per_box_bonus", Set(c.per_box_bonus)},
           {"coo_floor", Set(c.coo_floor)},
           {"ans_scale", Set(c.ans_scale)},
           {"rouge_beta", Set(c.rouge.beta)},
           {"coordinate_mode",
            [&c](const json& v) {
              const auto s = v.get<std::string>();
              if (s == "literal") c.coordinate_mode = reward::CoordinateMode::kLiteral;
              else if (s == "capped") c.coordinate_mode = reward::CoordinateMode::kCapped;
              else throw ConfigError("coordinate_mode must be literal or capped");
            }},
           {"penalty_mode",
            [&c](const json& v) {
              const auto s = v.get<std::string>();
              if (s == "once") c.penalty_mode = reward::PenaltyMode::kOnce;
              else if (s == "per_box") c.penalty_mode = reward::PenaltyMode::kPerBox;
              else throw ConfigError("penalty_mode must be once or per_box");
            }},
           {"coordinate_unit", [&c](const json& v) {
              const auto s = v.get<std::string>();
              if (s == "box") c.coordinate_unit = parse::CoordinateUnit::kBox;
              else if (s == "point") c.coordinate_unit = parse::CoordinateUnit::kPoint;
              else if (s == "number") c.coordinate_unit = parse::CoordinateUnit::kNumber;
              else throw ConfigError("coordinate_unit must be box, point or number");
            }}});
  try {
    c.Validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  return c;
}

grpo::GrpoConfig ApplyGrpo(const json& j, grpo::GrpoConfig c) {
  Overlay(j, "grpo",
          {{"epsilon", Set(c.epsilon)},
           {"beta", Set(c.beta)},
           {"group_size", Set(c.group_size)},
           {"learning_rate", Set(c.learning_rate)},
           {"iterations", Set(c.iterations)},
           {"inner_steps", Set(c.inner_steps)},
           {"degenerate_std_epsilon", Set(c.degenerate_std_epsilon)},
           {"kl_ceiling", Set(c.kl_ceiling)},
           {"divergence_bound", Set(c.divergence_bound)}});
  try {
    c.Validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  return c;
}

grpo::TrainOptions ApplyToy(const json& j, grpo::TrainOptions c) {
  Overlay(j, "toy",
          {{"max_length", Set(c.max_length)},
           {"cold_start_steps", Set(c.cold_start_steps)},
           {"cold_start_learning_rate", Set(c.cold_start_learning_rate)},
           {"eval_samples_per_query", Set(c.eval_samples_per_query)}});
  if (c.max_length < 1 || c.cold_start_steps < 0 || c.eval_samples_per_query < 1) {
    throw ConfigError("toy config out of range");
  }
  return c;
}

arena::ArenaOptions ApplyArena(const json& j, arena::ArenaOptions c) {
  Overlay(j, "arena",
          {{"refit_every", Set(c.refit_every)},
           {"ridge", Set(c.bt.ridge)},
           {"tolerance", Set(c.bt.tolerance)},
           {"max_iterations", Set(c.bt.max_iterations)},
           {"max_attempts_per_battle", Set(c.max_attempts_per_battle)},
           {"max_in_flight", Set(c.max_in_flight)},
           {"sampling", [&c](const json& v) {
              const auto s = v.get<std::string>();
              if (s == "adaptive") c.sampling = arena::SamplingPolicy::kAdaptive;
              else if (s == "uniform") c.sampling = arena::SamplingPolicy::kUniform;
              else throw ConfigError("sampling must be adaptive or uniform");
            }}});
  if (c.refit_every < 1 || c.max_in_flight < 1 || c.max_attempts_per_battle < 1 ||
      c.bt.ridge < 0.0) {
    throw ConfigError("arena config out of range");
  }
  return c;
}

}  // namespace cxrbench::config
