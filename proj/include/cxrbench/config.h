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

// JSON configuration for every command. One file may carry the sections
// "reward", "grpo", "toy", "arena", "judge" and "service"; unknown keys are
// rejected so typos fail loudly.

#ifndef CXRBENCH_CONFIG_H_
#define CXRBENCH_CONFIG_H_

#include <string>

#include "cxrbench/arena.h"
#include "cxrbench/grpo.h"
#include "cxrbench/reward.h"
#include "cxrbench/toy_env.h"
#include "nlohmann/json.hpp"

namespace cxrbench::config {

// Thrown for unreadable or invalid configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Returns an empty object for an empty path.
nlohmann::json LoadFile(const std::string& path);

// Returns `j[key]`, or an empty object when absent.
nlohmann::json Section(const nlohmann::json& j, const std::string& key);

// Each overlays the keys present in `j` onto `base` and validates.
reward::RewardConfig ApplyReward(const nlohmann::json& j,
                                 reward::RewardConfig base = {});
grpo::GrpoConfig ApplyGrpo(const nlohmann::json& j, grpo::GrpoConfig base = {});
// Keys: max_length, cold_start_steps, cold_start_learning_rate,
// eval_samples_per_query.
grpo::TrainOptions ApplyToy(const nlohmann::json& j, grpo::TrainOptions base = {});
// Keys: refit_every, ridge, tolerance, max_iterations, sampling
// ("adaptive" | "uniform"), max_attempts_per_battle, max_in_flight.
arena::ArenaOptions ApplyArena(const nlohmann::json& j,
                               arena::ArenaOptions base = {});

}  // namespace cxrbench::config

#endif  // CXRBENCH_CONFIG_H_
