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

// Arena judge backed by a chat-completion HTTP endpoint.

#ifndef CXRBENCH_LLM_JUDGE_H_
#define CXRBENCH_LLM_JUDGE_H_

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "cxrbench/arena.h"
#include "nlohmann/json.hpp"

namespace cxrbench::arena {

struct LlmJudgeConfig {
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "CXRBENCH_JUDGE_API_KEY";
  std::string template_path;
  int max_attempts = 4;
  double initial_backoff_seconds = 0.5;
  double backoff_multiplier = 2.0;
  double timeout_seconds = 60.0;

  // Reads the keys above; unknown keys are rejected.
  static LlmJudgeConfig FromJson(const nlohmann::json& j);
};

class CredentialError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TransportResult {
  int status = 0;  // 0 when the request never completed
  std::string body;
  std::string error;
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual TransportResult Post(const std::string& path, const std::string& body,
                               const std::string& api_key) = 0;
};

// httplib client; https URLs use OpenSSL.
class HttpChatTransport : public ChatTransport {
 public:
  HttpChatTransport(std::string base_url, double timeout_seconds);
  TransportResult Post(const std::string& path, const std::string& body,
                       const std::string& api_key) override;

 private:
  std::string base_url_;
  double timeout_seconds_;
};

// Substitutes {{query}}, {{reference}}, {{report_a}} and {{report_b}}.
std::string RenderJudgePrompt(const std::string& tmpl, const JudgeRequest& request);

// Strict verdict: after trimming whitespace the reply must be exactly "A" or
// "B".
std::optional<JudgeVerdict::Winner> ParseVerdictToken(const std::string& reply);

using Sleeper = std::function<void(std::chrono::duration<double>)>;

class LlmJudge : public Judge {
 public:
  // Throws CredentialError if `api_key` is empty.
  LlmJudge(LlmJudgeConfig config, std::string prompt_template,
           std::string api_key, std::unique_ptr<ChatTransport> transport,
           Sleeper sleeper = {});

  // Reads the key from config.api_key_env and the template from
  // config.template_path; throws CredentialError or std::runtime_error before
  // any request is made.
  static std::unique_ptr<LlmJudge> FromEnvironment(const LlmJudgeConfig& config);

  // Transport failures, 429 and 5xx are retried with exponential backoff up
  // to max_attempts; other failures and unparseable replies return
  // parse_ok = false with the raw reply or error text.
  JudgeVerdict Evaluate(const JudgeRequest& request) override;

  int retries() const { return retries_.load(); }

 private:
  LlmJudgeConfig config_;
  std::string template_;
  std::string api_key_;
  std::unique_ptr<ChatTransport> transport_;
  Sleeper sleeper_;
  std::atomic<int> retries_{0};
};

}  // namespace cxrbench::arena

#endif  // CXRBENCH_LLM_JUDGE_H_
