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

#include "cxrbench/llm_judge.h"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"

namespace cxrbench::arena {
namespace {

using nlohmann::json;

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void ReplaceAll(std::string& s, const std::string& from, const std::string& to) {
  std::string out;
  size_t pos = 0;
  while (true) {
    const size_t hit = s.find(from, pos);
    if (hit == std::string::npos) break;
    out.append(s, pos, hit - pos);
    out += to;
    pos = hit + from.size();
  }
  out.append(s, pos, std::string::npos);
  s = std::move(out);
}

bool Retryable(const TransportResult& r) {
  return r.status == 0 || r.status == 429 || r.status >= 500;
}

}  // namespace

LlmJudgeConfig LlmJudgeConfig::FromJson(const json& j) {
  LlmJudgeConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "base_url") c.base_url = value.get<std::string>();
    else if (key == "path") c.path = value.get<std::string>();
    else if (key == "model") c.model = value.get<std::string>();
    else if (key == "api_key_env") c.api_key_env = value.get<std::string>();
    else if (key == "template_path") c.template_path = value.get<std::string>();
    else if (key == "max_attempts") c.max_attempts = value.get<int>();
    else if (key == "initial_backoff_seconds") c.initial_backoff_seconds = value.get<double>();
    else if (key == "backoff_multiplier") c.backoff_multiplier = value.get<double>();
    else if (key == "timeout_seconds") c.timeout_seconds = value.get<double>();
    else throw std::invalid_argument("unknown judge config key '" + key + "'");
  }
  if (c.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  return c;
}

HttpChatTransport::HttpChatTransport(std::string base_url, double timeout_seconds)
    : base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds) {}

TransportResult HttpChatTransport::Post(const std::string& path,
                                        const std::string& body,
                                        const std::string& api_key) {
  httplib::Client client(base_url_);
  const auto timeout = std::chrono::duration<double>(timeout_seconds_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers = {{"Authorization", "Bearer " + api_key}};
  auto res = client.Post(path, headers, body, "application/json");
  TransportResult out;
  if (!res) {
    out.error = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

std::string RenderJudgePrompt(const std::string& tmpl, const JudgeRequest& request) {
  std::string s = tmpl;
  ReplaceAll(s, "{{query}}", request.query);
  ReplaceAll(s, "{{reference}}", request.reference);
  ReplaceAll(s, "{{report_a}}", request.first_report);
  ReplaceAll(s, "{{report_b}}", request.second_report);
  return s;
}

std::optional<JudgeVerdict::Winner> ParseVerdictToken(const std::string& reply) {
  const std::string t = Trim(reply);
  if (t == "A") return JudgeVerdict::Winner::kFirst;
  if (t == "B") return JudgeVerdict::Winner::kSecond;
  return std::nullopt;
}

LlmJudge::LlmJudge(LlmJudgeConfig config, std::string prompt_template,
                   std::string api_key, std::unique_ptr<ChatTransport> transport,
                   Sleeper sleeper)
    : config_(std::move(config)),
      template_(std::move(prompt_template)),
      api_key_(std::move(api_key)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)) {
  if (api_key_.empty()) {
    throw CredentialError("judge API key is empty (set " + config_.api_key_env + ")");
  }
  if (!sleeper_) {
    sleeper_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
  }
}

std::unique_ptr<LlmJudge> LlmJudge::FromEnvironment(const LlmJudgeConfig& config) {
  const char* key = std::getenv(config.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw CredentialError("environment variable " + config.api_key_env +
                          " is not set; the LLM judge needs an API key");
  }
  if (config.base_url.empty()) throw std::runtime_error("judge base_url is empty");
  std::ifstream in(config.template_path);
  if (!in) {
    throw std::runtime_error("cannot read judge template " + config.template_path);
  }
  std::stringstream tmpl;
  tmpl << in.rdbuf();
  return std::make_unique<LlmJudge>(
      config, tmpl.str(), key,
      std::make_unique<HttpChatTransport>(config.base_url, config.timeout_seconds));
}

JudgeVerdict LlmJudge::Evaluate(const JudgeRequest& request) {
  json body;
  body["model"] = config_.model;
  body["temperature"] = 0;
  body["messages"] = json::array(
      {{{"role", "user"}, {"content", RenderJudgePrompt(template_, request)}}});
  const std::string payload = body.dump();

  JudgeVerdict verdict;
  double backoff = config_.initial_backoff_seconds;
  TransportResult result;
  for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
    if (attempt > 0) {
      ++retries_;
      sleeper_(std::chrono::duration<double>(backoff));
      backoff *= config_.backoff_multiplier;
    }
    result = transport_->Post(config_.path, payload, api_key_);
    if (!Retryable(result)) break;
  }
  if (result.status != 200) {
    verdict.raw = result.status == 0
                      ? "transport error: " + result.error
                      : "HTTP " + std::to_string(result.status) + ": " + result.body;
    return verdict;
  }
  try {
    const json reply = json::parse(result.body);
    verdict.raw = reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    verdict.raw = result.body;
    return verdict;
  }
  verdict.winner = ParseVerdictToken(verdict.raw);
  verdict.parse_ok = verdict.winner.has_value();
  return verdict;
}

}  // namespace cxrbench::arena
