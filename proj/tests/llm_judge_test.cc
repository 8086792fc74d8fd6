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

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <deque>
#include <fstream>
#include <thread>

namespace cxrbench::arena {
namespace {

using nlohmann::json;

std::string ChatReply(const std::string& content) {
  return json{{"choices", {{{"message", {{"role", "assistant"},
                                         {"content", content}}}}}}}
      .dump();
}

// Replays a scripted sequence of results and records what was sent.
class ScriptedTransport : public ChatTransport {
 public:
  explicit ScriptedTransport(std::deque<TransportResult> script)
      : script_(std::move(script)) {}
  TransportResult Post(const std::string& path, const std::string& body,
                       const std::string& api_key) override {
    paths.push_back(path);
    bodies.push_back(body);
    keys.push_back(api_key);
    TransportResult r = script_.front();
    if (script_.size() > 1) script_.pop_front();
    return r;
  }
  std::vector<std::string> paths, bodies, keys;

 private:
  std::deque<TransportResult> script_;
};

struct Harness {
  ScriptedTransport* transport = nullptr;
  std::vector<double> sleeps;
  std::unique_ptr<LlmJudge> judge;
};

Harness Make(std::deque<TransportResult> script, int max_attempts = 4) {
  Harness h;
  auto t = std::make_unique<ScriptedTransport>(std::move(script));
  h.transport = t.get();
  LlmJudgeConfig c;
  c.model = "judge-model";
  c.max_attempts = max_attempts;
  auto* sleeps = &h.sleeps;
  h.judge = std::make_unique<LlmJudge>(
      c, "Q={{query}} R={{reference}} A={{report_a}} B={{report_b}}", "secret",
      std::move(t),
      [sleeps](std::chrono::duration<double> d) { sleeps->push_back(d.count()); });
  return h;
}

JudgeRequest Request() {
  JudgeRequest r;
  r.query = "Describe the findings.";
  r.reference = "Small left effusion.";
  r.first_report = "Left effusion.";
  r.second_report = "Normal chest.";
  return r;
}

TEST(ParseVerdictTokenTest, StrictTokens) {
  EXPECT_EQ(ParseVerdictToken("A"), JudgeVerdict::Winner::kFirst);
  EXPECT_EQ(ParseVerdictToken(" B\n"), JudgeVerdict::Winner::kSecond);
  EXPECT_FALSE(ParseVerdictToken("a"));
  EXPECT_FALSE(ParseVerdictToken("A."));
  EXPECT_FALSE(ParseVerdictToken("Report A is better"));
  EXPECT_FALSE(ParseVerdictToken(""));
}

TEST(RenderJudgePromptTest, SubstitutesEveryPlaceholder) {
  const auto text =
      RenderJudgePrompt("{{query}}|{{reference}}|{{report_a}}|{{report_b}}|{{query}}",
                        Request());
  EXPECT_EQ(text,
            "Describe the findings.|Small left effusion.|Left effusion.|"
            "Normal chest.|Describe the findings.");
}

TEST(LlmJudgeTest, VerdictAFromStub) {
  auto h = Make({{200, ChatReply("A"), ""}});
  const auto v = h.judge->Evaluate(Request());
  EXPECT_TRUE(v.parse_ok);
  EXPECT_EQ(v.winner, JudgeVerdict::Winner::kFirst);
  EXPECT_EQ(v.raw, "A");
  EXPECT_EQ(h.judge->retries(), 0);
  ASSERT_EQ(h.transport->bodies.size(), 1u);
  const auto body = json::parse(h.transport->bodies[0]);
  EXPECT_EQ(body["model"], "judge-model");
  EXPECT_EQ(body["messages"][0]["content"],
            "Q=Describe the findings. R=Small left effusion. A=Left effusion. "
            "B=Normal chest.");
  EXPECT_EQ(h.transport->keys[0], "secret");
  EXPECT_EQ(h.transport->paths[0], "/v1/chat/completions");
}

TEST(LlmJudgeTest, ProseIsNotAVerdict) {
  auto h = Make({{200, ChatReply("Report A is clearly better."), ""}});
  const auto v = h.judge->Evaluate(Request());
  EXPECT_FALSE(v.parse_ok);
  EXPECT_FALSE(v.winner.has_value());
  EXPECT_EQ(v.raw, "Report A is clearly better.");
}

TEST(LlmJudgeTest, TwoFailuresThenSuccess) {
  auto h = Make({{0, "", "connection refused"},
                 {503, "busy", ""},
                 {200, ChatReply("B"), ""}});
  const auto v = h.judge->Evaluate(Request());
  EXPECT_TRUE(v.parse_ok);
  EXPECT_EQ(v.winner, JudgeVerdict::Winner::kSecond);
  EXPECT_EQ(h.judge->retries(), 2);
  EXPECT_EQ(h.sleeps, (std::vector<double>{0.5, 1.0}));
}

TEST(LlmJudgeTest, AttemptsAreBounded) {
  auto h = Make({{429, "slow down", ""}}, 3);
  const auto v = h.judge->Evaluate(Request());
  EXPECT_FALSE(v.parse_ok);
  EXPECT_EQ(h.transport->bodies.size(), 3u);
  EXPECT_EQ(h.judge->retries(), 2);
  EXPECT_NE(v.raw.find("429"), std::string::npos);
}

TEST(LlmJudgeTest, ClientErrorsAreNotRetried) {
  auto h = Make({{401, "unauthorized", ""}, {200, ChatReply("A"), ""}});
  const auto v = h.judge->Evaluate(Request());
  EXPECT_FALSE(v.parse_ok);
  EXPECT_EQ(h.transport->bodies.size(), 1u);
}

TEST(LlmJudgeTest, MissingCredentialsFailBeforeAnyRequest) {
  auto t = std::make_unique<ScriptedTransport>(
      std::deque<TransportResult>{{200, ChatReply("A"), ""}});
  EXPECT_THROW(LlmJudge({}, "t", "", std::move(t)), CredentialError);
  LlmJudgeConfig c;
  c.api_key_env = "CXRBENCH_TEST_UNSET_KEY_VARIABLE";
  c.base_url = "http://127.0.0.1:1";
  ::unsetenv(c.api_key_env.c_str());
  EXPECT_THROW(LlmJudge::FromEnvironment(c), CredentialError);
}

TEST(LlmJudgeConfigTest, FromJsonRejectsUnknownKeys) {
  const auto c = LlmJudgeConfig::FromJson(
      {{"base_url", "http://x"}, {"model", "m"}, {"max_attempts", 2}});
  EXPECT_EQ(c.base_url, "http://x");
  EXPECT_EQ(c.max_attempts, 2);
  EXPECT_ANY_THROW(LlmJudgeConfig::FromJson({{"base_ulr", "http://x"}}));
}

TEST(HttpChatTransportTest, TalksToLocalEndpoint) {
  httplib::Server server;
  std::string seen_auth;
  int calls = 0;
  server.Post("/v1/chat/completions",
              [&](const httplib::Request& req, httplib::Response& res) {
                seen_auth = req.get_header_value("Authorization");
                if (calls++ == 0) {
                  res.status = 500;
                  return;
                }
                res.set_content(ChatReply(" A "), "application/json");
              });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const std::string dir = ::testing::TempDir();
  const std::string tmpl = dir + "/judge_template.txt";
  std::ofstream(tmpl) << "{{report_a}} vs {{report_b}}";
  ::setenv("CXRBENCH_TEST_JUDGE_KEY", "k123", 1);
  LlmJudgeConfig c;
  c.base_url = "http://127.0.0.1:" + std::to_string(port);
  c.api_key_env = "CXRBENCH_TEST_JUDGE_KEY";
  c.template_path = tmpl;
  c.initial_backoff_seconds = 0.01;
  auto judge = LlmJudge::FromEnvironment(c);
  const auto v = judge->Evaluate(Request());
  server.stop();
  th.join();
  EXPECT_TRUE(v.parse_ok);
  EXPECT_EQ(v.winner, JudgeVerdict::Winner::kFirst);
  EXPECT_EQ(judge->retries(), 1);
  EXPECT_EQ(seen_auth, "Bearer k123");
}

}  // namespace
}  // namespace cxrbench::arena
