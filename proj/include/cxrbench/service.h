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

// Annotation and battle-voting service state with an append-only, fsynced
// event log. Every mutation is an event; state is a pure fold over events, so
// a restart replays the log (from the latest snapshot) to the same state.

#ifndef CXRBENCH_SERVICE_H_
#define CXRBENCH_SERVICE_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cxrbench/annotation.h"
#include "cxrbench/arena.h"
#include "nlohmann/json.hpp"

namespace cxrbench::service {

inline constexpr int kCorpusSchemaVersion = 1;

// One annotation sample with the responses of every model.
struct CorpusItem {
  std::string id;
  std::string image_ref;
  std::string instruction;
  std::string gold;
  std::map<std::string, std::string> responses;  // model -> raw response
};

// Line-delimited JSON: header
//   {"schema_version": 1, "models": [...], "annotation_models": [a, b]}
// then one {"id", "image_ref", "instruction", "gold", "responses": {model:
// text}} per line. Every item must carry a response for every model.
struct Corpus {
  std::vector<std::string> models;
  std::pair<std::string, std::string> annotation_models;
  std::vector<CorpusItem> items;
  std::map<std::string, int> index;  // sample id -> position

  const CorpusItem& Item(const std::string& id) const;
  int ModelIndex(const std::string& model) const;
};

// Throws eval::SchemaMismatch on a bad header and ContractViolation on
// malformed items.
Corpus ReadCorpus(std::istream& in);
Corpus LoadCorpus(const std::string& path);

// Numbered reasoning steps shown to annotators: the think segments (or the
// whole response when there are none) split into sentences and lines.
std::vector<std::string> ResponseSteps(const std::string& raw);

struct Event {
  int64_t seq = 0;
  std::string ts;    // UTC, informational only
  std::string kind;  // session | annotation | battle | config
  nlohmann::json payload;
};

nlohmann::json ToJson(const Event& e);
Event EventFromJson(const nlohmann::json& j);

// Append-only JSONL file; each Append writes one line and fsyncs before
// returning. A torn final line (no trailing newline) left by a crash is
// dropped on open since it was never acknowledged.
class EventLog {
 public:
  explicit EventLog(std::string path);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  const std::vector<Event>& replayed() const { return replayed_; }
  int64_t last_seq() const { return last_seq_; }
  Event Append(const std::string& kind, nlohmann::json payload);

 private:
  std::string path_;
  int fd_ = -1;
  int64_t last_seq_ = 0;
  std::vector<Event> replayed_;
};

struct Session {
  std::string id;
  std::string annotator;
  int group = 1;
  std::vector<std::string> assignment;
  std::vector<bool> swapped;  // true: A shows the second annotation model
  std::map<std::string, int64_t> annotated;  // sample id -> event seq
  int cursor = 0;  // first unannotated position
};

struct IssuedBattle {
  std::string id;
  int m1 = 0;
  int m2 = 0;
  std::string sample_id;
  double propensity = 1.0;
  bool swapped = false;  // true: A shows m2
  std::optional<int> outcome;
};

class ServiceState {
 public:
  ServiceState(std::shared_ptr<const Corpus> corpus, uint64_t seed);

  // Pure fold step. Throws ContractViolation on an event inconsistent with
  // the current state.
  void Apply(const Event& event);

  nlohmann::json ToJson() const;
  // Restores a snapshot produced by ToJson.
  void Restore(const nlohmann::json& snapshot);

  const Corpus& corpus() const { return *corpus_; }
  uint64_t seed() const { return seed_; }
  int64_t last_seq() const { return last_seq_; }
  const std::map<std::string, Session>& sessions() const { return sessions_; }
  const std::map<std::string, IssuedBattle>& battles() const { return battles_; }
  const arena::ArenaState& votes() const { return votes_; }
  int sessions_created() const { return sessions_created_; }
  int battles_issued() const { return battles_issued_; }

  // Current records, corrections applied, in (group, sample, model) order.
  std::vector<annotation::AnnotationRecord> Records() const;
  nlohmann::json Stats() const;
  nlohmann::json Ranking() const;

 private:
  void ApplySession(const nlohmann::json& p);
  void ApplyAnnotation(const nlohmann::json& p, int64_t seq);
  void ApplyBattle(const nlohmann::json& p);

  std::shared_ptr<const Corpus> corpus_;
  uint64_t seed_;
  int64_t last_seq_ = 0;
  std::map<std::string, Session> sessions_;
  // (group, sample) -> the two unblinded records
  std::map<std::pair<int, std::string>, std::vector<annotation::AnnotationRecord>>
      records_;
  std::map<std::string, IssuedBattle> battles_;
  arena::ArenaState votes_;
  int sessions_created_ = 0;
  int battles_issued_ = 0;
};

struct ServiceConfig {
  std::string data_dir;
  std::string corpus_path;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string token_env;  // empty: no bearer token required
  std::string image_dir;  // served under /images when set
  std::string static_dir;  // served under / when set
  int snapshot_every = 100;
  uint64_t seed = 1;

  static ServiceConfig FromJson(const nlohmann::json& j);
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

// Request handling over the state and the log. Thread-safe: a single mutex
// serializes mutations and reads see a consistent state.
class Service {
 public:
  // Opens (or creates) the event log in config.data_dir, restores the latest
  // snapshot and replays newer events. Throws std::runtime_error if the log
  // was written for a different corpus or seed.
  Service(const ServiceConfig& config, std::shared_ptr<const Corpus> corpus);

  Response CreateSession(const nlohmann::json& body);
  Response NextItem(const std::string& session_id);
  Response PostAnnotation(const std::string& session_id, const nlohmann::json& body);
  Response PostCorrection(const std::string& session_id, const std::string& sample_id,
                          const nlohmann::json& body);
  Response NextBattle(const nlohmann::json& body);
  Response PostVote(const std::string& battle_id, const nlohmann::json& body);
  Response Stats();
  Response Ranking();

  // Copy of the live state as JSON (for replay-equality checks).
  nlohmann::json StateJson();
  void WriteSnapshot();

 private:
  Event Commit(const std::string& kind, nlohmann::json payload);
  Response Annotate(const std::string& session_id, const std::string& sample_id,
                    const nlohmann::json& body, bool correction);

  ServiceConfig config_;
  std::shared_ptr<const Corpus> corpus_;
  std::mutex mu_;
  ServiceState state_;
  std::unique_ptr<EventLog> log_;
  int since_snapshot_ = 0;
};

// Rebuilds state from the log file alone, ignoring snapshots.
ServiceState ReplayLog(const std::string& log_path,
                       std::shared_ptr<const Corpus> corpus, uint64_t seed);

// Binds the HTTP API and blocks until Stop() or a signal. Endpoints:
//   POST /v1/sessions                        create annotation session
//   GET  /v1/sessions/{id}/next              next blinded item
//   POST /v1/sessions/{id}/annotations       submit annotation
//   POST /v1/sessions/{id}/annotations/{sample}/correction
//   POST /v1/battles/next                    issue a blinded battle
//   POST /v1/battles/{id}/vote               vote "A" or "B"
//   GET  /v1/stats                           live annotation statistics
//   GET  /v1/arena/ranking                   ranking from human votes
//   GET  /v1/health
class HttpServer {
 public:
  HttpServer(Service& service, const ServiceConfig& config);
  ~HttpServer();
  // Binds (port 0 picks a free port), calls `on_bound` with the bound port,
  // then serves until Stop(). Returns false if the port cannot be bound.
  bool Listen(const std::function<void(int)>& on_bound = {});
  void Stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cxrbench::service

#endif  // CXRBENCH_SERVICE_H_
