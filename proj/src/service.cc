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

#include "cxrbench/service.h"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cxrbench/contract.h"
#include "cxrbench/eval.h"
#include "cxrbench/random.h"
#include "cxrbench/response_parser.h"

namespace cxrbench::service {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr uint64_t kSessionStream = 0x5e55;
constexpr uint64_t kBattleStream = 0xba77;
constexpr int kVoteRefitEvery = 10;

bool IsBlank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

std::string NowUtc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      now.time_since_epoch()) % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec, static_cast<int>(ms.count()));
  return buf;
}

void WriteAll(int fd, const std::string& data, const std::string& path) {
  size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error("write to " + path + " failed: " + std::strerror(errno));
    }
    off += n;
  }
}

void SyncOrThrow(int fd, const std::string& path) {
  if (::fsync(fd) != 0) {
    throw std::runtime_error("fsync of " + path + " failed: " + std::strerror(errno));
  }
}

json MatrixToJson(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd MatrixFromJson(const json& j) {
  if (j.empty()) return {};
  Eigen::MatrixXd m(j.size(), j[0].size());
  for (int i = 0; i < m.rows(); ++i) {
    for (int k = 0; k < m.cols(); ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

json BattleToJson(const arena::Battle& b) {
  return {{"t", b.t}, {"m1", b.m1}, {"m2", b.m2}, {"H", b.outcome},
          {"P_At", b.propensity}, {"sample_id", b.sample_id}};
}

std::string CorpusDigest(const Corpus& corpus, uint64_t seed) {
  json j;
  j["models"] = corpus.models;
  j["annotation_models"] = {corpus.annotation_models.first,
                            corpus.annotation_models.second};
  j["seed"] = seed;
  json items = json::array();
  for (const auto& it : corpus.items) {
    items.push_back({{"id", it.id}, {"image_ref", it.image_ref},
                     {"instruction", it.instruction}, {"gold", it.gold},
                     {"responses", it.responses}});
  }
  j["items"] = items;
  return arena::Digest(j.dump());
}

// Accumulates field-level validation errors.
class FieldErrors {
 public:
  void Add(const std::string& field, const std::string& message) {
    errors_.push_back({{"field", field}, {"message", message}});
  }
  bool empty() const { return errors_.empty(); }
  Response ToResponse() const {
    return {400, {{"error", "validation failed"}, {"fields", errors_}}};
  }

 private:
  json errors_ = json::array();
};

Response Error(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

// Validates one blinded side {"relevance", "correctness", "completeness"}.
void CheckSide(const json& body, const std::string& side, size_t steps,
               FieldErrors& errors) {
  if (!body.contains(side) || !body[side].is_object()) {
    errors.Add(side, "required object");
    return;
  }
  const json& s = body[side];
  for (const char* key : {"relevance", "correctness"}) {
    const std::string field = side + "." + key;
    if (!s.contains(key) || !s[key].is_array()) {
      errors.Add(field, "required array of 0/1 flags");
      continue;
    }
    if (s[key].size() != steps) {
      errors.Add(field, "expected " + std::to_string(steps) + " flags, one per step");
    }
    for (const auto& v : s[key]) {
      if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
        errors.Add(field, "flags must be 0 or 1");
        break;
      }
    }
  }
  const std::string field = side + ".completeness";
  if (!s.contains("completeness") || !s["completeness"].is_number_integer() ||
      (s["completeness"].get<int>() != 0 && s["completeness"].get<int>() != 1)) {
    errors.Add(field, "required 0 or 1");
  }
}

void CheckChoice(const json& body, const char* key, FieldErrors& errors) {
  if (!body.contains(key) || !body[key].is_string() ||
      (body[key] != "A" && body[key] != "B")) {
    errors.Add(key, "required \"A\" or \"B\"");
  }
}

}  // namespace

const CorpusItem& Corpus::Item(const std::string& id) const {
  auto it = index.find(id);
  CXRBENCH_REQUIRE(it != index.end(), "unknown sample '" + id + "'");
  return items[it->second];
}

int Corpus::ModelIndex(const std::string& model) const {
  for (size_t i = 0; i < models.size(); ++i) {
    if (models[i] == model) return i;
  }
  throw ContractViolation("unknown model '" + model + "'");
}

Corpus ReadCorpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (IsBlank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      if (!header_seen) {
        throw eval::SchemaMismatch(std::to_string(kCorpusSchemaVersion),
                                   "unparseable header");
      }
      throw ContractViolation("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!header_seen) {
      header_seen = true;
      if (!j.is_object() || !j.contains("schema_version")) {
        throw eval::SchemaMismatch(std::to_string(kCorpusSchemaVersion),
                                   "no schema_version");
      }
      if (j["schema_version"] != kCorpusSchemaVersion) {
        throw eval::SchemaMismatch(std::to_string(kCorpusSchemaVersion),
                                   j["schema_version"].dump());
      }
      try {
        corpus.models = j.at("models").get<std::vector<std::string>>();
        const auto pair = j.at("annotation_models").get<std::vector<std::string>>();
        CXRBENCH_REQUIRE(pair.size() == 2 && pair[0] != pair[1],
                         "annotation_models must name two distinct models");
        corpus.annotation_models = {pair[0], pair[1]};
      } catch (const json::exception& e) {
        throw ContractViolation(std::string("corpus header: ") + e.what());
      }
      CXRBENCH_REQUIRE(corpus.models.size() >= 2, "corpus needs at least two models");
      CXRBENCH_REQUIRE(std::set<std::string>(corpus.models.begin(), corpus.models.end())
                               .size() == corpus.models.size(),
                       "corpus model names must be unique");
      corpus.ModelIndex(corpus.annotation_models.first);
      corpus.ModelIndex(corpus.annotation_models.second);
      continue;
    }
    try {
      CorpusItem item;
      item.id = j.at("id").get<std::string>();
      item.image_ref = j.value("image_ref", "");
      item.instruction = j.value("instruction", "");
      item.gold = j.value("gold", "");
      item.responses = j.at("responses").get<std::map<std::string, std::string>>();
      for (const auto& m : corpus.models) {
        CXRBENCH_REQUIRE(item.responses.count(m), "no response from model '" + m + "'");
      }
      CXRBENCH_REQUIRE(!item.id.empty(), "empty sample id");
      CXRBENCH_REQUIRE(corpus.index.emplace(item.id, corpus.items.size()).second,
                       "duplicate sample id '" + item.id + "'");
      corpus.items.push_back(std::move(item));
    } catch (const std::exception& e) {
      throw ContractViolation("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header_seen) {
    throw eval::SchemaMismatch(std::to_string(kCorpusSchemaVersion), "empty file");
  }
  return corpus;
}

Corpus LoadCorpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus " + path);
  return ReadCorpus(in);
}

std::vector<std::string> ResponseSteps(const std::string& raw) {
  const parse::ParsedResponse parsed = parse::ParseResponse(raw);
  if (parsed.think_segments.empty()) return parse::SplitReasoningSteps(raw);
  std::string joined;
  for (const auto& seg : parsed.think_segments) joined += seg + "\n";
  return parse::SplitReasoningSteps(joined);
}

json ToJson(const Event& e) {
  json j;
  j["seq"] = e.seq;
  j["ts"] = e.ts;
  j["kind"] = e.kind;
  j["payload"] = e.payload;
  return j;
}

Event EventFromJson(const json& j) {
  Event e;
  e.seq = j.at("seq").get<int64_t>();
  e.ts = j.value("ts", "");
  e.kind = j.at("kind").get<std::string>();
  e.payload = j.at("payload");
  return e;
}

EventLog::EventLog(std::string path) : path_(std::move(path)) {
  fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw std::runtime_error("cannot open event log " + path_ + ": " +
                             std::strerror(errno));
  }
  std::ifstream in(path_, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();
  size_t complete = content.rfind('\n');
  complete = complete == std::string::npos ? 0 : complete + 1;
  if (complete < content.size()) {
    // Torn tail from a crash mid-append: never acknowledged, drop it.
    if (::ftruncate(fd_, complete) != 0) {
      throw std::runtime_error("cannot truncate torn event log tail");
    }
    SyncOrThrow(fd_, path_);
  }
  std::istringstream lines(content.substr(0, complete));
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (IsBlank(line)) continue;
    Event e;
    try {
      e = EventFromJson(json::parse(line));
    } catch (const json::exception& ex) {
      throw std::runtime_error("corrupt event log " + path_ + " line " +
                               std::to_string(line_no) + ": " + ex.what());
    }
    if (e.seq <= last_seq_) {
      throw std::runtime_error("event log sequence numbers not increasing at line " +
                               std::to_string(line_no));
    }
    last_seq_ = e.seq;
    replayed_.push_back(std::move(e));
  }
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

Event EventLog::Append(const std::string& kind, json payload) {
  Event e;
  e.seq = last_seq_ + 1;
  e.ts = NowUtc();
  e.kind = kind;
  e.payload = std::move(payload);
  WriteAll(fd_, ToJson(e).dump() + "\n", path_);
  SyncOrThrow(fd_, path_);
  last_seq_ = e.seq;
  return e;
}

ServiceState::ServiceState(std::shared_ptr<const Corpus> corpus, uint64_t seed)
    : corpus_(std::move(corpus)), seed_(seed), votes_(corpus_->models.size()) {}

void ServiceState::Apply(const Event& event) {
  CXRBENCH_REQUIRE(event.seq > last_seq_, "event sequence number not increasing");
  if (event.kind == "session") {
    ApplySession(event.payload);
  } else if (event.kind == "annotation") {
    ApplyAnnotation(event.payload, event.seq);
  } else if (event.kind == "battle") {
    ApplyBattle(event.payload);
  } else {
    CXRBENCH_REQUIRE(event.kind == "config", "unknown event kind '" + event.kind + "'");
  }
  last_seq_ = event.seq;
}

void ServiceState::ApplySession(const json& p) {
  Session s;
  s.id = p.at("session_id").get<std::string>();
  s.annotator = p.at("annotator").get<std::string>();
  s.group = p.at("group").get<int>();
  s.assignment = p.at("assignment").get<std::vector<std::string>>();
  s.swapped = p.at("swapped").get<std::vector<bool>>();
  CXRBENCH_REQUIRE(s.group == 1 || s.group == 2, "group must be 1 or 2");
  CXRBENCH_REQUIRE(s.assignment.size() == s.swapped.size(),
                   "blinding map must cover the assignment");
  for (const auto& id : s.assignment) corpus_->Item(id);
  CXRBENCH_REQUIRE(!sessions_.count(s.id), "duplicate session '" + s.id + "'");
  sessions_.emplace(s.id, std::move(s));
  ++sessions_created_;
}

void ServiceState::ApplyAnnotation(const json& p, int64_t seq) {
  const auto session_id = p.at("session_id").get<std::string>();
  const auto sample_id = p.at("sample_id").get<std::string>();
  const bool correction = p.value("correction", false);
  auto it = sessions_.find(session_id);
  CXRBENCH_REQUIRE(it != sessions_.end(), "unknown session '" + session_id + "'");
  Session& s = it->second;
  CXRBENCH_REQUIRE(std::find(s.assignment.begin(), s.assignment.end(), sample_id) !=
                       s.assignment.end(),
                   "sample not assigned to session");
  const auto key = std::make_pair(s.group, sample_id);
  if (correction) {
    CXRBENCH_REQUIRE(s.annotated.count(sample_id), "correction without annotation");
  } else {
    CXRBENCH_REQUIRE(!s.annotated.count(sample_id) && !records_.count(key),
                     "duplicate annotation");
  }
  std::vector<annotation::AnnotationRecord> recs;
  for (const auto& r : p.at("records")) {
    recs.push_back(annotation::RecordFromJson(r));
    CXRBENCH_REQUIRE(recs.back().group == s.group && recs.back().sample_id == sample_id,
                     "record does not match its session");
  }
  CXRBENCH_REQUIRE(recs.size() == 2, "an annotation carries two records");
  records_[key] = std::move(recs);
  s.annotated[sample_id] = seq;
  while (s.cursor < static_cast<int>(s.assignment.size()) &&
         s.annotated.count(s.assignment[s.cursor])) {
    ++s.cursor;
  }
}

void ServiceState::ApplyBattle(const json& p) {
  const auto phase = p.at("phase").get<std::string>();
  const auto id = p.at("battle_id").get<std::string>();
  if (phase == "issued") {
    IssuedBattle b;
    b.id = id;
    b.m1 = p.at("m1").get<int>();
    b.m2 = p.at("m2").get<int>();
    b.sample_id = p.at("sample_id").get<std::string>();
    b.propensity = p.at("propensity").get<double>();
    b.swapped = p.at("swapped").get<bool>();
    const int m = corpus_->models.size();
    CXRBENCH_REQUIRE(b.m1 >= 0 && b.m2 >= 0 && b.m1 < m && b.m2 < m && b.m1 != b.m2,
                     "battle models out of range");
    CXRBENCH_REQUIRE(b.propensity > 0.0, "battle propensity must be positive");
    corpus_->Item(b.sample_id);
    CXRBENCH_REQUIRE(!battles_.count(id), "duplicate battle '" + id + "'");
    battles_.emplace(id, b);
    ++battles_issued_;
    return;
  }
  CXRBENCH_REQUIRE(phase == "vote", "unknown battle phase '" + phase + "'");
  auto it = battles_.find(id);
  CXRBENCH_REQUIRE(it != battles_.end(), "vote for unknown battle '" + id + "'");
  CXRBENCH_REQUIRE(!it->second.outcome, "battle already voted");
  const int outcome = p.at("outcome").get<int>();
  CXRBENCH_REQUIRE(outcome == 0 || outcome == 1, "outcome must be 0 or 1");
  it->second.outcome = outcome;
  arena::Battle b;
  b.t = votes_.battles.size();
  b.m1 = it->second.m1;
  b.m2 = it->second.m2;
  b.outcome = outcome;
  b.propensity = it->second.propensity;
  b.sample_id = corpus_->index.at(it->second.sample_id);
  votes_.Append(b);
  if (votes_.battles.size() % kVoteRefitEvery == 0) arena::Refit(votes_, {});
}

std::vector<annotation::AnnotationRecord> ServiceState::Records() const {
  std::vector<annotation::AnnotationRecord> out;
  for (const auto& [_, recs] : records_) out.insert(out.end(), recs.begin(), recs.end());
  return out;
}

json ServiceState::ToJson() const {
  json j;
  j["last_seq"] = last_seq_;
  j["sessions_created"] = sessions_created_;
  j["battles_issued"] = battles_issued_;
  json sessions = json::array();
  for (const auto& [id, s] : sessions_) {
    sessions.push_back({{"session_id", s.id},
                        {"annotator", s.annotator},
                        {"group", s.group},
                        {"assignment", s.assignment},
                        {"swapped", s.swapped},
                        {"annotated", s.annotated},
                        {"cursor", s.cursor}});
  }
  j["sessions"] = sessions;
  json records = json::array();
  for (const auto& r : Records()) records.push_back(annotation::ToJson(r));
  j["records"] = records;
  json battles = json::array();
  for (const auto& [id, b] : battles_) {
    json jb = {{"battle_id", b.id}, {"m1", b.m1}, {"m2", b.m2},
               {"sample_id", b.sample_id}, {"propensity", b.propensity},
               {"swapped", b.swapped}};
    jb["outcome"] = b.outcome ? json(*b.outcome) : json(nullptr);
    battles.push_back(jb);
  }
  j["battles"] = battles;
  json votes = json::array();
  for (const auto& b : votes_.battles) votes.push_back(BattleToJson(b));
  j["votes"] = {{"battles", votes},
                {"scores", std::vector<double>(votes_.scores.data(),
                                               votes_.scores.data() + votes_.scores.size())},
                {"covariance", MatrixToJson(votes_.covariance)},
                {"normalized", votes_.normalized},
                {"max_pair_variance", votes_.max_pair_variance}};
  return j;
}

void ServiceState::Restore(const json& j) {
  last_seq_ = j.at("last_seq").get<int64_t>();
  sessions_created_ = j.at("sessions_created").get<int>();
  battles_issued_ = j.at("battles_issued").get<int>();
  sessions_.clear();
  for (const auto& js : j.at("sessions")) {
    Session s;
    s.id = js.at("session_id").get<std::string>();
    s.annotator = js.at("annotator").get<std::string>();
    s.group = js.at("group").get<int>();
    s.assignment = js.at("assignment").get<std::vector<std::string>>();
    s.swapped = js.at("swapped").get<std::vector<bool>>();
    s.annotated = js.at("annotated").get<std::map<std::string, int64_t>>();
    s.cursor = js.at("cursor").get<int>();
    sessions_.emplace(s.id, std::move(s));
  }
  records_.clear();
  for (const auto& jr : j.at("records")) {
    auto r = annotation::RecordFromJson(jr);
    records_[{r.group, r.sample_id}].push_back(std::move(r));
  }
  battles_.clear();
  for (const auto& jb : j.at("battles")) {
    IssuedBattle b;
    b.id = jb.at("battle_id").get<std::string>();
    b.m1 = jb.at("m1").get<int>();
    b.m2 = jb.at("m2").get<int>();
    b.sample_id = jb.at("sample_id").get<std::string>();
    b.propensity = jb.at("propensity").get<double>();
    b.swapped = jb.at("swapped").get<bool>();
    if (!jb.at("outcome").is_null()) b.outcome = jb["outcome"].get<int>();
    battles_.emplace(b.id, b);
  }
  votes_ = arena::ArenaState(corpus_->models.size());
  const json& v = j.at("votes");
  for (const auto& jb : v.at("battles")) {
    arena::Battle b;
    b.t = jb.at("t").get<int>();
    b.m1 = jb.at("m1").get<int>();
    b.m2 = jb.at("m2").get<int>();
    b.outcome = jb.at("H").get<int>();
    b.propensity = jb.at("P_At").get<double>();
    b.sample_id = jb.at("sample_id").get<int>();
    votes_.Append(b);
  }
  const auto scores = v.at("scores").get<std::vector<double>>();
  votes_.scores = Eigen::Map<const Eigen::VectorXd>(scores.data(), scores.size());
  votes_.covariance = MatrixFromJson(v.at("covariance"));
  votes_.normalized = v.at("normalized").get<std::vector<double>>();
  votes_.max_pair_variance = v.at("max_pair_variance").get<std::vector<double>>();
}

json ServiceState::Stats() const {
  json j;
  const auto records = Records();
  j["records"] = records.size();
  j["per_model"] = annotation::ToJson(annotation::AggregateAnnotations(records));
  // Agreement over the (sample, model) units both groups have annotated.
  std::vector<annotation::AnnotationRecord> g1, g2;
  for (const auto& [key, recs] : records_) {
    if (key.first != 1 || !records_.count({2, key.second})) continue;
    g1.insert(g1.end(), recs.begin(), recs.end());
    const auto& other = records_.at({2, key.second});
    g2.insert(g2.end(), other.begin(), other.end());
  }
  j["agreement_samples"] = g1.size() / 2;
  j["agreement"] = g1.empty() ? json(nullptr)
                              : annotation::ToJson(annotation::GroupAgreement(g1, g2));
  json sessions = json::array();
  for (const auto& [id, s] : sessions_) {
    sessions.push_back({{"session_id", id},
                        {"group", s.group},
                        {"annotated", s.annotated.size()},
                        {"total", s.assignment.size()},
                        {"done", s.annotated.size() == s.assignment.size()}});
  }
  j["sessions"] = sessions;
  j["battles"] = {{"issued", battles_issued_}, {"voted", votes_.battles.size()}};
  return j;
}

json ServiceState::Ranking() const {
  const int m = corpus_->models.size();
  std::vector<int> order(m);
  for (int i = 0; i < m; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return votes_.scores[a] > votes_.scores[b];
  });
  json models = json::array();
  for (int r = 0; r < m; ++r) {
    const int i = order[r];
    models.push_back({{"rank", r + 1},
                      {"model", corpus_->models[i]},
                      {"xi", votes_.scores[i]},
                      {"score", votes_.normalized[i]}});
  }
  const Eigen::MatrixXi counts = arena::CountMatrix(votes_);
  const Eigen::MatrixXd rates = arena::WinRateMatrix(votes_);
  json jc = json::array(), jr = json::array();
  for (int i = 0; i < m; ++i) {
    json rc = json::array(), rr = json::array();
    for (int k = 0; k < m; ++k) {
      rc.push_back(counts(i, k));
      rr.push_back(std::isnan(rates(i, k)) ? json(nullptr) : json(rates(i, k)));
    }
    jc.push_back(rc);
    jr.push_back(rr);
  }
  return {{"votes", votes_.battles.size()},
          {"ranking", models},
          {"model_names", corpus_->models},
          {"pair_counts", jc},
          {"win_rates", jr}};
}

ServiceConfig ServiceConfig::FromJson(const json& j) {
  ServiceConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "data_dir") c.data_dir = value.get<std::string>();
    else if (key == "corpus") c.corpus_path = value.get<std::string>();
    else if (key == "host") c.host = value.get<std::string>();
    else if (key == "port") c.port = value.get<int>();
    else if (key == "token_env") c.token_env = value.get<std::string>();
    else if (key == "image_dir") c.image_dir = value.get<std::string>();
    else if (key == "static_dir") c.static_dir = value.get<std::string>();
    else if (key == "snapshot_every") c.snapshot_every = value.get<int>();
    else if (key == "seed") c.seed = value.get<uint64_t>();
    else throw std::invalid_argument("unknown service config key '" + key + "'");
  }
  if (c.data_dir.empty()) throw std::invalid_argument("service config needs data_dir");
  if (c.corpus_path.empty()) throw std::invalid_argument("service config needs corpus");
  if (c.snapshot_every < 1) throw std::invalid_argument("snapshot_every must be >= 1");
  return c;
}

Service::Service(const ServiceConfig& config, std::shared_ptr<const Corpus> corpus)
    : config_(config), corpus_(corpus), state_(corpus, config.seed) {
  fs::create_directories(config_.data_dir);
  const std::string digest = CorpusDigest(*corpus_, config_.seed);
  const fs::path snapshot = fs::path(config_.data_dir) / "snapshot.json";
  if (fs::exists(snapshot)) {
    std::ifstream in(snapshot);
    const json snap = json::parse(in);
    if (snap.at("corpus_digest") != digest) {
      throw std::runtime_error("snapshot was written for a different corpus or seed");
    }
    state_.Restore(snap.at("state"));
  }
  log_ = std::make_unique<EventLog>((fs::path(config_.data_dir) / "events.jsonl").string());
  const auto& events = log_->replayed();
  if (events.empty()) {
    if (state_.last_seq() != 0) {
      throw std::runtime_error("snapshot is ahead of an empty event log");
    }
    Commit("config", {{"corpus_digest", digest},
                      {"seed", config_.seed},
                      {"models", corpus_->models}});
    return;
  }
  if (events.front().kind != "config" ||
      events.front().payload.value("corpus_digest", "") != digest) {
    throw std::runtime_error("event log was written for a different corpus or seed");
  }
  if (state_.last_seq() > log_->last_seq()) {
    throw std::runtime_error("snapshot is ahead of the event log");
  }
  for (const Event& e : events) {
    if (e.seq > state_.last_seq()) state_.Apply(e);
  }
}

Event Service::Commit(const std::string& kind, json payload) {
  // Validate against a scratch copy so a rejected event never reaches disk.
  ServiceState probe = state_;
  Event e{log_ ? log_->last_seq() + 1 : 1, "", kind, payload};
  probe.Apply(e);
  e = log_->Append(kind, std::move(payload));
  state_ = std::move(probe);
  if (++since_snapshot_ >= config_.snapshot_every) {
    since_snapshot_ = 0;
    WriteSnapshot();
  }
  return e;
}

void Service::WriteSnapshot() {
  const fs::path dir(config_.data_dir);
  const fs::path tmp = dir / "snapshot.json.tmp";
  const std::string data =
      json{{"corpus_digest", CorpusDigest(*corpus_, config_.seed)},
           {"state", state_.ToJson()}}
          .dump();
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw std::runtime_error("cannot write snapshot");
  WriteAll(fd, data, tmp.string());
  SyncOrThrow(fd, tmp.string());
  ::close(fd);
  fs::rename(tmp, dir / "snapshot.json");
  const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

Response Service::CreateSession(const json& body) {
  std::lock_guard<std::mutex> lock(mu_);
  FieldErrors errors;
  if (!body.is_object()) return Error(400, "body must be a JSON object");
  if (!body.contains("annotator") || !body["annotator"].is_string() ||
      body["annotator"].get<std::string>().empty()) {
    errors.Add("annotator", "required nonempty string");
  }
  if (!body.contains("group") || !body["group"].is_number_integer() ||
      (body["group"] != 1 && body["group"] != 2)) {
    errors.Add("group", "required 1 or 2");
  }
  std::vector<std::string> assignment;
  if (body.contains("sample_ids")) {
    if (!body["sample_ids"].is_array() || body["sample_ids"].empty()) {
      errors.Add("sample_ids", "must be a nonempty array of sample ids");
    } else {
      std::set<std::string> seen;
      for (const auto& v : body["sample_ids"]) {
        if (!v.is_string() || !corpus_->index.count(v.get<std::string>())) {
          errors.Add("sample_ids", "unknown sample id " + v.dump());
        } else if (!seen.insert(v.get<std::string>()).second) {
          errors.Add("sample_ids", "duplicate sample id " + v.dump());
        } else {
          assignment.push_back(v.get<std::string>());
        }
      }
    }
  } else {
    for (const auto& item : corpus_->items) assignment.push_back(item.id);
  }
  if (!errors.empty()) return errors.ToResponse();
  const int index = state_.sessions_created();
  std::vector<bool> swapped;
  for (size_t k = 0; k < assignment.size(); ++k) {
    std::mt19937_64 gen(DeriveSeed(config_.seed, kSessionStream ^ index, k));
    swapped.push_back(UniformDouble(gen) < 0.5);
  }
  const std::string id = "session-" + std::to_string(index + 1);
  Commit("session", {{"session_id", id},
                     {"annotator", body["annotator"]},
                     {"group", body["group"]},
                     {"assignment", assignment},
                     {"swapped", swapped}});
  return {201, {{"session_id", id}, {"group", body["group"]}, {"total", assignment.size()}}};
}

Response Service::NextItem(const std::string& session_id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = state_.sessions().find(session_id);
  if (it == state_.sessions().end()) return Error(404, "unknown session");
  const Session& s = it->second;
  const bool done = s.cursor >= static_cast<int>(s.assignment.size());
  json out = {{"session_id", s.id},
              {"cursor", s.cursor},
              {"total", s.assignment.size()},
              {"done", done}};
  if (done) return {200, out};
  const CorpusItem& item = corpus_->Item(s.assignment[s.cursor]);
  const bool swap = s.swapped[s.cursor];
  const auto& [first, second] = corpus_->annotation_models;
  auto side = [&](const std::string& model) {
    const std::string& text = item.responses.at(model);
    json boxes = json::array();
    for (const auto& b : parse::ParseResponse(text).boxes) {
      boxes.push_back({b.x1, b.y1, b.x2, b.y2});
    }
    return json{{"text", text}, {"steps", ResponseSteps(text)}, {"boxes", boxes}};
  };
  out["item"] = {{"sample_id", item.id},
                 {"image_ref", item.image_ref},
                 {"instruction", item.instruction},
                 {"gold", item.gold},
                 {"responses", {{"A", side(swap ? second : first)},
                                {"B", side(swap ? first : second)}}}};
  return {200, out};
}

Response Service::PostAnnotation(const std::string& session_id, const json& body) {
  if (!body.is_object() || !body.contains("sample_id") || !body["sample_id"].is_string()) {
    FieldErrors errors;
    errors.Add("sample_id", "required string");
    return errors.ToResponse();
  }
  return Annotate(session_id, body["sample_id"].get<std::string>(), body, false);
}

Response Service::PostCorrection(const std::string& session_id,
                                 const std::string& sample_id, const json& body) {
  return Annotate(session_id, sample_id, body, true);
}

Response Service::Annotate(const std::string& session_id, const std::string& sample_id,
                           const json& body, bool correction) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = state_.sessions().find(session_id);
  if (it == state_.sessions().end()) return Error(404, "unknown session");
  const Session& s = it->second;
  const auto pos = std::find(s.assignment.begin(), s.assignment.end(), sample_id);
  if (pos == s.assignment.end()) {
    FieldErrors errors;
    errors.Add("sample_id", "sample not assigned to this session");
    return errors.ToResponse();
  }
  const bool swap = s.swapped[pos - s.assignment.begin()];
  const auto& [first, second] = corpus_->annotation_models;
  const std::string model_a = swap ? second : first;
  const std::string model_b = swap ? first : second;
  const CorpusItem& item = corpus_->Item(sample_id);

  bool taken = false;
  for (const auto& r : state_.Records()) {
    if (r.group == s.group && r.sample_id == sample_id) taken = true;
  }
  if (!correction && taken) {
    json prior = json::object();
    for (const auto& r : state_.Records()) {
      if (r.group != s.group || r.sample_id != sample_id) continue;
      const std::string side = r.model_id == model_a ? "A" : "B";
      prior[side] = {{"relevance", r.relevance},
                     {"correctness", r.correctness},
                     {"completeness", r.completeness}};
      if (side == "A") {
        prior["grounded_preference"] =
            r.grounded_preference == annotation::Preference::kThis ? "A" : "B";
        prior["overall_preference"] =
            r.overall_preference == annotation::Preference::kThis ? "A" : "B";
      }
    }
    return {409, {{"error", "sample already annotated by this group"}, {"prior", prior}}};
  }
  if (correction && !s.annotated.count(sample_id)) {
    return Error(404, "no annotation of this sample in this session to correct");
  }

  FieldErrors errors;
  if (!body.is_object()) return Error(400, "body must be a JSON object");
  CheckSide(body, "A", ResponseSteps(item.responses.at(model_a)).size(), errors);
  CheckSide(body, "B", ResponseSteps(item.responses.at(model_b)).size(), errors);
  CheckChoice(body, "grounded_preference", errors);
  CheckChoice(body, "overall_preference", errors);
  if (!errors.empty()) return errors.ToResponse();

  auto record = [&](const std::string& model, const std::string& side) {
    annotation::AnnotationRecord r;
    r.sample_id = sample_id;
    r.model_id = model;
    r.group = s.group;
    r.relevance = body[side]["relevance"].get<std::vector<int>>();
    r.correctness = body[side]["correctness"].get<std::vector<int>>();
    r.completeness = body[side]["completeness"].get<int>();
    r.grounded_preference = body["grounded_preference"] == side
                                ? annotation::Preference::kThis
                                : annotation::Preference::kOther;
    r.overall_preference = body["overall_preference"] == side
                               ? annotation::Preference::kThis
                               : annotation::Preference::kOther;
    return r;
  };
  const auto ra = record(model_a, "A");
  const auto rb = record(model_b, "B");
  const auto& r_first = swap ? rb : ra;
  const auto& r_second = swap ? ra : rb;
  const Event e = Commit("annotation", {{"session_id", session_id},
                                        {"sample_id", sample_id},
                                        {"correction", correction},
                                        {"records", {annotation::ToJson(r_first),
                                                     annotation::ToJson(r_second)}}});
  const Session& after = state_.sessions().at(session_id);
  return {correction ? 200 : 201,
          {{"seq", e.seq},
           {"cursor", after.cursor},
           {"done", after.cursor >= static_cast<int>(after.assignment.size())}}};
}

Response Service::NextBattle(const json& body) {
  std::lock_guard<std::mutex> lock(mu_);
  if (!body.is_null() && !body.is_object()) return Error(400, "body must be a JSON object");
  const int index = state_.battles_issued();
  const auto p = arena::PairSamplingDistribution(state_.votes());
  std::mt19937_64 gen(DeriveSeed(config_.seed, kBattleStream, index));
  const int a = arena::DrawPair(p, UniformDouble(gen));
  const auto [m1, m2] = arena::PairModels(a, corpus_->models.size());
  const CorpusItem& item = corpus_->items[gen() % corpus_->items.size()];
  const bool swapped = UniformDouble(gen) < 0.5;
  const std::string id = "battle-" + std::to_string(index + 1);
  Commit("battle", {{"phase", "issued"},
                    {"battle_id", id},
                    {"m1", m1},
                    {"m2", m2},
                    {"sample_id", item.id},
                    {"propensity", p[a]},
                    {"swapped", swapped}});
  const std::string& r1 = item.responses.at(corpus_->models[m1]);
  const std::string& r2 = item.responses.at(corpus_->models[m2]);
  return {201,
          {{"battle_id", id},
           {"sample_id", item.id},
           {"image_ref", item.image_ref},
           {"instruction", item.instruction},
           {"reference", item.gold},
           {"reports", {{"A", swapped ? r2 : r1}, {"B", swapped ? r1 : r2}}}}};
}

Response Service::PostVote(const std::string& battle_id, const json& body) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = state_.battles().find(battle_id);
  if (it == state_.battles().end()) return Error(404, "unknown battle");
  if (it->second.outcome) return Error(409, "battle already voted");
  FieldErrors errors;
  if (!body.is_object()) return Error(400, "body must be a JSON object");
  CheckChoice(body, "choice", errors);
  if (!errors.empty()) return errors.ToResponse();
  const bool chose_a = body["choice"] == "A";
  // A shows m1 unless swapped.
  const int outcome = chose_a != it->second.swapped ? 1 : 0;
  const Event e = Commit("battle", {{"phase", "vote"},
                                    {"battle_id", battle_id},
                                    {"outcome", outcome}});
  return {201, {{"seq", e.seq}, {"votes", state_.votes().battles.size()}}};
}

Response Service::Stats() {
  std::lock_guard<std::mutex> lock(mu_);
  return {200, state_.Stats()};
}

Response Service::Ranking() {
  std::lock_guard<std::mutex> lock(mu_);
  return {200, state_.Ranking()};
}

json Service::StateJson() {
  std::lock_guard<std::mutex> lock(mu_);
  return state_.ToJson();
}

ServiceState ReplayLog(const std::string& log_path,
                       std::shared_ptr<const Corpus> corpus, uint64_t seed) {
  ServiceState state(corpus, seed);
  EventLog log(log_path);
  for (const Event& e : log.replayed()) state.Apply(e);
  return state;
}

}  // namespace cxrbench::service
