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

// cxrbench: command-line entry points for scoring, rewards, the arena, the
// toy GRPO run and the annotation service.
//
// Exit codes: 0 success, 1 runtime failure, 2 input error, 3 schema mismatch.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cxrbench/arena.h"
#include "cxrbench/config.h"
#include "cxrbench/contract.h"
#include "cxrbench/eval.h"
#include "cxrbench/llm_judge.h"
#include "cxrbench/response_parser.h"
#include "cxrbench/reward.h"
#include "cxrbench/service.h"
#include "cxrbench/toy_env.h"
#include "nlohmann/json.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitInput = 2;
constexpr int kExitSchema = 3;

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  uint64_t seed = 1;
  std::string config_path;
  std::string out;
};

std::ifstream OpenInput(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + what + " '" + path + "'");
  return in;
}

// Writes to `path`, or stdout when empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      if (fs::path(path).has_parent_path()) {
        fs::create_directories(fs::path(path).parent_path());
      }
      file_.open(path);
      if (!file_) throw InputError("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::string Fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// ---- score ----------------------------------------------------------------

struct ScoreArgs {
  std::string dataset;
  std::string predictions;
  std::string labels;
  std::string radgraph;
  bool corpus_bleu = false;
  std::string format = "text";
};

int RunScore(const GlobalOptions& g, const ScoreArgs& a) {
  auto dataset_in = OpenInput(a.dataset, "dataset");
  const cxrbench::eval::Dataset dataset = cxrbench::eval::ReadDataset(dataset_in);
  for (const auto& e : dataset.errors) {
    std::cerr << "dataset line " << e.line << ": " << e.message << "\n";
  }
  auto pred_in = OpenInput(a.predictions, "predictions");
  cxrbench::eval::ModelPredictions preds = cxrbench::eval::ReadPredictions(pred_in);
  std::map<std::string, cxrbench::eval::ObservationLabels> gold_labels;
  if (!a.labels.empty()) {
    auto in = OpenInput(a.labels, "labels");
    cxrbench::eval::ReadLabels(in, preds, gold_labels);
  }
  std::map<std::string, std::map<std::string, double>> radgraph;
  if (!a.radgraph.empty()) {
    auto in = OpenInput(a.radgraph, "radgraph scores");
    radgraph = cxrbench::eval::ReadRadGraph(in);
  }
  std::set<std::string> ids;
  for (const auto& s : dataset.samples) ids.insert(s.id);
  for (const auto& [model, texts] : preds.text) {
    for (const auto& [id, _] : texts) {
      if (!ids.count(id)) {
        throw InputError("prediction from " + model + " for unknown sample '" + id + "'");
      }
    }
  }
  cxrbench::eval::ScoreOptions options;
  options.corpus_bleu = a.corpus_bleu;
  const auto table = cxrbench::eval::ScoreReports(dataset.samples, preds, gold_labels,
                                                  radgraph, options);
  Output out(g.out);
  std::ostream& os = out.stream();
  if (a.format == "csv") {
    cxrbench::eval::WriteTableCsv(os, table);
  } else {
    cxrbench::eval::WriteTableText(os, table);
  }

  std::map<std::string, std::vector<cxrbench::eval::EvalSample>> vqa_by_split;
  for (const auto& s : dataset.samples) {
    if (!cxrbench::eval::IsReportSplit(s.split)) {
      vqa_by_split[std::string(cxrbench::eval::SplitName(s.split))].push_back(s);
    }
  }
  if (vqa_by_split.empty()) return kExitOk;
  if (a.format == "csv") {
    os << "\nmodel,split,question_type,n,accuracy\n";
  } else {
    os << "\n# VQA accuracy (closed-ended exact match, multi-object set F1)\n";
  }
  for (const auto& [model, texts] : preds.text) {
    for (const auto& [split, samples] : vqa_by_split) {
      std::map<std::string, std::string> answers;
      for (const auto& s : samples) {
        auto it = texts.find(s.id);
        if (it == texts.end()) continue;
        const auto parsed = cxrbench::parse::ParseResponse(it->second);
        answers[s.id] = parsed.boxed_answer.value_or(it->second);
      }
      const auto r = cxrbench::eval::VqaAccuracy(answers, samples);
      auto row = [&](const std::string& type, int n, double acc) {
        if (a.format == "csv") {
          os << model << ',' << split << ',' << type << ',' << n << ',' << Fixed(acc, 4)
             << '\n';
        } else {
          os << model << "  " << split << "  " << (type.empty() ? "-" : type) << "  n=" << n
             << "  " << Fixed(acc, 4) << '\n';
        }
      };
      row("overall", r.count, r.overall);
      for (const auto& [type, t] : r.per_type) row(type.empty() ? "untagged" : type, t.count, t.accuracy);
      if (!r.missing.empty()) {
        std::cerr << model << " " << split << ": " << r.missing.size()
                  << " missing predictions scored 0\n";
      }
    }
  }
  return kExitOk;
}

// ---- reward ---------------------------------------------------------------

struct RewardArgs {
  std::string fixtures;
  std::string responses;
  std::string dataset;
  std::optional<double> lambda;
  bool check = false;
};

struct RewardRow {
  std::string id;
  std::string task;
  std::optional<cxrbench::reward::RewardBreakdown> breakdown;
  std::optional<cxrbench::reward::RewardBreakdown> expected;
  std::string error;
};

int RunReward(const GlobalOptions& g, const RewardArgs& a) {
  const json cfg = cxrbench::config::LoadFile(g.config_path);
  auto config = cxrbench::config::ApplyReward(cxrbench::config::Section(cfg, "reward"));
  if (a.lambda) {
    config.lambda = *a.lambda;
    try {
      config.Validate();
    } catch (const cxrbench::ContractViolation& e) {
      throw InputError(e.what());
    }
  }
  if (a.fixtures.empty() == a.responses.empty()) {
    throw InputError("give exactly one of --fixtures or --responses");
  }

  std::vector<RewardRow> rows;
  if (!a.fixtures.empty()) {
    auto in = OpenInput(a.fixtures, "fixtures");
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      RewardRow row;
      row.id = "line" + std::to_string(line_no);
      try {
        std::istringstream one(line);
        const auto fixtures = cxrbench::reward::ReadRewardFixtures(one);
        const auto& f = fixtures.at(0);
        row.id = f.id;
        row.task = cxrbench::reward::TaskTypeName(f.task);
        row.expected = f.expected;
        row.breakdown = cxrbench::reward::TotalReward(
            cxrbench::parse::ParseResponse(f.raw_response), f.gold, f.task,
            cxrbench::parse::ImageDims(f.image_width, f.image_height), config);
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  } else {
    if (a.dataset.empty()) throw InputError("--responses needs --dataset");
    auto din = OpenInput(a.dataset, "dataset");
    const auto dataset = cxrbench::eval::ReadDataset(din);
    std::map<std::string, const cxrbench::eval::EvalSample*> by_id;
    for (const auto& s : dataset.samples) by_id[s.id] = &s;
    for (const auto& e : dataset.errors) {
      rows.push_back({"dataset line " + std::to_string(e.line), "", {}, {}, e.message});
    }
    auto rin = OpenInput(a.responses, "responses");
    std::string line;
    int line_no = 0;
    while (std::getline(rin, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      RewardRow row;
      row.id = "line" + std::to_string(line_no);
      try {
        const json j = json::parse(line);
        row.id = j.at("id").get<std::string>();
        auto it = by_id.find(row.id);
        if (it == by_id.end()) throw InputError("no dataset sample '" + row.id + "'");
        const auto& s = *it->second;
        row.task = cxrbench::reward::TaskTypeName(s.task);
        row.breakdown = cxrbench::reward::TotalReward(
            cxrbench::parse::ParseResponse(j.at("response").get<std::string>()), s.gold,
            s.task, s.dims, config);
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }

  Output out(g.out);
  std::ostream& os = out.stream();
  os << "# lambda=" << Fixed(config.lambda, 4) << "\n";
  os << "id\ttask\tr_ans\tr_coo\tr_fom\ttotal" << (a.check ? "\tcheck" : "") << "\n";
  std::map<std::string, std::pair<double, int>> by_task;
  double sum = 0.0;
  int scored = 0, mismatches = 0, errors = 0;
  for (const auto& r : rows) {
    if (!r.breakdown) {
      ++errors;
      os << r.id << "\t" << (r.task.empty() ? "-" : r.task) << "\terror: " << r.error << "\n";
      continue;
    }
    const auto& b = *r.breakdown;
    os << r.id << "\t" << r.task << "\t" << Fixed(b.r_ans) << "\t" << Fixed(b.r_coo) << "\t"
       << Fixed(b.r_fom) << "\t" << Fixed(b.total);
    if (a.check && r.expected) {
      const auto& e = *r.expected;
      const bool ok = std::abs(b.r_ans - e.r_ans) <= 1e-12 &&
                      std::abs(b.r_coo - e.r_coo) <= 1e-12 &&
                      std::abs(b.r_fom - e.r_fom) <= 1e-12 &&
                      std::abs(b.total - e.total) <= 1e-12;
      mismatches += !ok;
      os << "\t" << (ok ? "ok" : "MISMATCH expected total " + Fixed(e.total));
    }
    os << "\n";
    by_task[r.task].first += b.total;
    ++by_task[r.task].second;
    sum += b.total;
    ++scored;
  }
  os << "# summary\n";
  for (const auto& [task, acc] : by_task) {
    os << "# " << task << ": n=" << acc.second << " mean_total="
       << Fixed(acc.first / acc.second) << "\n";
  }
  os << "# all: n=" << scored << " mean_total=" << Fixed(scored ? sum / scored : 0.0)
     << " errors=" << errors << "\n";
  if (a.check && mismatches > 0) {
    std::cerr << mismatches << " rows differ from their expected breakdown\n";
    return kExitRuntime;
  }
  return kExitOk;
}

// ---- arena ----------------------------------------------------------------

struct ArenaArgs {
  std::string mode;
  int battles = 6000;
  int num_models = 10;
  double gap = 0.5;
  int num_samples = 100;
  std::string corpus;
};

class CorpusSource : public cxrbench::arena::ResponseSource {
 public:
  explicit CorpusSource(const cxrbench::service::Corpus& corpus) : corpus_(corpus) {}
  int num_samples() const override { return corpus_.items.size(); }
  std::string Query(int s) const override { return corpus_.items[s].instruction; }
  std::string Reference(int s) const override { return corpus_.items[s].gold; }
  std::string Response(int m, int s) const override {
    return corpus_.items[s].responses.at(corpus_.models[m]);
  }

 private:
  const cxrbench::service::Corpus& corpus_;
};

int RunArenaCommand(const GlobalOptions& g, const ArenaArgs& a) {
  const json cfg = cxrbench::config::LoadFile(g.config_path);
  auto options = cxrbench::config::ApplyArena(cxrbench::config::Section(cfg, "arena"));
  options.seed = g.seed;
  if (a.battles < 1) throw InputError("--battles must be at least 1");

  std::vector<std::string> names;
  std::unique_ptr<cxrbench::arena::Judge> judge;
  std::unique_ptr<cxrbench::arena::ResponseSource> source;
  std::unique_ptr<cxrbench::service::Corpus> corpus;
  if (a.mode == "simulate") {
    const json sim = cxrbench::config::Section(cfg, "simulation");
    std::vector<double> latent;
    if (sim.contains("latent")) {
      latent = sim["latent"].get<std::vector<double>>();
    } else {
      for (int i = 0; i < a.num_models; ++i) latent.push_back(a.gap * i);
    }
    if (latent.size() < 2) throw InputError("the arena needs at least two models");
    for (size_t i = 0; i < latent.size(); ++i) names.push_back("model" + std::to_string(i));
    if (sim.contains("names")) names = sim["names"].get<std::vector<std::string>>();
    if (names.size() != latent.size()) throw InputError("names and latent differ in length");
    judge = std::make_unique<cxrbench::arena::SimulatedJudge>(latent, g.seed);
    source = std::make_unique<cxrbench::arena::BlankResponseSource>(a.num_samples);
  } else {
    if (a.corpus.empty()) throw InputError("llm mode needs --corpus");
    // Credentials and template are checked before any battle is drawn.
    const auto judge_cfg =
        cxrbench::arena::LlmJudgeConfig::FromJson(cxrbench::config::Section(cfg, "judge"));
    judge = cxrbench::arena::LlmJudge::FromEnvironment(judge_cfg);
    corpus = std::make_unique<cxrbench::service::Corpus>(
        cxrbench::service::LoadCorpus(a.corpus));
    names = corpus->models;
    source = std::make_unique<CorpusSource>(*corpus);
  }

  const fs::path dir = g.out.empty() ? fs::path(".") : fs::path(g.out);
  fs::create_directories(dir);
  std::ofstream log(dir / "battles.jsonl");
  if (!log) throw InputError("cannot write " + (dir / "battles.jsonl").string());
  const auto state = cxrbench::arena::RunArena(
      names.size(), *source, *judge, a.battles, options,
      [&log](const cxrbench::arena::Battle& b) { cxrbench::arena::WriteBattle(log, b); });
  std::ofstream report(dir / "ranking.txt");
  cxrbench::arena::WriteArenaReport(report, state, names);
  cxrbench::arena::WriteArenaReport(std::cout, state, names);
  if (state.dropped_battles > 0) {
    std::cerr << state.dropped_battles << " battles dropped after "
              << options.max_attempts_per_battle << " failed judge attempts\n";
  }
  return kExitOk;
}

// ---- grpo-demo ------------------------------------------------------------

int RunGrpoDemo(const GlobalOptions& g, int iterations) {
  const json cfg = cxrbench::config::LoadFile(g.config_path);
  cxrbench::grpo::TrainOptions options =
      cxrbench::config::ApplyToy(cxrbench::config::Section(cfg, "toy"));
  options.grpo = cxrbench::config::ApplyGrpo(cxrbench::config::Section(cfg, "grpo"));
  options.reward = cxrbench::config::ApplyReward(cxrbench::config::Section(cfg, "reward"));
  if (iterations >= 0) options.grpo.iterations = iterations;
  const auto env = cxrbench::grpo::ToyEnvironment::Bundled();
  std::optional<cxrbench::grpo::TrainResult> trained;
  try {
    trained = cxrbench::grpo::TrainGrpo(env, options, g.seed);
  } catch (const cxrbench::grpo::TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << " after " << e.curve().size()
              << " iterations\n";
    return kExitRuntime;
  }
  const cxrbench::grpo::TrainResult& result = *trained;
  auto summary_json = [](const cxrbench::grpo::Diagnostics& d) {
    return json{{"mean_reward", d.mean_reward},
                {"format_rate", d.format_rate},
                {"mean_kl", d.mean_kl},
                {"mean_answer_score", d.mean_answer_score}};
  };
  nlohmann::ordered_json summary;
  summary["seed"] = g.seed;
  summary["iterations"] = options.grpo.iterations;
  summary["initial"] = summary_json(result.initial);
  summary["final"] = summary_json(result.final);
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    std::ofstream curve(fs::path(g.out) / "curve.jsonl");
    cxrbench::grpo::WriteCurve(curve, result.curve);
    std::ofstream(fs::path(g.out) / "summary.json") << summary.dump(2) << "\n";
  }
  std::cout << "initial: reward " << Fixed(result.initial.mean_reward, 4) << "  format "
            << Fixed(result.initial.format_rate, 4) << "\n"
            << "final:   reward " << Fixed(result.final.mean_reward, 4) << "  format "
            << Fixed(result.final.format_rate, 4) << "  kl "
            << Fixed(result.final.mean_kl, 4) << "\n";
  return kExitOk;
}

// ---- serve ----------------------------------------------------------------

cxrbench::service::HttpServer* g_server = nullptr;

void HandleStop(int) {
  if (g_server != nullptr) g_server->Stop();
}

struct ServeArgs {
  std::string data_dir;
  std::string corpus;
  int port = -1;
};

int RunServe(const GlobalOptions& g, const ServeArgs& a) {
  json cfg = cxrbench::config::Section(cxrbench::config::LoadFile(g.config_path), "service");
  if (!a.data_dir.empty()) cfg["data_dir"] = a.data_dir;
  if (!a.corpus.empty()) cfg["corpus"] = a.corpus;
  if (a.port >= 0) cfg["port"] = a.port;
  if (!cfg.contains("seed")) cfg["seed"] = g.seed;
  cxrbench::service::ServiceConfig config;
  try {
    config = cxrbench::service::ServiceConfig::FromJson(cfg);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  auto in = OpenInput(config.corpus_path, "corpus");
  auto corpus = std::make_shared<const cxrbench::service::Corpus>(
      cxrbench::service::ReadCorpus(in));
  cxrbench::service::Service service(config, corpus);
  cxrbench::service::HttpServer server(service, config);
  g_server = &server;
  std::signal(SIGINT, HandleStop);
  std::signal(SIGTERM, HandleStop);
  const bool ok = server.Listen([&](int port) {
    std::cout << "listening on " << config.host << ":" << port << std::endl;
  });
  g_server = nullptr;
  if (!ok) {
    std::cerr << "cannot bind " << config.host << ":" << config.port << "\n";
    return kExitRuntime;
  }
  service.WriteSnapshot();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluation and reward engine for grounded radiology-report generation"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--config", g.config_path, "JSON configuration file");
  app.add_option("--out", g.out, "Output file or directory");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Report and VQA metric tables");
  score_cmd->add_option("--dataset", score.dataset, "Dataset JSONL")->required();
  score_cmd->add_option("--predictions", score.predictions, "Predictions JSONL")->required();
  score_cmd->add_option("--labels", score.labels, "Observation label JSONL");
  score_cmd->add_option("--radgraph", score.radgraph, "Precomputed F1-RadGraph JSONL");
  score_cmd->add_flag("--corpus-bleu", score.corpus_bleu, "Corpus-level BLEU");
  score_cmd->add_option("--format", score.format, "text or csv")
      ->check(CLI::IsMember({"text", "csv"}));

  RewardArgs reward;
  auto* reward_cmd = app.add_subcommand("reward", "Reward breakdown table");
  reward_cmd->add_option("--fixtures", reward.fixtures, "Reward fixtures JSONL");
  reward_cmd->add_option("--responses", reward.responses, "Responses JSONL {id, response}");
  reward_cmd->add_option("--dataset", reward.dataset, "Dataset JSONL for --responses");
  reward_cmd->add_option("--lambda", reward.lambda, "Format-reward weight override");
  reward_cmd->add_flag("--check", reward.check, "Compare with expected breakdowns");

  ArenaArgs arena;
  auto* arena_cmd = app.add_subcommand("arena", "Pairwise ranking arena");
  arena_cmd->add_option("mode", arena.mode, "simulate or llm")
      ->required()
      ->check(CLI::IsMember({"simulate", "llm"}));
  arena_cmd->add_option("--battles", arena.battles, "Battle budget")->capture_default_str();
  arena_cmd->add_option("--num-models", arena.num_models, "Simulated models")
      ->capture_default_str();
  arena_cmd->add_option("--gap", arena.gap, "Latent gap between simulated models")
      ->capture_default_str();
  arena_cmd->add_option("--num-samples", arena.num_samples, "Simulated evaluation samples")
      ->capture_default_str();
  arena_cmd->add_option("--corpus", arena.corpus, "Corpus JSONL with model responses");

  int iterations = -1;
  auto* grpo_cmd = app.add_subcommand("grpo-demo", "Toy GRPO training run");
  grpo_cmd->add_option("--iterations", iterations, "Override the iteration count");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Annotation and voting HTTP service");
  serve_cmd->add_option("--data-dir", serve.data_dir, "Event log directory");
  serve_cmd->add_option("--corpus", serve.corpus, "Annotation corpus JSONL");
  serve_cmd->add_option("--port", serve.port, "Port (0 picks a free one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*score_cmd) return RunScore(g, score);
    if (*reward_cmd) return RunReward(g, reward);
    if (*arena_cmd) return RunArenaCommand(g, arena);
    if (*grpo_cmd) return RunGrpoDemo(g, iterations);
    if (*serve_cmd) return RunServe(g, serve);
  } catch (const cxrbench::eval::SchemaMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const cxrbench::config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitInput;
  } catch (const cxrbench::arena::CredentialError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const cxrbench::ContractViolation& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "invalid JSON: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
