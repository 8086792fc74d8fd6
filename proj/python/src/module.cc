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

// Python bindings for the metric, parser, reward, GRPO and arena cores.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <tuple>
#include <vector>

#include "cxrbench/arena.h"
#include "cxrbench/contract.h"
#include "cxrbench/grpo.h"
#include "cxrbench/response_parser.h"
#include "cxrbench/reward.h"
#include "cxrbench/textmetrics.h"

namespace py = pybind11;

namespace cxrbench {
namespace {

py::dict ParsedToDict(const parse::ParsedResponse& p) {
  py::list boxes;
  for (const auto& b : p.boxes) boxes.append(py::make_tuple(b.x1, b.y1, b.x2, b.y2));
  py::dict d;
  d["think_segments"] = p.think_segments;
  d["boxed_answer"] = p.boxed_answer ? py::cast(*p.boxed_answer) : py::none();
  d["boxes"] = boxes;
  d["format_ok"] = p.format_ok;
  return d;
}

reward::Gold ToGold(const py::object& gold) {
  if (py::isinstance<py::str>(gold)) return gold.cast<std::string>();
  std::set<std::string> s;
  for (const auto& item : gold) s.insert(item.cast<std::string>());
  return s;
}

py::dict TotalReward(const std::string& response, const py::object& gold,
                     const std::string& task, int width, int height, double lambda,
                     const std::string& coordinate_mode) {
  reward::RewardConfig config;
  config.lambda = lambda;
  config.Validate();
  if (coordinate_mode == "capped") {
    config.coordinate_mode = reward::CoordinateMode::kCapped;
  } else if (coordinate_mode != "literal") {
    throw ContractViolation("coordinate_mode must be 'literal' or 'capped'");
  }
  const auto b = reward::TotalReward(parse::ParseResponse(response), ToGold(gold),
                                     reward::ParseTaskType(task),
                                     parse::ImageDims(width, height), config);
  py::dict d;
  d["r_ans"] = b.r_ans;
  d["r_coo"] = b.r_coo;
  d["r_fom"] = b.r_fom;
  d["total"] = b.total;
  return d;
}

std::vector<double> FitBradleyTerry(
    const std::vector<std::tuple<int, int, int, double>>& battles, int num_models,
    double ridge) {
  std::vector<arena::Battle> log;
  for (const auto& [m1, m2, outcome, propensity] : battles) {
    arena::Battle b;
    b.m1 = m1;
    b.m2 = m2;
    b.outcome = outcome;
    b.propensity = propensity;
    log.push_back(b);
  }
  arena::BtOptions options;
  options.ridge = ridge;
  const auto xi = arena::FitBradleyTerry(log, num_models, options);
  return {xi.data(), xi.data() + xi.size()};
}

}  // namespace
}  // namespace cxrbench

PYBIND11_MODULE(_core, m) {
  using namespace cxrbench;
  m.doc() = "Metrics, response parsing, rewards, GRPO math and Bradley-Terry fitting";
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);

  m.def("tokenize", [](const std::string& s) { return text::Tokenize(s); }, py::arg("text"));
  m.def(
      "bleu",
      [](const std::string& c, const std::string& r, int n, bool smooth) {
        return text::BleuN(text::Tokenize(c), text::Tokenize(r), n, smooth).value;
      },
      py::arg("candidate"), py::arg("reference"), py::arg("n") = 4,
      py::arg("smooth") = false);
  m.def(
      "rouge_l",
      [](const std::string& c, const std::string& r, double beta) {
        return text::RougeL(text::Tokenize(c), text::Tokenize(r), {.beta = beta}).value;
      },
      py::arg("candidate"), py::arg("reference"), py::arg("beta") = 1.2);
  m.def(
      "meteor",
      [](const std::string& c, const std::string& r) {
        return text::MeteorSimple(text::Tokenize(c), text::Tokenize(r)).value;
      },
      py::arg("candidate"), py::arg("reference"));
  m.def(
      "set_f1",
      [](const std::set<std::string>& p, const std::set<std::string>& g) {
        return text::SetF1(p, g).value;
      },
      py::arg("predicted"), py::arg("gold"));

  m.def("parse_response", [](const std::string& raw) {
    return ParsedToDict(parse::ParseResponse(raw));
  }, py::arg("raw"));
  m.def("total_reward", &TotalReward, py::arg("response"), py::arg("gold"),
        py::arg("task") = "closed_ended", py::arg("width") = 512, py::arg("height") = 512,
        py::arg("lam") = 0.1, py::arg("coordinate_mode") = "literal");

  m.def(
      "group_advantages",
      [](const std::vector<double>& r) { return grpo::GroupAdvantages(r); },
      py::arg("rewards"));
  m.def(
      "kl_estimate",
      [](double logp_ref, double logp_new) { return grpo::KlEstimate(logp_ref, logp_new); },
      py::arg("logp_ref"), py::arg("logp_new"));

  m.def("fit_bradley_terry", &FitBradleyTerry,
        "Battles are (m1, m2, outcome, propensity); outcome 1 means m1 won.",
        py::arg("battles"), py::arg("num_models"), py::arg("ridge") = 1e-4);
  m.def(
      "spearman",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return arena::SpearmanCorrelation(a, b);
      },
      py::arg("a"), py::arg("b"));
}
