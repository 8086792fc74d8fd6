# Copyright 2026 The CXRBench Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Smoke tests for the Python bindings."""

import json
import math
import os

import pytest

import cxrbench

TESTDATA = os.environ.get(
    "CXRBENCH_TESTDATA",
    os.path.join(os.path.dirname(__file__), "..", "..", "testdata"))


def test_metric_worked_examples():
    assert cxrbench.bleu("the cat sat", "the cat sat down", n=1) == pytest.approx(
        math.exp(1 - 4 / 3), abs=1e-15)
    assert cxrbench.rouge_l("a b c", "a c d") == pytest.approx(2 / 3, abs=1e-12)
    assert cxrbench.meteor("the cat sat", "the cat sat down") == pytest.approx(
        0.754986, abs=1e-6)
    assert cxrbench.set_f1({"a", "b"}, {"b", "c"}) == pytest.approx(0.5)
    assert cxrbench.tokenize("Heart size, normal.") == [
        "heart", "size", ",", "normal", "."]


def test_parse_response():
    parsed = cxrbench.parse_response(
        "<think>Opacity at [300, 400, 100, 200].</think> \\boxed{yes}")
    assert parsed["format_ok"]
    assert parsed["boxed_answer"] == "yes"
    assert parsed["boxes"] == [(100.0, 200.0, 300.0, 400.0)]
    assert not cxrbench.parse_response("no tags")["format_ok"]


def test_reward_matches_golden_fixtures():
    with open(os.path.join(TESTDATA, "reward_fixtures.jsonl")) as f:
        fixtures = [json.loads(line) for line in f if line.strip()]
    assert len(fixtures) == 20
    for fx in fixtures:
        got = cxrbench.total_reward(fx["raw_response"], fx["gold"], fx["task_type"],
                                    fx["image_width"], fx["image_height"])
        for key, want in fx["expected_breakdown"].items():
            assert got[key] == pytest.approx(want, abs=1e-12), (fx["id"], key)


def test_reward_rejects_bad_lambda():
    with pytest.raises(cxrbench.ContractViolation):
        cxrbench.total_reward("x", "yes", lam=1.5)
    with pytest.raises(ValueError):
        cxrbench.total_reward("x", "yes", task="essay")


def test_grpo_math():
    adv = cxrbench.group_advantages([1.0, 2.0, 3.0])
    assert adv == pytest.approx([-math.sqrt(1.5), 0.0, math.sqrt(1.5)], abs=1e-12)
    assert cxrbench.kl_estimate(math.log(2.0), 0.0) == pytest.approx(
        1 - math.log(2.0), abs=1e-12)


def test_bradley_terry_two_models():
    battles = [(0, 1, int(k % 4 != 0), 1.0) for k in range(4000)]
    xi = cxrbench.fit_bradley_terry(battles, 2, ridge=1e-8)
    assert xi[0] - xi[1] == pytest.approx(math.log(3.0), abs=1e-6)
    assert cxrbench.spearman(xi, [1.0, 0.0]) == pytest.approx(1.0)
