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

"""Evaluation and reward engine for grounded radiology-report generation."""

from cxrbench._core import (
    ContractViolation,
    bleu,
    fit_bradley_terry,
    group_advantages,
    kl_estimate,
    meteor,
    parse_response,
    rouge_l,
    set_f1,
    spearman,
    tokenize,
    total_reward,
)

__all__ = [
    "ContractViolation",
    "bleu",
    "fit_bradley_terry",
    "group_advantages",
    "kl_estimate",
    "meteor",
    "parse_response",
    "rouge_l",
    "set_f1",
    "spearman",
    "tokenize",
    "total_reward",
]
