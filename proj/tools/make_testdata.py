#!/usr/bin/env python3
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
"""Regenerates the synthetic fixtures under testdata/ (deterministic)."""

import argparse
import json
import pathlib
import random

FINDINGS = [
    ("small left pleural effusion", [10]),
    ("mild cardiomegaly", [2]),
    ("right lower lobe consolidation", [6, 7]),
    ("bibasilar atelectasis", [8]),
    ("mild pulmonary edema", [5]),
    ("no acute cardiopulmonary process", [0]),
    ("right apical pneumothorax", [9]),
    ("left upper lobe opacity", [3]),
]
MODELS = ["cxr-r1", "baseline-a", "baseline-b", "baseline-c"]


def box(rng, w=512, h=512, outside=False):
  x1, y1 = rng.randint(0, w // 2), rng.randint(0, h // 2)
  x2, y2 = rng.randint(x1 + 10, w), rng.randint(y1 + 10, h)
  if outside:
    x2 = w + rng.randint(1, 80)
  return f"[{x1}, {y1}, {x2}, {y2}]"


def response(rng, gold, quality):
  steps = []
  n = rng.randint(1, 4)
  for k in range(n):
    if rng.random() < quality:
      steps.append(f"Region {box(rng)} suggests {gold}.")
    else:
      steps.append(f"Step {k + 1} notes {rng.choice(FINDINGS)[0]}.")
  answer = gold if rng.random() < quality else rng.choice(FINDINGS)[0]
  return "<think>" + " ".join(steps) + "</think> \\boxed{" + answer + "}"


def corpus(rng, out):
  with open(out, "w") as f:
    f.write(json.dumps({"schema_version": 1, "models": MODELS,
                        "annotation_models": MODELS[:2]}) + "\n")
    for i in range(210):
      gold = rng.choice(FINDINGS)[0]
      quality = {m: q for m, q in zip(MODELS, (0.8, 0.6, 0.5, 0.3))}
      item = {
          "id": f"s{i + 1:03d}",
          "image_ref": f"images/s{i + 1:03d}.png",
          "instruction": "Describe the key finding and ground it in the image.",
          "gold": gold,
          "responses": {m: response(rng, gold, quality[m]) for m in MODELS},
      }
      f.write(json.dumps(item) + "\n")


def score_fixture(rng, outdir):
  samples, preds, labels, radgraph = [], [], [], []
  report_splits = ["mimic_findings", "mimic_impression", "openi_findings",
                   "openi_impression"]
  idx = 0
  for split in report_splits:
    for _ in range(4):
      idx += 1
      text, flags = rng.choice(FINDINGS)
      gold = f"There is {text}. Heart size is stable."
      gold_labels = [int(c in flags) for c in range(14)]
      sid = f"r{idx:02d}"
      samples.append({"id": sid, "split": split, "task": "open_text",
                      "instruction": "Write the report.",
                      "image_ref": f"images/{sid}.png", "image_width": 512,
                      "image_height": 512, "gold": gold})
      labels.append({"id": sid, "source": "gold", "labels": gold_labels})
      for model, keep in (("model-a", 0.8), ("model-b", 0.4)):
        if rng.random() < keep:
          pred, pflags = f"There is {text}. Heart size is normal.", flags
        else:
          other, pflags = rng.choice(FINDINGS)
          pred = f"Findings suggest {other}."
        preds.append({"id": sid, "model": model, "prediction": pred})
        labels.append({"id": sid, "source": model,
                       "labels": [int(c in pflags) for c in range(14)]})
  for split, task in (("ext_vqa", "closed_ended"), ("cxr_vqa", "multi_object")):
    for k in range(2):
      idx += 1
      sid = f"v{idx:02d}"
      gold = ["yes", "no"][k] if task == "closed_ended" else ["edema", "effusion"]
      samples.append({"id": sid, "split": split, "task": task,
                      "instruction": "Answer the question.",
                      "image_ref": f"images/{sid}.png", "image_width": 512,
                      "image_height": 512, "gold": gold,
                      "question_type": "presence" if k == 0 else "abnormality"})
      answers = {"model-a": "yes" if task == "closed_ended" else "edema, effusion",
                 "model-b": "no" if task == "closed_ended" else "effusion"}
      for model, ans in answers.items():
        preds.append({"id": sid, "model": model, "prediction": ans})
  for split in report_splits:
    radgraph.append({"model": "model-a", "split": split,
                     "f1_radgraph": round(rng.uniform(0.2, 0.4), 4)})
    radgraph.append({"model": "model-b", "split": split,
                     "f1_radgraph": round(rng.uniform(0.1, 0.3), 4)})

  def dump(name, rows, header=None):
    with open(outdir / name, "w") as f:
      if header is not None:
        f.write(json.dumps(header) + "\n")
      for r in rows:
        f.write(json.dumps(r) + "\n")

  dump("dataset.jsonl", samples, {"schema_version": 1})
  dump("predictions.jsonl", preds)
  dump("labels.jsonl", labels)
  dump("radgraph.jsonl", radgraph)
  identity = [{"id": s["id"], "model": "oracle",
               "prediction": s["gold"] if isinstance(s["gold"], str)
               else ", ".join(s["gold"])} for s in samples]
  dump("identity_predictions.jsonl", identity)


def main():
  parser = argparse.ArgumentParser(description=__doc__)
  parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve()
                                           .parent.parent / "testdata"))
  parser.add_argument("--seed", type=int, default=2026)
  args = parser.parse_args()
  out = pathlib.Path(args.out)
  (out / "score").mkdir(parents=True, exist_ok=True)
  corpus(random.Random(args.seed), out / "annotation_corpus.jsonl")
  score_fixture(random.Random(args.seed + 1), out / "score")


if __name__ == "__main__":
  main()
