#!/usr/bin/env python3
"""Regenerate the derived fixtures and sanity-check the hand-written ones.

Derived (overwritten deterministically):
  fixtures/single_cluster.json   one-answer world for degeneracy checks
  fixtures/smoke.jsonl           20-question dataset
  fixtures/smoke_worlds.json     matching scripted worlds, ramped endpoint scores

Hand-written (validated only, never overwritten):
  fixtures/deceptive.json
  fixtures/answer_literals.json
  fixtures/golden_checkpoint_request.json
"""
from __future__ import annotations

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from stepsearch import parse_world  # noqa: E402
from stepsearch.oracle import enumerate_all_paths  # noqa: E402
from stepsearch.worldgen import make_single_cluster_world, make_suite  # noqa: E402

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")


def dump(path: str, data: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {os.path.relpath(path)}")


def build_single_cluster() -> None:
    world = make_single_cluster_world(seed=0, depth=3, branching=3, answer="42")
    parse_world(world)  # must validate
    dump(
        os.path.join(FIXTURES, "single_cluster.json"),
        {
            "id": "single-cluster",
            "question": "Every route agrees; find the value.\n",
            "answer": "42",
            "world": world,
        },
    )


def build_smoke_suite() -> None:
    pairs = make_suite(count=20, seed=11, depth=6, branching=2)
    dataset_path = os.path.join(FIXTURES, "smoke.jsonl")
    with open(dataset_path, "w", encoding="utf-8") as fh:
        for question, _ in pairs:
            fh.write(json.dumps(question, sort_keys=True) + "\n")
    print(f"wrote {os.path.relpath(dataset_path)}")
    worlds = {}
    for question, world in pairs:
        parse_world(world)
        worlds[question["id"]] = world
    dump(os.path.join(FIXTURES, "smoke_worlds.json"), {"worlds": worlds})


def check_handwritten() -> None:
    with open(os.path.join(FIXTURES, "deceptive.json"), encoding="utf-8") as fh:
        data = json.load(fh)
    world = parse_world(data["world"])
    paths = enumerate_all_paths(world)
    total = sum(p.probability for p in paths)
    assert abs(total - 1.0) < 1e-12, f"deceptive path probabilities sum to {total}"
    answers = sorted(p.leaf_answer for p in paths)
    assert answers == ["27", "9"], f"unexpected leaf answers {answers}"
    print("deceptive.json validated")

    with open(os.path.join(FIXTURES, "answer_literals.json"), encoding="utf-8") as fh:
        literals = json.load(fh)
    assert len(literals["cases"]) >= 200, "need at least 200 literal cases"
    print(f"answer_literals.json validated ({len(literals['cases'])} cases)")

    with open(
        os.path.join(FIXTURES, "golden_checkpoint_request.json"), encoding="utf-8"
    ) as fh:
        golden = json.load(fh)
    assert set(golden) == {"checkpoint", "step"}
    print("golden_checkpoint_request.json validated")


def main() -> None:
    os.makedirs(FIXTURES, exist_ok=True)
    build_single_cluster()
    build_smoke_suite()
    check_handwritten()


if __name__ == "__main__":
    main()
