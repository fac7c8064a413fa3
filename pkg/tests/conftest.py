"""Shared fixtures: fixture paths, scripted backends, acceptance summary."""
from __future__ import annotations

import json
import os

import pytest
from hypothesis import settings

from stepsearch import Question, ScriptedBackend, parse_world

settings.register_profile("repo", deadline=None, max_examples=60)
settings.load_profile("repo")

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


def load_world_fixture(name: str):
    """Load a {id, question, answer, world} fixture into (Question, world)."""
    with open(fixture_path(name), encoding="utf-8") as fh:
        data = json.load(fh)
    question = Question(data["id"], data["question"], data["answer"])
    return question, parse_world(data["world"])


@pytest.fixture(scope="session")
def deceptive():
    question, world = load_world_fixture("deceptive.json")
    return question, ScriptedBackend.for_question(question.text, world)


@pytest.fixture(scope="session")
def single_cluster():
    question, world = load_world_fixture("single_cluster.json")
    return question, ScriptedBackend.for_question(question.text, world)


@pytest.fixture(scope="session")
def smoke_suite():
    """The 20-question dataset with one backend over all of its worlds."""
    from stepsearch import load_dataset

    dataset = load_dataset(fixture_path("smoke.jsonl"))
    with open(fixture_path("smoke_worlds.json"), encoding="utf-8") as fh:
        specs = json.load(fh)["worlds"]
    by_text = {
        q.text: parse_world(specs[q.id]) for q in dataset.questions
    }
    return dataset, ScriptedBackend(by_text)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One visible pass/fail line per acceptance criterion."""
    passed = terminalreporter.stats.get("passed", [])
    failed = terminalreporter.stats.get("failed", [])
    rows = []
    for report, status in [(r, "PASS") for r in passed] + [(r, "FAIL") for r in failed]:
        if "test_acceptance" in report.nodeid:
            rows.append((report.nodeid.split("::")[-1], status))
    if rows:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status in sorted(rows):
            terminalreporter.write_line(f"{status}: {name}")
