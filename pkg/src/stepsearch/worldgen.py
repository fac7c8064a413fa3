"""Deterministic synthetic scripted-world generation.

Worlds produced here follow the scripted-world JSON schema: a weighted tree
whose nodes carry step text, a per-step reward, and a checkpoint answer, with
terminal leaves holding the natural final answer inside their step text.
Used to build test fixtures and runnable demos without any model server.
"""
from __future__ import annotations

import random

from .core import DEFAULT_INJECTION_TEMPLATE

_WORDS = (
    "combine", "carry", "total", "split", "expand", "reduce", "check",
    "substitute", "compare", "align", "scale", "simplify",
)


def _step_text(depth: int, tag: int, rng: random.Random, delimiter: str = "### Step") -> str:
    verb = rng.choice(_WORDS)
    noun = rng.choice(_WORDS)
    return f"{delimiter} {depth}: {verb} the {noun} terms (v{tag})."


def _leaf_text(depth: int, tag: int, answer: str, rng: random.Random,
               delimiter: str = "### Step",
               template: str = DEFAULT_INJECTION_TEMPLATE) -> str:
    verb = rng.choice(_WORDS)
    return f"{delimiter} {depth}: {verb} and finish (v{tag}). {template}{answer}."


def make_chain_world(
    answers: list[str],
    rewards: list[float],
    gold: str,
    final_answer: str | None = None,
    checkpoint_rewards: list[float | None] | None = None,
) -> dict:
    """Single chain: one node per step, leaf carries the natural answer.

    answers[i] is the checkpoint answer at step i+1; rewards[i] its step
    reward.  The leaf reuses the last entries.
    """
    if len(answers) != len(rewards) or not answers:
        raise ValueError("answers and rewards must be equal-length and non-empty")
    final = final_answer if final_answer is not None else answers[-1]
    ckpt = checkpoint_rewards or [None] * len(answers)
    rng = random.Random(0)
    node: dict = {
        "step": _leaf_text(len(answers), 0, final, rng),
        "weight": 1,
        "reward": rewards[-1],
        "checkpoint_answer": answers[-1],
        "terminal": True,
        "final_answer": final,
    }
    if ckpt[-1] is not None:
        node["checkpoint_reward"] = ckpt[-1]
    for i in range(len(answers) - 2, -1, -1):
        parent: dict = {
            "step": _step_text(i + 1, 0, rng),
            "weight": 1,
            "reward": rewards[i],
            "checkpoint_answer": answers[i],
            "terminal": False,
            "children": [node],
        }
        if ckpt[i] is not None:
            parent["checkpoint_reward"] = ckpt[i]
        node = parent
    return {
        "gold_answer": gold,
        "root": {
            "step": "",
            "weight": 1,
            "reward": 1.0,
            "checkpoint_answer": "",
            "terminal": False,
            "children": [node],
        },
    }


def make_single_cluster_world(
    seed: int = 0, depth: int = 3, branching: int = 3, answer: str = "42"
) -> dict:
    """Every node answers the same checkpoint answer, so clustering always
    yields exactly one cluster.  Rewards are distinct to keep ordering
    tie-free."""
    rng = random.Random(seed)
    counter = [0]

    def build(level: int) -> dict:
        counter[0] += 1
        tag = counter[0]
        reward = round(0.05 + 0.9 * rng.random(), 6)
        if level == depth:
            return {
                "step": _leaf_text(level, tag, answer, rng),
                "weight": rng.choice([1, 2, 3]),
                "reward": reward,
                "checkpoint_answer": answer,
                "terminal": True,
                "final_answer": answer,
            }
        return {
            "step": _step_text(level, tag, rng),
            "weight": rng.choice([1, 2, 3]),
            "reward": reward,
            "checkpoint_answer": answer,
            "terminal": False,
            "children": [build(level + 1) for _ in range(branching)],
        }

    return {
        "gold_answer": answer,
        "root": {
            "step": "",
            "weight": 1,
            "reward": 1.0,
            "checkpoint_answer": answer,
            "terminal": False,
            "children": [build(1) for _ in range(branching)],
        },
    }


def make_random_world(
    seed: int,
    depth: int = 4,
    branching: int = 2,
    gold: str = "27",
    decoys: tuple[str, ...] = ("9", "14", "x+1"),
    ramp_checkpoint_rewards: bool = False,
) -> dict:
    """Branching world with mixed right/wrong checkpoint answers.

    With ramp_checkpoint_rewards, endpoint scores grow with depth, which makes
    early-stopping thresholds bite at different depths.
    """
    rng = random.Random(seed)
    answers = (gold,) + decoys
    counter = [0]

    def pick_answer(level: int) -> str:
        # Deeper steps are likelier to have settled on the gold answer.
        if rng.random() < 0.35 + 0.1 * level:
            return gold
        return rng.choice(answers)

    def build(level: int) -> dict:
        counter[0] += 1
        tag = counter[0]
        reward = round(0.1 + 0.8 * rng.random(), 6)
        terminal = level >= depth or (level > 1 and rng.random() < 0.15)
        if terminal:
            final = gold if rng.random() < 0.6 else rng.choice(decoys)
            return {
                "step": _leaf_text(level, tag, final, rng),
                "weight": rng.choice([1, 2, 3]),
                "reward": reward,
                "checkpoint_answer": final,
                "terminal": True,
                "final_answer": final,
            }
        node = {
            "step": _step_text(level, tag, rng),
            "weight": rng.choice([1, 2, 3]),
            "reward": reward,
            "checkpoint_answer": pick_answer(level),
            "terminal": False,
            "children": [build(level + 1) for _ in range(branching)],
        }
        if ramp_checkpoint_rewards:
            base = 0.35 + 0.6 * level / depth
            node["checkpoint_reward"] = round(min(1.0, base + 0.05 * rng.random()), 6)
        return node

    return {
        "gold_answer": gold,
        "root": {
            "step": "",
            "weight": 1,
            "reward": 1.0,
            "checkpoint_answer": "",
            "terminal": False,
            "children": [build(1) for _ in range(branching)],
        },
    }


def make_suite(
    count: int = 20, seed: int = 11, depth: int = 6, branching: int = 2
) -> list[tuple[dict, dict]]:
    """(question, world) pairs with depth-ramped endpoint scores, suitable for
    early-stopping sweeps.  Question texts are distinct prompts."""
    out = []
    for i in range(count):
        gold = str(10 + 3 * i)
        world = make_random_world(
            seed=derive(seed, i),
            depth=depth,
            branching=branching,
            gold=gold,
            ramp_checkpoint_rewards=True,
        )
        question = {
            "id": f"q{i:03d}",
            "question": f"Problem {i}: reduce the expression and report the value.\n",
            "answer": gold,
        }
        out.append((question, world))
    return out


def derive(seed: int, index: int) -> int:
    return (seed * 1_000_003 + index * 7919) % (2**31)
