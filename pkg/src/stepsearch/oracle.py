"""Brute-force reference implementations used to cross-check the engine.

Nothing here shares logic with the strategies module: the clustered
selection reference below is a direct, loop-by-loop transcription of the
selection procedure, kept deliberately naive.
"""
from __future__ import annotations

from dataclasses import dataclass

from .backends import ScriptedNode, ScriptedWorld
from .core import Candidate, answers_equal


@dataclass(frozen=True)
class EnumeratedPath:
    text: str
    probability: float
    rewards: tuple[float, ...]
    leaf_answer: str


def enumerate_all_paths(world: ScriptedWorld) -> list[EnumeratedPath]:
    """Every root-to-leaf path with its exact sampling probability.

    Branch probabilities are the normalized sibling weights, so the
    probabilities over all paths sum to 1.
    """
    out: list[EnumeratedPath] = []
    seen: set[int] = set()

    def walk(node: ScriptedNode, prob: float, text: str, rewards: tuple[float, ...]):
        if id(node) in seen:
            raise ValueError("scripted world contains a cycle")
        seen.add(id(node))
        if node.terminal:
            out.append(EnumeratedPath(text, prob, rewards, node.final_answer or ""))
            seen.discard(id(node))
            return
        total = sum(child.weight for child in node.children)
        for child in node.children:
            walk(
                child,
                prob * (child.weight / total),
                text + child.step,
                rewards + (child.reward,),
            )
        seen.discard(id(node))

    walk(world.root, 1.0, world.root.step, ())
    return out


def reference_acs_select(answers: list[str], scores: list[float], m: int) -> list[int]:
    """Literal transcription of answer-clustered round-robin selection.

    Groups indices whose answers compare equal, sums member scores per
    cluster, orders clusters by that sum (ties: best single member, then
    first-seen index), then cycles through clusters taking each one's best
    remaining member until m paths are picked, skipping emptied clusters.
    """
    if len(answers) != len(scores):
        raise ValueError("answers and scores must be the same length")
    if m < 1 or m > len(answers):
        raise ValueError("m out of range")
    cluster_members: list[list[int]] = []
    for j in range(len(answers)):
        placed = False
        for members in cluster_members:
            if answers_equal(answers[members[0]], answers[j]):
                members.append(j)
                placed = True
                break
        if not placed:
            cluster_members.append([j])

    def cluster_sum(members: list[int]) -> float:
        total = 0.0
        for j in members:
            total = total + scores[j]
        return total

    def cluster_best(members: list[int]) -> float:
        best = scores[members[0]]
        for j in members:
            if scores[j] > best:
                best = scores[j]
        return best

    ordered = list(cluster_members)
    # Selection sort keeps the comparison rules explicit.
    for i in range(len(ordered)):
        top = i
        for j in range(i + 1, len(ordered)):
            a, b = ordered[j], ordered[top]
            if cluster_sum(a) > cluster_sum(b):
                top = j
            elif cluster_sum(a) == cluster_sum(b):
                if cluster_best(a) > cluster_best(b):
                    top = j
                elif cluster_best(a) == cluster_best(b) and min(a) < min(b):
                    top = j
        ordered[i], ordered[top] = ordered[top], ordered[i]

    pools = [list(members) for members in ordered]
    picked: list[int] = []
    while len(picked) < m:
        for members in pools:
            if not members:
                continue
            best = members[0]
            for j in members:
                if scores[j] > scores[best] or (scores[j] == scores[best] and j < best):
                    best = j
            picked.append(best)
            members.remove(best)
            if len(picked) == m:
                break
    return picked


def pass_at_k(pool: list[Candidate], gold_answer: str, k: int) -> bool:
    """True when any of the first k pool candidates matches the gold answer."""
    if k < 1 or k > len(pool):
        raise ValueError(f"k must be in [1, {len(pool)}], got {k}")
    return any(answers_equal(c.answer, gold_answer) for c in pool[:k])
