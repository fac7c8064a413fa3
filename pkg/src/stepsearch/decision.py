"""Final-answer selection over a candidate pool.

Selectors implement three standard rules: best-of-n (argmax score),
weighted best-of-n (answer clusters ranked by summed score), and majority
vote.  All are deterministic: ties break toward natural candidates, then
earlier lineage.
"""
from __future__ import annotations

from dataclasses import dataclass

from .core import Candidate, normalize_answer


@dataclass(frozen=True)
class Selection:
    answer: str
    winner: Candidate
    method: str
    from_checkpoint: bool


def _require_scored(pool: list[Candidate]) -> None:
    if not pool:
        raise ValueError("cannot select from an empty candidate pool")
    for i, c in enumerate(pool):
        if c.final_score is None:
            raise ValueError(f"candidate {i} is unscored")


def assemble_pool(
    natural: list[Candidate], checkpoint: list[Candidate], cca_enabled: bool
) -> list[Candidate]:
    """Final pool: naturals plus checkpoint candidates when CCA is on,
    naturals only otherwise."""
    if not natural and not checkpoint:
        raise ValueError(
            "both candidate lists are empty; runs must force-complete surviving "
            "paths so the pool is never empty"
        )
    for name, group in (("natural", natural), ("checkpoint", checkpoint)):
        for c in group:
            if c.final_score is None:
                raise ValueError(f"unscored {name} candidate in pool assembly")
    if cca_enabled:
        return list(natural) + list(checkpoint)
    return list(natural)


def select_bon(pool: list[Candidate]) -> Selection:
    """Argmax of final_score; ties prefer natural endings, then lineage order."""
    _require_scored(pool)
    winner = min(pool, key=lambda c: (-c.final_score, c.order_key()))
    return Selection(winner.answer, winner, "bon", winner.from_checkpoint)


def _answer_groups(pool: list[Candidate]) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    for i, c in enumerate(pool):
        groups.setdefault(normalize_answer(c.answer), []).append(i)
    return groups


def select_weighted_bon(pool: list[Candidate]) -> Selection:
    """Rank answers by summed candidate score; the winner is the top-scoring
    member of the winning answer group."""
    _require_scored(pool)
    groups = _answer_groups(pool)
    ranked = sorted(
        groups.items(),
        key=lambda kv: (
            -sum(pool[i].final_score for i in kv[1]),
            -max(pool[i].final_score for i in kv[1]),
            min(kv[1]),
        ),
    )
    answer, members = ranked[0]
    winner = pool[min(members, key=lambda i: (-pool[i].final_score, i))]
    return Selection(answer, winner, "weighted_bon", winner.from_checkpoint)


def select_majority(pool: list[Candidate]) -> Selection:
    """Modal answer; ties go to the answer holding the earliest candidate.

    Scores are ignored for ranking answers, so unscored pools are accepted;
    the representative candidate is the best-scored member when scores exist,
    else the earliest member.
    """
    if not pool:
        raise ValueError("cannot select from an empty candidate pool")
    groups = _answer_groups(pool)
    ranked = sorted(
        groups.items(),
        key=lambda kv: (
            -len(kv[1]),
            min(pool[i].order_key() for i in kv[1]),
        ),
    )
    answer, members = ranked[0]
    winner = pool[
        min(
            members,
            key=lambda i: (
                -(pool[i].final_score if pool[i].final_score is not None else float("-inf")),
                pool[i].order_key(),
            ),
        )
    ]
    return Selection(answer, winner, "majority", winner.from_checkpoint)
