"""Domain types and pure text/score operations for checkpoint-guided search.

Everything in this module is backend-free and deterministic: answer
normalization, score reduction, lossless step splitting, and construction of
checkpoint-completed candidates.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

# Canonical form of an answer that is empty after normalization.  Empty
# answers compare equal to each other and never to a non-empty answer.
EMPTY_ANSWER = ""

DEFAULT_INJECTION_TEMPLATE = "So, the answer is "
DEFAULT_DELIMITERS: tuple[str, ...] = ("### Step",)

REDUCTIONS = ("last", "mean", "min", "sum", "prod")
STRATEGIES = ("greedy", "independent", "beam", "dvts", "srca")
SELECTORS = ("bon", "weighted_bon", "majority")

PATH_ACTIVE = "active"
PATH_FINISHED = "finished_natural"
PATH_PRUNED = "pruned"

ORIGIN_NATURAL = "natural"
ORIGIN_CHECKPOINT = "checkpoint"

_TERMINAL_PUNCT = ".,;:!?"
# Integer with thousands separators, optional decimal tail: "1,234" / "1,234.5"
_GROUPED_NUMBER = re.compile(r"^[+-]?\d{1,3}(?:,\d{3})+(?:\.\d+)?$")
_SLASH_SPACING = re.compile(r"\s*/\s*")


class ConfigError(ValueError):
    """Invalid configuration value; carries the offending field name."""

    def __init__(self, fld: str, message: str):
        super().__init__(f"{fld}: {message}")
        self.field = fld


def _unwrap_boxed(text: str) -> str | None:
    """Return the content of the last \\boxed{...} marker, or None.

    Uses brace balancing so nested braces inside the box survive.
    """
    idx = text.rfind("\\boxed")
    if idx < 0:
        return None
    brace = text.find("{", idx)
    if brace < 0:
        return None
    depth = 0
    for pos in range(brace, len(text)):
        if text[pos] == "{":
            depth += 1
        elif text[pos] == "}":
            depth -= 1
            if depth == 0:
                return text[brace + 1 : pos]
    return None


def _parse_rational(text: str) -> Fraction | None:
    compact = _SLASH_SPACING.sub("/", text)
    if _GROUPED_NUMBER.match(compact):
        compact = compact.replace(",", "")
    try:
        return Fraction(compact)
    except ZeroDivisionError:
        return None
    except ValueError:
        pass
    # Fraction rejects signed or non-integer denominators ("10/-4", "1.5/2");
    # split one slash and divide exactly so those still canonicalize.
    if compact.count("/") == 1:
        num_text, den_text = compact.split("/")
        try:
            return Fraction(num_text) / Fraction(den_text)
        except (ValueError, ZeroDivisionError):
            return None
    return None


def _format_rational(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def normalize_answer(raw: str) -> str:
    """Collapse an answer string to a canonical comparable form.

    Strips surrounding whitespace and terminal punctuation, unwraps a
    \\boxed{} marker, and parses rational literals so that arithmetically
    equal forms collapse ("6", "6.0", " 6 " all become "6"; "1/2" and "0.5"
    agree).  Non-numeric answers are lowercased with whitespace collapsed.
    The function is idempotent.
    """
    text = raw.strip()
    boxed = _unwrap_boxed(text)
    if boxed is not None:
        text = boxed.strip()
    while text and text[-1] in _TERMINAL_PUNCT:
        text = text[:-1].rstrip()
    if not text:
        return EMPTY_ANSWER
    value = _parse_rational(text)
    if value is not None:
        return _format_rational(value)
    return " ".join(text.lower().split())


def answers_equal(a: str, b: str) -> bool:
    """True when both answers share a canonical form."""
    return normalize_answer(a) == normalize_answer(b)


def extract_final_answer(text: str, template: str = DEFAULT_INJECTION_TEMPLATE) -> str:
    """Pull the raw answer out of a completed path text.

    Looks for the last occurrence of the answer template and returns what
    follows it (cut at the first newline).  Falls back to a \\boxed{} marker
    and finally to the last non-empty line.
    """
    idx = text.rfind(template)
    if idx >= 0:
        tail = text[idx + len(template) :]
        return tail.split("\n", 1)[0]
    boxed = _unwrap_boxed(text)
    if boxed is not None:
        return boxed
    lines = [ln for ln in text.splitlines() if ln.strip()]
    return lines[-1] if lines else ""


def reduce_scores(scores: list[float], mode: str) -> float:
    """Reduce a per-step score sequence to one path score."""
    if not scores:
        raise ValueError("cannot reduce an empty score sequence (unscored path)")
    if mode == "last":
        return scores[-1]
    if mode == "mean":
        return sum(scores) / len(scores)
    if mode == "min":
        return min(scores)
    if mode == "sum":
        return sum(scores)
    if mode == "prod":
        return math.prod(scores)
    raise ValueError(f"unknown reduction mode: {mode!r}")


def approx_token_count(text: str) -> int:
    """Whitespace word count used as a cheap token proxy for accounting."""
    return len(text.split())


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    gold_answer: str


@dataclass(frozen=True)
class Step:
    """One reasoning step; text retains its leading delimiter."""

    index: int
    text: str


def split_into_steps(text: str, delimiters: tuple[str, ...] | list[str]) -> list[Step]:
    """Split path text into steps at every delimiter occurrence.

    Lossless: concatenating the returned step texts reproduces the input
    exactly.  Text before the first delimiter becomes step 0 when non-empty;
    text without any delimiter is a single step.  Empty input yields no steps.
    """
    if not delimiters:
        raise ValueError("delimiters must be non-empty")
    if not text:
        return []
    pattern = re.compile("|".join(re.escape(d) for d in delimiters))
    boundaries = [m.start() for m in pattern.finditer(text)]
    if not boundaries:
        return [Step(0, text)]
    segments: list[str] = []
    if boundaries[0] > 0:
        segments.append(text[: boundaries[0]])
    for i, start in enumerate(boundaries):
        end = boundaries[i + 1] if i + 1 < len(boundaries) else len(text)
        segments.append(text[start:end])
    return [Step(i, seg) for i, seg in enumerate(segments)]


@dataclass(frozen=True)
class CheckpointAnswer:
    """Answer forced out of a path mid-reasoning via the injection template."""

    step_index: int
    raw_text: str
    normalized: str

    @classmethod
    def from_raw(cls, step_index: int, raw_text: str) -> "CheckpointAnswer":
        return cls(step_index, raw_text, normalize_answer(raw_text))


@dataclass
class ReasoningPath:
    """A (partial) reasoning trajectory for one question."""

    question_id: str
    steps: list[Step] = field(default_factory=list)
    score_sequence: list[float] = field(default_factory=list)
    status: str = PATH_ACTIVE
    lineage: list[tuple[int, int]] = field(default_factory=list)
    checkpoint_answers: dict[int, CheckpointAnswer] = field(default_factory=dict)

    def text(self) -> str:
        return "".join(s.text for s in self.steps)

    def lineage_key(self) -> tuple[int, ...]:
        return tuple(idx for _, idx in self.lineage)

    def reduced_score(self, mode: str) -> float:
        return reduce_scores(self.score_sequence, mode)

    def finish(self) -> None:
        if self.status != PATH_ACTIVE:
            raise ValueError(f"cannot finish a path in status {self.status!r}")
        self.status = PATH_FINISHED

    def prune(self) -> None:
        if self.status != PATH_ACTIVE:
            raise ValueError(f"cannot prune a path in status {self.status!r}")
        self.status = PATH_PRUNED

    def record_checkpoint(self, answer: CheckpointAnswer) -> None:
        if answer.step_index in self.checkpoint_answers:
            raise ValueError(
                f"checkpoint answer already recorded for step {answer.step_index}"
            )
        self.checkpoint_answers[answer.step_index] = answer


@dataclass
class Candidate:
    """A pool entry: a complete answer-bearing path, natural or checkpoint-built."""

    full_text: str
    answer: str
    origin: str  # ORIGIN_NATURAL or ORIGIN_CHECKPOINT
    origin_step: int | None = None
    final_score: float | None = None
    lineage: tuple[int, ...] = ()
    round_index: int | None = None
    question_id: str = ""
    source: ReasoningPath | None = field(default=None, repr=False, compare=False)

    @property
    def from_checkpoint(self) -> bool:
        return self.origin == ORIGIN_CHECKPOINT

    def order_key(self) -> tuple:
        """Deterministic tie-break key: natural first, then lineage order."""
        return (
            0 if self.origin == ORIGIN_NATURAL else 1,
            self.lineage,
            self.origin_step if self.origin_step is not None else -1,
        )

    def to_json_dict(self) -> dict:
        return {
            "full_text": self.full_text,
            "answer": self.answer,
            "origin": self.origin,
            "origin_step": self.origin_step,
            "final_score": self.final_score,
            "lineage": list(self.lineage),
            "round_index": self.round_index,
            "question_id": self.question_id,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Candidate":
        return cls(
            full_text=data["full_text"],
            answer=data["answer"],
            origin=data["origin"],
            origin_step=data.get("origin_step"),
            final_score=data.get("final_score"),
            lineage=tuple(data.get("lineage", ())),
            round_index=data.get("round_index"),
            question_id=data.get("question_id", ""),
        )


def build_checkpoint_candidate(
    path: ReasoningPath, template: str, answer: CheckpointAnswer
) -> Candidate:
    """Complete a path through its checkpoint answer at answer.step_index.

    The candidate text is the path prefix through that step, the injection
    template, and the raw answer, concatenated.  The score is left unset;
    callers score the candidate like any other path.
    """
    if not path.steps:
        raise ValueError("cannot build a checkpoint candidate from an empty path")
    if answer.step_index < 0 or answer.step_index >= len(path.steps):
        raise ValueError(
            f"checkpoint step {answer.step_index} out of range for a path "
            f"with {len(path.steps)} steps"
        )
    prefix = "".join(s.text for s in path.steps[: answer.step_index + 1])
    return Candidate(
        full_text=prefix + template + answer.raw_text,
        answer=answer.normalized,
        origin=ORIGIN_CHECKPOINT,
        origin_step=answer.step_index,
        lineage=path.lineage_key()[: answer.step_index + 1],
        question_id=path.question_id,
        source=path,
    )


@dataclass(frozen=True)
class Cluster:
    """Candidates sharing one normalized answer; aggregate is the exact score sum."""

    answer_key: str
    members: tuple[int, ...]
    aggregate: float


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for one search run.  n is the sampling budget per round, m the
    number of surviving paths; every survivor expands into n // m children."""

    n: int = 4
    m: int = 2
    max_steps: int = 40
    temperature: float = 0.8
    top_p: float = 0.9
    tau: float = 1.0
    reduction: str = "last"
    delimiters: tuple[str, ...] = DEFAULT_DELIMITERS
    injection_template: str = DEFAULT_INJECTION_TEMPLATE
    strategy: str = "srca"
    cca_enabled: bool = True
    seed: int = 0
    selector: str = "bon"
    max_step_tokens: int = 512

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigError("n", "must be an integer >= 1")
        if not isinstance(self.m, int) or self.m < 1:
            raise ConfigError("m", "must be an integer >= 1")
        if self.n < self.m:
            raise ConfigError("n", f"requires N >= M >= 1, got N={self.n} M={self.m}")
        if self.n % self.m != 0:
            raise ConfigError(
                "n", f"requires N mod M = 0, got N={self.n} M={self.m}"
            )
        if self.max_steps < 1:
            raise ConfigError("max_steps", "must be >= 1")
        if self.temperature < 0:
            raise ConfigError("temperature", "must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ConfigError("top_p", "must be in (0, 1]")
        if not 0 <= self.tau <= 1:
            raise ConfigError("tau", f"must be in [0, 1], got {self.tau}")
        if self.reduction not in REDUCTIONS:
            raise ConfigError(
                "reduction", f"must be one of {REDUCTIONS}, got {self.reduction!r}"
            )
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                "strategy", f"must be one of {STRATEGIES}, got {self.strategy!r}"
            )
        if self.selector not in SELECTORS:
            raise ConfigError(
                "selector", f"must be one of {SELECTORS}, got {self.selector!r}"
            )
        if not self.delimiters or any(not d for d in self.delimiters):
            raise ConfigError("delimiters", "must be a non-empty list of non-empty strings")
        if not isinstance(self.delimiters, tuple):
            object.__setattr__(self, "delimiters", tuple(self.delimiters))
        if not self.injection_template:
            raise ConfigError("injection_template", "must be non-empty")
        if self.max_step_tokens < 1:
            raise ConfigError("max_step_tokens", "must be >= 1")

    @property
    def branch_factor(self) -> int:
        return self.n // self.m

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "max_steps": self.max_steps,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "tau": self.tau,
            "reduction": self.reduction,
            "delimiters": list(self.delimiters),
            "injection_template": self.injection_template,
            "strategy": self.strategy,
            "cca_enabled": self.cca_enabled,
            "seed": self.seed,
            "selector": self.selector,
            "max_step_tokens": self.max_step_tokens,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SearchConfig":
        known = {f: data[f] for f in data}
        unknown = set(known) - {
            "n", "m", "max_steps", "temperature", "top_p", "tau", "reduction",
            "delimiters", "injection_template", "strategy", "cca_enabled",
            "seed", "selector", "max_step_tokens",
        }
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown search config key")
        if "delimiters" in known:
            known["delimiters"] = tuple(known["delimiters"])
        return cls(**known)


@dataclass
class RoundRecord:
    """Diagnostics for one expansion round."""

    step_index: int
    beams: int
    candidate_count: int
    cluster_count: int | None
    selected: list[int]
    pooled_natural: int
    pooled_checkpoint: int

    def to_json_dict(self) -> dict:
        return {
            "step_index": self.step_index,
            "beams": self.beams,
            "candidate_count": self.candidate_count,
            "cluster_count": self.cluster_count,
            "selected": list(self.selected),
            "pooled_natural": self.pooled_natural,
            "pooled_checkpoint": self.pooled_checkpoint,
        }


@dataclass
class TokenStats:
    generated_tokens: int = 0
    generator_calls: int = 0
    reward_calls: int = 0
    reward_tokens: int = 0

    def to_json_dict(self) -> dict:
        return {
            "generated_tokens": self.generated_tokens,
            "generator_calls": self.generator_calls,
            "reward_calls": self.reward_calls,
            "reward_tokens": self.reward_tokens,
        }


@dataclass
class RunResult:
    """Everything one search run produced for one question."""

    question_id: str
    strategy: str
    pool: list[Candidate]
    selected_index: int
    selection_method: str
    rounds: list[RoundRecord]
    tokens: TokenStats
    config: dict
    stopped_early: bool = False
    selected_trace: list[dict] = field(default_factory=list)

    @property
    def selected(self) -> Candidate:
        return self.pool[self.selected_index]

    @property
    def depth(self) -> int:
        return len(self.rounds)

    def transcript_dict(self) -> dict:
        """Behavioral transcript: everything except strategy/config labels.

        Two runs that made identical decisions over identical backend streams
        produce equal transcripts even when launched under different strategy
        names (used for degeneracy checks).
        """
        return {
            "question_id": self.question_id,
            "pool": [c.to_json_dict() for c in self.pool],
            "selected_index": self.selected_index,
            "rounds": [r.to_json_dict() for r in self.rounds],
            "tokens": self.tokens.to_json_dict(),
            "stopped_early": self.stopped_early,
        }

    def to_json_dict(self) -> dict:
        data = self.transcript_dict()
        data["strategy"] = self.strategy
        data["selection_method"] = self.selection_method
        data["config"] = dict(self.config)
        data["selected_trace"] = list(self.selected_trace)
        return data

    @classmethod
    def from_json_dict(cls, data: dict) -> "RunResult":
        return cls(
            question_id=data["question_id"],
            strategy=data["strategy"],
            pool=[Candidate.from_json_dict(c) for c in data["pool"]],
            selected_index=data["selected_index"],
            selection_method=data["selection_method"],
            rounds=[
                RoundRecord(
                    step_index=r["step_index"],
                    beams=r["beams"],
                    candidate_count=r["candidate_count"],
                    cluster_count=r.get("cluster_count"),
                    selected=list(r["selected"]),
                    pooled_natural=r["pooled_natural"],
                    pooled_checkpoint=r["pooled_checkpoint"],
                )
                for r in data["rounds"]
            ],
            tokens=TokenStats(**data["tokens"]),
            config=dict(data.get("config", {})),
            stopped_early=data.get("stopped_early", False),
            selected_trace=list(data.get("selected_trace", [])),
        )
