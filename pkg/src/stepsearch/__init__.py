"""Stepwise test-time search over reasoning paths.

The package samples multi-step solutions from a generator, scores steps with
a reward model, and searches the resulting tree: answer-clustered selection
with checkpoint injection, plus beam, subtree-voting, independent-sampling,
and greedy baselines.  A scripted deterministic backend makes every strategy
reproducible and testable without models.
"""
from .backends import (
    Continuation,
    GeneratorRequest,
    HttpGenerator,
    HttpReward,
    MissingEnvError,
    ProtocolError,
    RequestCache,
    ScriptedBackend,
    ScriptedWorld,
    TransportError,
    WorldError,
    derive_seed,
    load_scripted_world,
    parse_world,
)
from .core import (
    ORIGIN_CHECKPOINT,
    ORIGIN_NATURAL,
    Candidate,
    CheckpointAnswer,
    Cluster,
    ConfigError,
    Question,
    ReasoningPath,
    RoundRecord,
    RunResult,
    SearchConfig,
    Step,
    TokenStats,
    answers_equal,
    extract_final_answer,
    normalize_answer,
    reduce_scores,
    split_into_steps,
)
from .decision import (
    Selection,
    assemble_pool,
    select_bon,
    select_majority,
    select_weighted_bon,
)
from .harness import (
    BenchmarkCell,
    Dataset,
    Report,
    build_cells,
    compute_metrics,
    config_hash,
    emit_report,
    load_dataset,
    parse_method_label,
    run_benchmark,
    write_report,
)
from .oracle import enumerate_all_paths, pass_at_k, reference_acs_select
from .strategies import (
    cluster_by_answer,
    round_robin_select,
    run_beam_search,
    run_dvts,
    run_greedy,
    run_independent,
    run_search,
    run_srca,
)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkCell",
    "Candidate",
    "CheckpointAnswer",
    "Cluster",
    "ConfigError",
    "Continuation",
    "Dataset",
    "GeneratorRequest",
    "HttpGenerator",
    "HttpReward",
    "MissingEnvError",
    "ORIGIN_CHECKPOINT",
    "ORIGIN_NATURAL",
    "ProtocolError",
    "Question",
    "ReasoningPath",
    "Report",
    "RequestCache",
    "RoundRecord",
    "RunResult",
    "ScriptedBackend",
    "ScriptedWorld",
    "SearchConfig",
    "Selection",
    "Step",
    "TokenStats",
    "TransportError",
    "WorldError",
    "answers_equal",
    "assemble_pool",
    "build_cells",
    "cluster_by_answer",
    "compute_metrics",
    "config_hash",
    "derive_seed",
    "emit_report",
    "enumerate_all_paths",
    "extract_final_answer",
    "load_dataset",
    "load_scripted_world",
    "normalize_answer",
    "parse_method_label",
    "parse_world",
    "pass_at_k",
    "reduce_scores",
    "reference_acs_select",
    "round_robin_select",
    "run_beam_search",
    "run_benchmark",
    "run_dvts",
    "run_greedy",
    "run_independent",
    "run_search",
    "run_srca",
    "select_bon",
    "select_majority",
    "select_weighted_bon",
    "split_into_steps",
    "write_report",
]
