"""Dataset loading, grid construction, metrics, and report emission."""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import replace

import pytest
from conftest import fixture_path, load_world_fixture

from stepsearch import (
    ORIGIN_CHECKPOINT,
    ORIGIN_NATURAL,
    BenchmarkCell,
    Candidate,
    ConfigError,
    Dataset,
    Question,
    RoundRecord,
    RunResult,
    ScriptedBackend,
    SearchConfig,
    TokenStats,
    TransportError,
    build_cells,
    compute_metrics,
    config_hash,
    emit_report,
    load_dataset,
    parse_method_label,
    run_benchmark,
    write_report,
)

# ---------------------------------------------------------------------------
# Dataset loading
# ---------------------------------------------------------------------------


def test_load_dataset_happy_path():
    dataset = load_dataset(fixture_path("smoke.jsonl"))
    assert dataset.name == "smoke"
    assert len(dataset.questions) == 20
    assert dataset.questions[0].id == "q000"
    assert dataset.gold_map()["q000"] == dataset.questions[0].gold_answer


def _write_lines(tmp_path, lines):
    path = tmp_path / "data.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def test_load_dataset_skips_blank_lines(tmp_path):
    path = _write_lines(
        tmp_path,
        ['{"id": "a", "question": "Q\\n", "answer": "1"}', "", "   "],
    )
    assert len(load_dataset(path).questions) == 1


@pytest.mark.parametrize(
    "lines, message",
    [
        (["not json"], ":1: invalid JSON"),
        (['{"id": "a", "question": "Q"}'], ":1: missing field 'answer'"),
        (
            [
                '{"id": "a", "question": "Q", "answer": "1"}',
                '{"id": "a", "question": "R", "answer": "2"}',
            ],
            ":2: duplicate question id 'a'",
        ),
        (['{"id": "a", "question": "Q", "answer": "?!"}'], ":1: gold answer"),
    ],
)
def test_load_dataset_reports_line_numbers(tmp_path, lines, message):
    path = _write_lines(tmp_path, lines)
    with pytest.raises(ValueError) as err:
        load_dataset(path)
    assert message in str(err.value)


def test_load_dataset_rejects_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(ValueError, match="dataset is empty"):
        load_dataset(str(path))


# ---------------------------------------------------------------------------
# Method labels and grid cells
# ---------------------------------------------------------------------------


def test_parse_method_label_defaults():
    base = SearchConfig()
    assert parse_method_label("srca", base).cca_enabled is True
    assert parse_method_label("beam", base).cca_enabled is False
    assert parse_method_label("beam+cca", base).cca_enabled is True
    assert parse_method_label("srca-cca", base).cca_enabled is False
    cfg = parse_method_label("independent@majority", base)
    assert cfg.strategy == "independent"
    assert cfg.selector == "majority"
    cfg = parse_method_label("beam+cca@weighted_bon", base)
    assert (cfg.strategy, cfg.cca_enabled, cfg.selector) == ("beam", True, "weighted_bon")


def test_parse_method_label_rejects_unknown():
    with pytest.raises(ConfigError):
        parse_method_label("magic", SearchConfig())
    with pytest.raises(ConfigError):
        parse_method_label("srca@coinflip", SearchConfig())


def test_build_cells_crosses_axes():
    cells = build_cells(
        SearchConfig(), ["srca", "beam"], n_values=[4, 8], tau_values=[0.9, 1.0]
    )
    assert len(cells) == 8
    assert {c.method for c in cells} == {"srca", "beam"}
    assert {(c.config.n, c.config.tau) for c in cells} == {
        (4, 0.9), (4, 1.0), (8, 0.9), (8, 1.0)
    }
    solo = build_cells(SearchConfig(n=6, m=2), ["greedy"])
    assert len(solo) == 1 and solo[0].config.n == 6
    with pytest.raises(ConfigError):
        build_cells(SearchConfig(), [])


def test_config_hash_stable_and_sensitive():
    a = SearchConfig(seed=0)
    b = SearchConfig(seed=0)
    c = SearchConfig(seed=1)
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert len(config_hash(a)) == 12
    int(config_hash(a), 16)  # hex digest prefix


# ---------------------------------------------------------------------------
# Metrics over hand-built results
# ---------------------------------------------------------------------------


def _cand(answer, score, origin=ORIGIN_NATURAL, lineage=(0,)):
    return Candidate(full_text=answer, answer=answer, origin=origin,
                     final_score=score, lineage=lineage,
                     origin_step=0 if origin == ORIGIN_CHECKPOINT else None)


def _result(qid, pool, selected_index, depth=2, tokens=None):
    rounds = [RoundRecord(i, 1, 2, None, [0], 0, 0) for i in range(depth)]
    return RunResult(
        question_id=qid,
        strategy="beam",
        pool=pool,
        selected_index=selected_index,
        selection_method="bon",
        rounds=rounds,
        tokens=tokens or TokenStats(),
        config=SearchConfig().to_json_dict(),
    )


def test_compute_metrics_hand_worked():
    gold = {"q1": "5", "q2": "7"}
    r1 = _result(
        "q1",
        [
            _cand("3", 0.9, lineage=(0,)),
            _cand("5", 0.8, lineage=(1,)),
            _cand("5", 0.7, ORIGIN_CHECKPOINT, lineage=(1, 0)),
        ],
        selected_index=2,
        depth=3,
        tokens=TokenStats(generated_tokens=30, generator_calls=4,
                          reward_calls=3, reward_tokens=12),
    )
    r2 = _result(
        "q2",
        [_cand("9", 0.4, lineage=(0,))],
        selected_index=0,
        depth=1,
        tokens=TokenStats(generated_tokens=10, generator_calls=2,
                          reward_calls=1, reward_tokens=5),
    )
    row = compute_metrics([r1, r2], gold, ks=[1, 2, 16])
    assert row["questions"] == 2
    assert row["accuracy"] == 0.5  # q1 selected "5" (gold), q2 selected "9" (wrong)
    assert row["car"] == 0.5  # only q1's winner came from a checkpoint
    assert row["mean_depth"] == 2.0
    assert row["mean_generated_tokens"] == 20.0
    assert row["generator_calls"] == 6
    assert row["reward_calls"] == 4
    assert row["reward_tokens"] == 17
    assert row["pass@1"] == 0.0  # q1 pool[0] is "3"; q2 pool[0] is "9"
    assert row["pass@2"] == 0.5  # q1 pool[:2] now includes "5"
    assert row["pass@16"] == 0.5  # clamped to each pool's size
    assert row["pass@2_natural"] == 0.5


def test_compute_metrics_counts_empty_natural_pool_as_miss():
    pool = [_cand("5", 0.9, ORIGIN_CHECKPOINT, lineage=(0, 0))]
    row = compute_metrics([_result("q1", pool, 0)], {"q1": "5"}, ks=[1])
    assert row["pass@1"] == 1.0
    assert row["pass@1_natural"] == 0.0


def test_compute_metrics_requires_gold():
    pool = [_cand("5", 0.9)]
    with pytest.raises(ValueError, match="no gold answer"):
        compute_metrics([_result("mystery", pool, 0)], {}, ks=[1])
    assert compute_metrics([], {}, ks=[1]) == {"questions": 0}


# ---------------------------------------------------------------------------
# Benchmark execution: persistence, resume, failures
# ---------------------------------------------------------------------------


def _mini_setup():
    question, world = load_world_fixture("deceptive.json")
    dataset = Dataset("mini", (question,))
    backend = ScriptedBackend.for_question(question.text, world)
    cells = build_cells(SearchConfig(n=4, m=2, max_steps=8, seed=0), ["srca", "beam"])
    return dataset, backend, cells


def test_run_benchmark_writes_tree_and_rows(tmp_path):
    dataset, backend, cells = _mini_setup()
    report = run_benchmark(cells, dataset, backend, backend, str(tmp_path), ks=[1, 2])
    assert [row["method"] for row in report.rows] == ["srca", "beam"]
    srca_row, beam_row = report.rows
    assert srca_row["accuracy"] == 1.0 and srca_row["car"] == 1.0
    assert beam_row["accuracy"] == 0.0 and beam_row["car"] is None
    assert srca_row["failed"] == 0
    # ks always include the cell's own n.
    assert "pass@4" in srca_row
    for cell in cells:
        run_file = os.path.join(
            str(tmp_path), "mini", cell.method, config_hash(cell.config),
            f"{dataset.questions[0].id}.json",
        )
        assert os.path.exists(run_file)
        with open(run_file, encoding="utf-8") as fh:
            persisted = RunResult.from_json_dict(json.load(fh))
        assert persisted.question_id == dataset.questions[0].id


def test_run_benchmark_resumes_from_persisted_runs(tmp_path):
    dataset, backend, cells = _mini_setup()
    first = run_benchmark(cells, dataset, backend, backend, str(tmp_path), ks=[1])

    class Exploding:
        def sample_continuations(self, *a, **k):
            raise AssertionError("resume must not re-run the generator")

        def force_checkpoint_answer(self, *a, **k):
            raise AssertionError("resume must not re-run the generator")

    second = run_benchmark(cells, dataset, Exploding(), backend, str(tmp_path), ks=[1])
    assert json.dumps(first.rows, sort_keys=True) == json.dumps(second.rows, sort_keys=True)

    # Deleting one persisted run recomputes just that run, same bytes after.
    target = os.path.join(
        str(tmp_path), "mini", "srca", config_hash(cells[0].config),
        f"{dataset.questions[0].id}.json",
    )
    before = open(target, encoding="utf-8").read()
    os.remove(target)
    third = run_benchmark(cells, dataset, backend, backend, str(tmp_path), ks=[1])
    assert json.dumps(first.rows, sort_keys=True) == json.dumps(third.rows, sort_keys=True)
    assert open(target, encoding="utf-8").read() == before


def test_run_benchmark_records_failures(tmp_path):
    dataset, backend, cells = _mini_setup()

    class Flaky:
        def sample_continuations(self, *a, **k):
            raise TransportError("generator endpoint unreachable", attempts=3)

        def force_checkpoint_answer(self, *a, **k):
            raise TransportError("generator endpoint unreachable", attempts=3)

    report = run_benchmark(cells[:1], dataset, Flaky(), backend, str(tmp_path))
    row = report.rows[0]
    assert row["failed"] == 1
    assert row["questions"] == 0


def test_run_benchmark_parallel_matches_serial(tmp_path, smoke_suite):
    dataset, backend = smoke_suite
    small = Dataset(dataset.name, dataset.questions[:4])
    cells = build_cells(SearchConfig(n=4, m=2, max_steps=8, seed=3), ["srca"])
    serial = run_benchmark(cells, small, backend, backend,
                           str(tmp_path / "serial"), ks=[1], workers=1)
    parallel = run_benchmark(cells, small, backend, backend,
                             str(tmp_path / "parallel"), ks=[1], workers=4)
    assert json.dumps(serial.rows, sort_keys=True) == json.dumps(
        parallel.rows, sort_keys=True
    )


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def _tiny_report(tmp_path):
    dataset, backend, cells = _mini_setup()
    return run_benchmark(cells, dataset, backend, backend, str(tmp_path), ks=[1, 2])


def test_emit_report_csv_shape(tmp_path):
    report = _tiny_report(tmp_path)
    text = emit_report(report, "csv")
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    assert len(body) == 2
    assert header.index("dataset") == 0
    # pass@ columns sorted numerically, naturals after the full-pool ones.
    pass_cols = [c for c in header if c.startswith("pass@")]
    assert pass_cols == ["pass@1", "pass@2", "pass@4",
                        "pass@1_natural", "pass@2_natural", "pass@4_natural"]
    # car renders empty for methods without checkpoint candidates.
    beam_row = dict(zip(header, body[1]))
    assert beam_row["car"] == ""
    assert beam_row["accuracy"] == "0.0000"
    assert beam_row["cca"] == "false"
    assert emit_report(report, "csv") == text  # deterministic


def test_emit_report_markdown_pivot(tmp_path):
    report = _tiny_report(tmp_path)
    text = emit_report(report, "markdown")
    lines = text.strip().splitlines()
    assert len(lines) == 2 + 2  # header + separator + one row per method cell
    assert lines[0] == "| method | mini |"
    assert lines[2].startswith("| srca (n=4, tau=1.0000) |")
    with pytest.raises(ValueError, match="unknown report format"):
        emit_report(report, "yaml")


def test_write_report_outputs_both_files(tmp_path):
    report = _tiny_report(tmp_path)
    csv_path, md_path = write_report(report, str(tmp_path))
    assert csv_path.endswith("report.csv") and md_path.endswith("report.md")
    assert open(csv_path, encoding="utf-8").read() == emit_report(report, "csv")
    assert open(md_path, encoding="utf-8").read() == emit_report(report, "markdown")


def test_flops_estimates_scale_with_tokens(tmp_path):
    dataset, backend, cells = _mini_setup()
    report = run_benchmark(
        cells[:1], dataset, backend, backend, str(tmp_path),
        flops_params={"generator_params": 1_000_000, "reward_params": 500_000},
    )
    row = report.rows[0]
    assert row["generator_flops_estimate"] == 2 * 1_000_000 * row["generated_tokens"]
    assert row["reward_flops_estimate"] == 2 * 500_000 * row["reward_tokens"]
    header = emit_report(report, "csv").splitlines()[0]
    assert "generator_flops_estimate" in header
