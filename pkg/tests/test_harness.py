from __future__ import annotations

import dataclasses
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from toolplan.config import DecodeError, HarnessConfig, RunConfig
from toolplan.harness import (
    BenchmarkReport,
    CompetitionReport,
    CompetitionSpec,
    EmptyLeaderboard,
    MalformedLeaderboard,
    NoPlaybook,
    ReportError,
    SourceMissing,
    SourceTooSmall,
    TaskKind,
    TrialResult,
    UnknownCompetition,
    available_competitions,
    load_competition,
    percentile_of,
    prepare_splits,
    read_leaderboard,
    read_report,
    run_trials,
    score_submission,
    scripted_backend,
)
from toolplan.metrics import Metric
from toolplan.search import Algorithm


def _spec(tmp_path: Path, rows: int) -> CompetitionSpec:
    frame = pd.DataFrame({"id": np.arange(rows), "x": np.arange(rows) * 0.5})
    frame["y"] = frame["x"] * 2.0
    train = tmp_path / "source.csv"
    frame.to_csv(train, index=False)
    board = tmp_path / "board.txt"
    board.write_text("0.1\n0.5\n1.0\n2.0\n", encoding="utf-8")
    return CompetitionSpec(
        name="doubling",
        task=TaskKind.REGRESSION,
        train_path=train,
        target="y",
        metric=Metric.RMSE,
        leaderboard=board,
        prompt="Predict y from {train_path}.",
        id_column="id",
    )


def _result(trial: int, valid: bool, percentile: float) -> TrialResult:
    return TrialResult(
        trial=trial,
        seed=trial,
        valid=valid,
        score=0.5 if valid else None,
        percentile=percentile,
        outcome="Solved" if valid else "NoSolutionFound",
        iterations=14,
        log_path=f"logs/trial_{trial}.json",
        submission_path=f"submissions/trial_{trial}.csv",
    )


@pytest.mark.parametrize(("rows", "n_train", "n_test"), [(50_000, 8000, 2000), (6000, 4800, 1200), (10, 8, 2)])
def test_split_sizes(tmp_path: Path, rows: int, n_train: int, n_test: int) -> None:
    split = prepare_splits(_spec(tmp_path, rows), tmp_path / "work", seed=3)
    assert (split.n_train, split.n_test) == (n_train, n_test)
    test = pd.read_csv(split.test_path)
    assert list(test.columns) == ["id", "x"]
    assert list(split.labels.columns) == ["id", "y"]
    train_ids = set(pd.read_csv(split.train_path)["id"])
    assert train_ids.isdisjoint(set(test["id"]))
    assert split.test_ids is not None and split.test_ids.tolist() == test["id"].tolist()


def test_splits_are_deterministic(tmp_path: Path) -> None:
    spec = _spec(tmp_path, 500)
    first = prepare_splits(spec, tmp_path / "a", sample_n=100, seed=7)
    again = prepare_splits(spec, tmp_path / "b", sample_n=100, seed=7)
    other = prepare_splits(spec, tmp_path / "c", sample_n=100, seed=8)
    assert first.test_path.read_bytes() == again.test_path.read_bytes()
    assert first.train_path.read_bytes() == again.train_path.read_bytes()
    assert first.test_path.read_bytes() != other.test_path.read_bytes()
    assert first.n_train + first.n_test == 100


def test_split_errors(tmp_path: Path) -> None:
    with pytest.raises(DecodeError, match="a fraction in \\(0, 1\\)"):
        prepare_splits(_spec(tmp_path, 10), tmp_path / "work", test_fraction=1.0)
    with pytest.raises(SourceTooSmall, match="1 row\\(s\\)"):
        prepare_splits(_spec(tmp_path, 1), tmp_path / "work")
    missing = dataclasses.replace(_spec(tmp_path, 10), train_path=tmp_path / "nope.csv")
    with pytest.raises(SourceMissing):
        prepare_splits(missing, tmp_path / "work")


def test_score_submission(tmp_path: Path) -> None:
    spec = _spec(tmp_path, 20)
    split = prepare_splits(spec, tmp_path / "work", seed=1)
    path = tmp_path / "submission.csv"

    split.labels.iloc[::-1].to_csv(path, index=False)
    scored = score_submission(spec, split, path)
    assert scored.valid and scored.score == pytest.approx(0.0)

    off = split.labels.assign(y=split.labels["y"] + 1.0)
    off.to_csv(path, index=False)
    assert score_submission(spec, split, path).score == pytest.approx(1.0)


@pytest.mark.parametrize(
    ("mangle", "detail"),
    [
        (lambda f: f.iloc[:1], "shape mismatch with the held-out test set: 1 rows instead of 4"),
        (lambda f: f.drop(columns=["y"]), "missing columns ['y']"),
        (lambda f: f.assign(y=np.nan), "the submission has missing values"),
        (lambda f: f.assign(id=f["id"] + 1000), "the id column does not match the held-out ids"),
    ],
)
def test_invalid_submissions(tmp_path: Path, mangle: Callable[[pd.DataFrame], pd.DataFrame], detail: str) -> None:
    spec = _spec(tmp_path, 20)
    split = prepare_splits(spec, tmp_path / "work", seed=1)
    path = tmp_path / "submission.csv"
    mangle(split.labels).to_csv(path, index=False)
    scored = score_submission(spec, split, path)
    assert not scored.valid
    assert scored.score is None
    assert scored.detail == detail
    assert score_submission(spec, split, tmp_path / "absent.csv").detail.startswith("no submission file at")


def test_percentile() -> None:
    board = [0.9, 0.8, 0.7, 0.6]
    assert percentile_of(board, 0.85, higher_is_better=True) == 75.0
    assert percentile_of(board, 0.5, higher_is_better=True) == 0.0
    assert percentile_of(board, 0.95, higher_is_better=True) == 100.0
    assert percentile_of(board, 0.8, higher_is_better=True) == 50.0
    assert percentile_of([1.0, 2.0, 3.0, 4.0], 2.5, higher_is_better=False) == 50.0
    with pytest.raises(ValueError, match="empty leaderboard"):
        percentile_of([], 1.0, higher_is_better=True)


def test_leaderboard_errors(tmp_path: Path) -> None:
    board = tmp_path / "board.txt"
    board.write_text("0.9\n\n0.8\n", encoding="utf-8")
    assert read_leaderboard(board) == [0.9, 0.8]
    board.write_text("\n \n", encoding="utf-8")
    with pytest.raises(EmptyLeaderboard):
        read_leaderboard(board)
    board.write_text("0.9\nfirst place\n", encoding="utf-8")
    with pytest.raises(MalformedLeaderboard, match=":2: expected a score, got 'first place'"):
        read_leaderboard(board)
    with pytest.raises(ReportError, match="cannot read the leaderboard"):
        read_leaderboard(tmp_path / "missing.txt")


def test_report_aggregates_trials() -> None:
    results = [_result(0, True, 80.0), _result(1, False, 0.0), _result(2, True, 60.0)]
    results += [_result(3, False, 0.0), _result(4, False, 0.0)]
    row = CompetitionReport.from_trials("doubling", "react", results)
    assert row.consistency == pytest.approx(0.4)
    assert row.median_percentile == 0.0
    assert row.mean == pytest.approx(28.0)
    assert row.scores == [0.5, 0.5]
    assert row.percentiles == [80.0, 0.0, 60.0, 0.0, 0.0]

    invalid = CompetitionReport.from_trials("doubling", "react", [_result(0, False, 0.0)])
    assert (invalid.consistency, invalid.median_percentile) == (0.0, 0.0)
    with pytest.raises(ValueError, match="at least one trial"):
        CompetitionReport.from_trials("doubling", "react", [])
    with pytest.raises(ValueError, match="percentile 0"):
        _result(0, False, 10.0)


def test_benchmark_report_round_trip(tmp_path: Path) -> None:
    rows = [
        CompetitionReport.from_trials("a", "react", [_result(0, True, 90.0), _result(1, True, 70.0)]),
        CompetitionReport.from_trials("b", "react", [_result(0, False, 0.0)]),
    ]
    report = BenchmarkReport(rows)
    assert report.median_consistency == 0.5
    assert report.median_percentile == 40.0
    path = report.write(tmp_path / "reports" / "react.json")
    assert read_report(path) == report
    rendered = path.with_suffix(".txt").read_text(encoding="utf-8")
    assert rendered.splitlines()[2].startswith("a ")
    assert "overall (median)" in rendered


def test_read_report_errors(tmp_path: Path) -> None:
    path = tmp_path / "report.json"
    with pytest.raises(ReportError, match="cannot read the report"):
        read_report(path)
    path.write_text('{"competitions": [', encoding="utf-8")
    with pytest.raises(ReportError, match="invalid JSON at line 1"):
        read_report(path)
    path.write_text("[]", encoding="utf-8")
    with pytest.raises(ReportError, match="'competitions' array"):
        read_report(path)
    path.write_text('{"competitions": [{"competition": "a"}]}', encoding="utf-8")
    with pytest.raises(ReportError, match="\\$.competitions\\[0\\]"):
        read_report(path)


def test_bundled_competitions_load(tmp_path: Path) -> None:
    names = available_competitions()
    assert len(names) == 18
    for name in names:
        spec = load_competition(name, tmp_path)
        assert spec.name == name
        assert spec.prompt.strip()
        assert spec.train_path.is_relative_to(tmp_path)
    synthetic = load_competition("synthetic_regression", tmp_path)
    assert synthetic.higher_is_better is False
    assert synthetic.leaderboard.exists()


def test_competition_errors(tmp_path: Path) -> None:
    with pytest.raises(UnknownCompetition, match="'titanic'"):
        load_competition("titanic", tmp_path)
    path = tmp_path / "odd.toml"
    path.write_text(
        'name = "odd"\ntask = "regression"\ntrain_path = "t.csv"\ntarget = "y"\nmetric = "accuracy"\n'
        'leaderboard = "b.txt"\nprompt = "p"\n',
        encoding="utf-8",
    )
    with pytest.raises(DecodeError, match="a regression metric"):
        load_competition(path, tmp_path)


def _config(tmp_path: Path, trials: int) -> RunConfig:
    harness = HarnessConfig(sample_n=300, trials=trials, workers=2, output_dir=tmp_path / "out", data_dir=tmp_path)
    return RunConfig(harness=harness)


def _majority_accuracy(spec: CompetitionSpec, sample_n: int, seed: int) -> float:
    """Accuracy of always predicting the sampled training rows' most common label."""
    source = pd.read_csv(spec.train_path)
    order = np.random.default_rng(seed).permutation(len(source))[: min(sample_n, len(source))]
    n_test = min(max(int(round(len(order) * 0.2)), 1), len(order) - 1)
    held_out, train = source.iloc[order[:n_test]], source.iloc[order[n_test:]]
    majority = train[spec.target].mode().iloc[0]
    return float((held_out[spec.target] == majority).mean())


def test_run_trials_end_to_end(tmp_path: Path) -> None:
    spec = load_competition("synthetic_binary", tmp_path)
    config = _config(tmp_path, 10)
    row, results = run_trials(spec, Algorithm.REACT, config, scripted_backend(), seed=5)
    assert [result.seed for result in results] == list(range(5, 15))
    assert row.trials == 10
    assert row.consistency == 1.0
    for result in results:
        assert result.valid, result.detail
        assert result.outcome == "Solved"
        baseline = _majority_accuracy(spec, 300, result.seed)
        assert result.score is not None and baseline < result.score <= 1.0
        assert 0.0 <= result.percentile <= 100.0
        assert Path(result.log_path).exists()
        assert Path(result.submission_path).exists()
        assert Path(result.log_path).with_suffix(".scratchpad.json").exists()
    report = read_report(tmp_path / "out" / "reports" / "synthetic_binary" / "react.json")
    assert report.competitions == [row]


def test_scripted_backend_needs_a_playbook(tmp_path: Path) -> None:
    spec = dataclasses.replace(load_competition("synthetic_binary", tmp_path), playbook=None)
    with pytest.raises(NoPlaybook, match="use the llm policy"):
        run_trials(spec, Algorithm.REACT, _config(tmp_path, 1), scripted_backend())
    with pytest.raises(DecodeError, match="at least one trial"):
        run_trials(spec, Algorithm.REACT, _config(tmp_path, 1), scripted_backend(), trials=0)
