"""Benchmark runner: competition configs, deterministic splits, scoring, leaderboard percentiles and reports.

A trial samples the competition's training file, holds out a labelled test split, runs one planning
algorithm against it and scores whatever submission the winning path saved. Trials are independent and
run on a bounded thread pool; reports are assembled once every trial has finished.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import logging
import statistics
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import httpx
import numpy as np
import pandas as pd

from toolplan import datasets, metrics, table
from toolplan.catalog import build_registry
from toolplan.config import DecodeError, RunConfig, decode, packaged_path, read_toml
from toolplan.llm import ChatClient, LLMJudge, LLMPolicy
from toolplan.metrics import Metric
from toolplan.policy import Judge, Policy, ScriptedJudge, ScriptedPolicy, load_playbook
from toolplan.prompts import render_template
from toolplan.registry import ToolRegistry
from toolplan.rewards import StageTargets
from toolplan.search import Algorithm, SearchProblem, SolutionReport, run_search
from toolplan.toolkit.base import ToolEnvironment
from toolplan.trajectory import TrajectoryLog

logger = logging.getLogger(__name__)


class HarnessError(Exception):
    """Base class for benchmark setup and scoring failures."""


class SourceTooSmall(HarnessError):
    def __init__(self, rows: int):
        self.rows = rows
        super().__init__(f"The source training file has {rows} row(s); at least 2 are needed to split it")


class SourceMissing(HarnessError):
    def __init__(self, path: Path):
        self.path = path
        super().__init__(f"Training data not found at {path}; download the competition files into the data directory")


class EmptyLeaderboard(HarnessError):
    def __init__(self, path: Path):
        self.path = path
        super().__init__(f"Leaderboard {path} holds no scores")


class MalformedLeaderboard(HarnessError):
    def __init__(self, path: Path, line: int, text: str):
        self.path = path
        self.line = line
        self.text = text
        super().__init__(f"{path}:{line}: expected a score, got {text!r}")


class UnknownCompetition(HarnessError):
    def __init__(self, name: str, available: list[str]):
        self.name = name
        self.available = available
        super().__init__(f"Unknown competition {name!r}; available: {available}")


class NoPlaybook(HarnessError):
    def __init__(self, competition: str):
        self.competition = competition
        super().__init__(f"Competition {competition!r} has no playbook; use the llm policy for it")


class ReportError(HarnessError):
    def __init__(self, source: str, detail: str):
        self.source = source
        self.detail = detail
        super().__init__(f"{source}: {detail}")


class TaskKind(enum.Enum):
    REGRESSION = "regression"
    BINARY = "binary"
    MULTICLASS = "multiclass"


class PolicyKind(enum.Enum):
    SCRIPTED = "scripted"
    LLM = "llm"


@dataclass(frozen=True)
class CompetitionSpec:
    name: str
    task: TaskKind
    train_path: Path
    target: str
    metric: Metric
    leaderboard: Path
    prompt: str
    id_column: str | None = None
    higher_is_better: bool | None = None
    title: str = ""
    url: str = ""
    playbook: str | None = None
    synthetic: str | None = None

    def __post_init__(self) -> None:
        if self.task is TaskKind.REGRESSION and self.metric.classification:
            raise DecodeError("$.metric", "a regression metric (rmse, rmsle, mae)", self.metric.value)
        if self.task is not TaskKind.REGRESSION and not self.metric.classification:
            raise DecodeError("$.metric", "a classification metric (accuracy, f1, auc)", self.metric.value)
        if self.metric is Metric.AUC and self.task is not TaskKind.BINARY:
            raise DecodeError("$.metric", "auc only for binary tasks", self.task.value)
        if self.higher_is_better is None:
            object.__setattr__(self, "higher_is_better", self.metric.higher_is_better)

    @property
    def classification(self) -> bool:
        return self.task is not TaskKind.REGRESSION

    @property
    def submission_columns(self) -> tuple[str, ...]:
        return (self.id_column, self.target) if self.id_column else (self.target,)


def available_competitions() -> list[str]:
    return sorted(path.stem for path in packaged_path("competitions").glob("*.toml"))


def load_competition(source: str | Path, data_dir: str | Path) -> CompetitionSpec:
    """Load a bundled competition by name, or a competition file by path, resolving its data paths."""
    path = Path(source)
    if path.suffix != ".toml":
        path = packaged_path("competitions", f"{source}.toml")
        if not path.exists():
            raise UnknownCompetition(str(source), available_competitions())
    spec: CompetitionSpec = decode(read_toml(path), CompetitionSpec, path=str(path))
    data_dir = Path(data_dir)
    train_path = spec.train_path if spec.train_path.is_absolute() else data_dir / spec.train_path
    leaderboard = spec.leaderboard
    if not leaderboard.is_absolute():
        bundled = packaged_path("leaderboards", str(leaderboard))
        leaderboard = bundled if bundled.exists() else data_dir / leaderboard
    return dataclasses.replace(spec, train_path=train_path, leaderboard=leaderboard)


def ensure_source(spec: CompetitionSpec, *, seed: int = 0) -> Path:
    if spec.train_path.exists():
        return spec.train_path
    if spec.synthetic is None:
        raise SourceMissing(spec.train_path)
    return datasets.ensure_generated(spec.synthetic, spec.train_path, seed=seed)


@dataclass(frozen=True)
class PreparedSplit:
    train_path: Path
    test_path: Path
    labels: pd.DataFrame = field(repr=False)
    n_train: int
    n_test: int
    n_columns: int
    test_ids: pd.Series | None = field(default=None, repr=False)


def prepare_splits(
    spec: CompetitionSpec,
    out_dir: str | Path,
    *,
    sample_n: int = 10_000,
    test_fraction: float = 0.2,
    seed: int = 0,
) -> PreparedSplit:
    """Sample without replacement, then hold out `test_fraction` of the sample; the written test file has no target."""
    if not 0.0 < test_fraction < 1.0:
        raise DecodeError("$.harness.test_fraction", "a fraction in (0, 1)", repr(test_fraction))
    source = table.read_csv(ensure_source(spec))
    if len(source) < 2:
        raise SourceTooSmall(len(source))
    table.require_columns(source, [spec.target] + ([spec.id_column] if spec.id_column else []))

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(source))[: min(sample_n, len(source))]
    n_test = min(max(int(round(len(order) * test_fraction)), 1), len(order) - 1)
    held_out = source.iloc[order[:n_test]].reset_index(drop=True)
    train = source.iloc[order[n_test:]].reset_index(drop=True)

    out_dir = Path(out_dir)
    label_columns = [spec.id_column, spec.target] if spec.id_column else [spec.target]
    test = held_out.drop(columns=[spec.target])
    split = PreparedSplit(
        train_path=table.write_csv(train, out_dir / "train.csv"),
        test_path=table.write_csv(test, out_dir / "test.csv"),
        labels=held_out[label_columns].copy(),
        n_train=len(train),
        n_test=len(test),
        n_columns=len(source.columns),
        test_ids=test[spec.id_column].copy() if spec.id_column else None,
    )
    logger.debug("Split %s (seed %d): %d train / %d test rows", spec.name, seed, split.n_train, split.n_test)
    return split


@dataclass(frozen=True)
class SubmissionScore:
    valid: bool
    score: float | None = None
    detail: str = ""


def _invalid(detail: str) -> SubmissionScore:
    logger.info("Invalid submission: %s", detail)
    return SubmissionScore(False, None, detail)


def score_submission(spec: CompetitionSpec, split: PreparedSplit, path: str | Path) -> SubmissionScore:
    """Validate a submission file against the held-out split and score it; an invalid file is a result, not an error."""
    path = Path(path)
    if not path.exists():
        return _invalid(f"no submission file at {path}")
    try:
        frame = table.read_csv(path)
    except (table.CsvParseError, OSError) as error:
        return _invalid(f"unreadable submission ({error})")
    if len(frame) != split.n_test:
        return _invalid(f"shape mismatch with the held-out test set: {len(frame)} rows instead of {split.n_test}")
    missing = [column for column in spec.submission_columns if column not in frame.columns]
    if missing:
        return _invalid(f"missing columns {missing}")
    if frame[list(spec.submission_columns)].isna().any().any():
        return _invalid("the submission has missing values")

    truth = split.labels[spec.target]
    predicted = frame[spec.target]
    if spec.id_column:
        ids = frame[spec.id_column].astype("string")
        expected = split.labels[spec.id_column].astype("string")
        if ids.duplicated().any() or set(ids) != set(expected):
            return _invalid(f"the {spec.id_column} column does not match the held-out ids")
        predicted = frame.set_index(ids)[spec.target].loc[expected.to_numpy()]
    try:
        value = metrics.score(spec.metric, truth.to_numpy(dtype=object), predicted.to_numpy(dtype=object))
    except (TypeError, ValueError) as error:
        return _invalid(f"cannot score with {spec.metric.value} ({error})")
    return SubmissionScore(True, value)


def read_leaderboard(path: str | Path) -> list[float]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as cause:
        raise ReportError(str(path), f"cannot read the leaderboard ({cause})") from cause
    scores = []
    for number, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        try:
            scores.append(float(text))
        except ValueError:
            raise MalformedLeaderboard(path, number, text) from None
    if not scores:
        raise EmptyLeaderboard(path)
    return scores


def percentile_of(board: Sequence[float], score: float, *, higher_is_better: bool) -> float:
    """Share of leaderboard entries strictly worse than `score`, in percent."""
    if not board:
        raise ValueError("empty leaderboard")
    if higher_is_better:
        worse = sum(1 for entry in board if entry < score)
    else:
        worse = sum(1 for entry in board if entry > score)
    return 100.0 * worse / len(board)


def leaderboard_percentile(spec: CompetitionSpec, score: float) -> float:
    return percentile_of(read_leaderboard(spec.leaderboard), score, higher_is_better=bool(spec.higher_is_better))


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    valid: bool
    score: float | None
    percentile: float
    outcome: str
    iterations: int
    log_path: str
    submission_path: str
    total_tokens: int = 0
    total_cost: float = 0.0
    detail: str = ""

    def __post_init__(self) -> None:
        if not self.valid and self.percentile != 0.0:
            raise ValueError("an invalid trial has percentile 0")


def _median(values: Sequence[float]) -> float:
    return float(statistics.median(values)) if values else 0.0


@dataclass(frozen=True)
class CompetitionReport:
    competition: str
    algorithm: str
    trials: int
    consistency: float
    median_percentile: float
    mean: float
    std: float
    median: float
    scores: list[float]
    percentiles: list[float]

    @classmethod
    def from_trials(cls, competition: str, algorithm: str, results: Sequence[TrialResult]) -> CompetitionReport:
        if not results:
            raise ValueError("a report needs at least one trial")
        percentiles = [result.percentile for result in results]
        valid = sum(1 for result in results if result.valid)
        return cls(
            competition=competition,
            algorithm=algorithm,
            trials=len(results),
            consistency=valid / len(results),
            median_percentile=_median(percentiles),
            mean=float(statistics.fmean(percentiles)),
            std=float(statistics.pstdev(percentiles)),
            median=_median(percentiles),
            scores=[result.score for result in results if result.valid and result.score is not None],
            percentiles=percentiles,
        )


@dataclass(frozen=True)
class BenchmarkReport:
    competitions: list[CompetitionReport]

    @property
    def median_consistency(self) -> float:
        return _median([row.consistency for row in self.competitions])

    @property
    def median_percentile(self) -> float:
        return _median([row.median_percentile for row in self.competitions])

    def to_dict(self) -> dict[str, Any]:
        return {
            "competitions": [dataclasses.asdict(row) for row in self.competitions],
            "overall": {
                "median_consistency": self.median_consistency,
                "median_percentile": self.median_percentile,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def render(self) -> str:
        header = (
            f"{'competition':<28} {'algorithm':<14} {'trials':>6} {'consist.':>8} "
            f"{'median%':>8} {'mean%':>8} {'std':>7}"
        )
        lines = [header, "-" * len(header)]
        for row in self.competitions:
            lines.append(
                f"{row.competition:<28} {row.algorithm:<14} {row.trials:>6} {row.consistency:>8.2f} "
                f"{row.median_percentile:>8.2f} {row.mean:>8.2f} {row.std:>7.2f}"
            )
        lines.append("-" * len(header))
        lines.append(
            f"{'overall (median)':<28} {'':<14} {'':>6} {self.median_consistency:>8.2f} {self.median_percentile:>8.2f}"
        )
        return "\n".join(lines)

    def write(self, path: str | Path) -> Path:
        """Write the JSON report and the rendered table next to it (`.txt`)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        path.with_suffix(".txt").write_text(self.render() + "\n", encoding="utf-8")
        return path


def read_report(path: str | Path) -> BenchmarkReport:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as cause:
        raise ReportError(str(path), f"cannot read the report ({cause.strerror or cause})") from cause
    except json.JSONDecodeError as cause:
        raise ReportError(str(path), f"invalid JSON at line {cause.lineno}: {cause.msg}") from cause
    if not isinstance(data, dict) or not isinstance(data.get("competitions"), list):
        raise ReportError(str(path), "expected an object with a 'competitions' array")
    try:
        rows: list[CompetitionReport] = decode(data["competitions"], list[CompetitionReport], path="$.competitions")
    except DecodeError as cause:
        raise ReportError(str(path), str(cause)) from cause
    return BenchmarkReport(rows)


Backend = Callable[[CompetitionSpec, StageTargets, dict[str, str], int], tuple[Policy, Judge]]


def scripted_backend(noise: float = 0.0) -> Backend:
    """Playbook replay with `noise` chance of a random tool per candidate; the judge counts stages met."""

    def build(spec: CompetitionSpec, targets: StageTargets, fields: dict[str, str], seed: int) -> tuple[Policy, Judge]:
        if spec.playbook is None:
            raise NoPlaybook(spec.name)
        policy = ScriptedPolicy(load_playbook(spec.playbook, fields), noise=noise, seed=seed)
        return policy, ScriptedJudge(targets)

    return build


def llm_backend(config: RunConfig, *, transport: httpx.BaseTransport | None = None) -> Backend:
    """One chat client per trial, shared by the proposing policy and the judge."""

    def build(spec: CompetitionSpec, targets: StageTargets, fields: dict[str, str], seed: int) -> tuple[Policy, Judge]:
        client = ChatClient(config.policy, transport=transport)
        return LLMPolicy(client), LLMJudge(client)

    return build


def make_backend(kind: PolicyKind, config: RunConfig, *, transport: httpx.BaseTransport | None = None) -> Backend:
    if kind is PolicyKind.SCRIPTED:
        return scripted_backend(config.policy.noise)
    return llm_backend(config, transport=transport)


@dataclass(frozen=True)
class TrialLayout:
    """Where one trial's files go under the output directory."""

    root: Path
    competition: str
    algorithm: str
    trial: int

    def _under(self, kind: str) -> Path:
        return self.root / kind / self.competition / self.algorithm

    @property
    def work_dir(self) -> Path:
        return self._under("work") / f"trial_{self.trial}"

    @property
    def model_dir(self) -> Path:
        return self.work_dir / "models"

    @property
    def submission_path(self) -> Path:
        return self._under("submissions") / f"trial_{self.trial}.csv"

    @property
    def log_path(self) -> Path:
        return self._under("logs") / f"trial_{self.trial}.json"

    @property
    def scratchpad_path(self) -> Path:
        return self._under("logs") / f"trial_{self.trial}.scratchpad.json"


def report_path(root: str | Path, competition: str, algorithm: Algorithm) -> Path:
    return Path(root) / "reports" / competition / f"{algorithm.value}.json"


def trial_problem(
    spec: CompetitionSpec,
    split: PreparedSplit,
    submission_path: Path,
    model_dir: Path,
    registry: ToolRegistry,
    *,
    seed: int = 0,
) -> tuple[SearchProblem, dict[str, str]]:
    """The search problem for one split, plus the placeholder values its prompt and playbook are filled from."""
    fields = {
        "train_path": str(split.train_path),
        "test_path": str(split.test_path),
        "submission_path": str(submission_path),
        "model_dir": str(model_dir),
        "target": spec.target,
        "id_column": spec.id_column or "",
    }
    targets = StageTargets(
        train_path=split.train_path,
        test_path=split.test_path,
        target=spec.target,
        n_train=split.n_train,
        n_test=split.n_test,
        n_source_columns=split.n_columns,
        submission_path=submission_path,
        submission_columns=spec.submission_columns,
        classification=spec.classification,
        id_column=spec.id_column,
        save_tool_description=registry.describe("save_dataframe_to_csv"),
    )
    problem = SearchProblem(
        name=spec.name,
        prompt=render_template(spec.prompt, fields),
        targets=targets,
        env=ToolEnvironment(seed=seed, id_column=spec.id_column, test_ids=split.test_ids),
    )
    return problem, fields


def run_trial(
    spec: CompetitionSpec,
    algorithm: Algorithm,
    trial: int,
    seed: int,
    config: RunConfig,
    backend: Backend,
    registry: ToolRegistry,
) -> TrialResult:
    layout = TrialLayout(config.harness.output_dir, spec.name, algorithm.value, trial)
    split = prepare_splits(
        spec,
        layout.work_dir,
        sample_n=config.harness.sample_n,
        test_fraction=config.harness.test_fraction,
        seed=seed,
    )
    layout.submission_path.unlink(missing_ok=True)
    problem, fields = trial_problem(spec, split, layout.submission_path, layout.model_dir, registry, seed=seed)
    policy, judge = backend(spec, problem.targets, fields, seed)
    log = TrajectoryLog()
    search_config = dataclasses.replace(config.search, seed=seed)
    report: SolutionReport = run_search(algorithm, problem, policy, registry, search_config, judge=judge, log=log)
    log.write(layout.log_path)
    layout.scratchpad_path.write_text(json.dumps(report.scratchpad, indent=2) + "\n", encoding="utf-8")

    if report.solved and report.submission is not None:
        table.write_csv(report.submission, layout.submission_path)
    elif layout.submission_path.exists():
        layout.submission_path.unlink()
    scored = score_submission(spec, split, layout.submission_path) if report.solved else _invalid(report.outcome.value)
    percentile = leaderboard_percentile(spec, scored.score) if scored.valid and scored.score is not None else 0.0
    logger.info(
        "%s/%s trial %d: %s, score %s, percentile %.2f",
        spec.name,
        algorithm.value,
        trial,
        report.outcome.value,
        scored.score,
        percentile,
    )
    return TrialResult(
        trial=trial,
        seed=seed,
        valid=scored.valid,
        score=scored.score,
        percentile=percentile,
        outcome=report.outcome.value,
        iterations=report.iterations,
        log_path=str(layout.log_path),
        submission_path=str(layout.submission_path),
        total_tokens=report.usage.total_tokens,
        total_cost=report.usage.total_cost,
        detail=scored.detail,
    )


def run_trials(
    spec: CompetitionSpec,
    algorithm: Algorithm,
    config: RunConfig,
    backend: Backend,
    *,
    trials: int | None = None,
    seed: int = 0,
    registry: ToolRegistry | None = None,
) -> tuple[CompetitionReport, list[TrialResult]]:
    """Run `trials` independent trials with seeds `seed, seed + 1, ...` and aggregate them into one report row."""
    trials = config.harness.trials if trials is None else trials
    if trials < 1:
        raise DecodeError("$.harness.trials", "at least one trial", repr(trials))
    registry = registry or build_registry(masking=config.search.masking)
    ensure_source(spec, seed=0)
    leaderboard = read_leaderboard(spec.leaderboard)
    logger.debug("Leaderboard %s: %d entries", spec.leaderboard, len(leaderboard))

    def job(index: int) -> TrialResult:
        return run_trial(spec, algorithm, index, seed + index, config, backend, registry)

    workers = max(1, min(config.harness.workers, trials))
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="trial") as pool:
        results = list(pool.map(job, range(trials)))
    row = CompetitionReport.from_trials(spec.name, algorithm.value, results)
    BenchmarkReport([row]).write(report_path(config.harness.output_dir, spec.name, algorithm))
    return row, results
