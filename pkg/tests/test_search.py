from __future__ import annotations

import itertools
import math
import random
import statistics
from collections.abc import Callable
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import pytest

from toolplan.catalog import build_registry
from toolplan.config import DecodeError, RewardMode, SearchConfig
from toolplan.harness import CompetitionSpec, load_competition, prepare_splits, trial_problem
from toolplan.policy import Message, Playbook, ScriptedJudge, ScriptedPolicy, load_playbook
from toolplan.registry import ToolCall, ToolRegistry
from toolplan.rewards import StageId
from toolplan.search import (
    Algorithm,
    NoChildren,
    Outcome,
    SearchNode,
    SearchProblem,
    SolutionReport,
    backpropagate,
    distinct_states,
    hierarchical_run,
    mcts_run,
    react_run,
    run_search,
    state_key,
    uct_score,
    uct_select,
)
from toolplan.trajectory import TrajectoryLog

# Node at which each stage is met when the bundled binary playbook is replayed step by step.
GOLDEN_MET_AT = {
    StageId.TRAIN_DATA_LOADING: "n1",
    StageId.TEST_DATA_LOADING: "n2",
    StageId.COMBINE_TRAIN_TEST: "n3",
    StageId.DATA_CLEANING: "n6",
    StageId.FEATURE_ENGINEERING: "n8",
    StageId.SPLIT_TRAIN_TEST: "n9",
    StageId.TRAIN_FEATURES_TARGET: "n10",
    StageId.TEST_FEATURES: "n11",
    StageId.MODELING: "n12",
    StageId.CREATE_SUBMISSION: "n14",
}

LogCheck = Callable[[list[dict[str, Any]]], None]

_IDS = itertools.count()


@pytest.fixture(scope="module")
def registry() -> ToolRegistry:
    return build_registry()


@pytest.fixture(scope="module")
def spec(tmp_path_factory: pytest.TempPathFactory) -> CompetitionSpec:
    return load_competition("synthetic_binary", tmp_path_factory.mktemp("data"))


@dataclass
class _Trial:
    problem: SearchProblem
    policy: ScriptedPolicy
    judge: ScriptedJudge
    n_test: int


@pytest.fixture()
def trial(spec: CompetitionSpec, registry: ToolRegistry, tmp_path: Path) -> _Trial:
    split = prepare_splits(spec, tmp_path / "work", sample_n=300, seed=0)
    problem, fields = trial_problem(spec, split, tmp_path / "submission.csv", tmp_path / "models", registry)
    policy = ScriptedPolicy(load_playbook("synthetic_binary", fields))
    return _Trial(problem, policy, ScriptedJudge(problem.targets), split.n_test)


def _node(value: float = 0.0, visits: int = 0, parent: SearchNode | None = None) -> SearchNode:
    node = SearchNode(id=f"x{next(_IDS)}", parent=parent, depth=0 if parent is None else parent.depth + 1)
    node.value, node.visits = value, visits
    if parent is not None:
        parent.children.append(node)
    return node


def _quick(playbook: Playbook) -> Playbook:
    """The playbook with a 2-fold logistic regression in place of the 5-fold forest."""
    steps = []
    for step in playbook.steps:
        if step.tool == "fit_random_forest_classifier":
            step = replace(step, tool="fit_logistic_regressor", func_kwargs={"cv": 2})
        elif step.tool == "predict_target":
            step = replace(step, func_kwargs={"model_name": "fit_logistic_regressor"})
        steps.append(step)
    return Playbook(steps, name=playbook.name)


def _iterations_to_solve(report: SolutionReport) -> float:
    return report.iterations if report.outcome is Outcome.SOLVED else math.inf


def test_uct_score() -> None:
    assert uct_score(0.5, 2, 4, 1.0) == pytest.approx(1.33255, abs=1e-5)
    assert uct_score(0.5, 2, 0, 1.0) == 0.5
    assert uct_score(0.0, 1, 4, 2.0) == pytest.approx(2 * math.sqrt(math.log(4)))


def test_uct_select_order() -> None:
    parent = _node(visits=4)
    _node(0.2, 2, parent)
    second = _node(0.9, 2, parent)
    assert uct_select(parent, 1.0) is second

    unvisited = _node(parent=parent)
    assert uct_select(parent, 1.0) is unvisited

    tied = _node(visits=4)
    left = _node(0.5, 2, tied)
    _node(0.5, 2, tied)
    assert uct_select(tied, 1.0) is left

    with pytest.raises(NoChildren):
        uct_select(_node(), 1.0)


@pytest.mark.parametrize("seed", range(200))
def test_backpropagate_keeps_running_means(seed: int) -> None:
    rng = random.Random(seed)
    root = _node()
    nodes = [root]
    for _ in range(rng.randint(1, 12)):
        nodes.append(_node(parent=rng.choice(nodes)))
    rewards: dict[int, list[float]] = {id(node): [] for node in nodes}
    for _ in range(rng.randint(1, 30)):
        leaf = rng.choice(nodes)
        r = rng.uniform(-2.0, 2.0)
        backpropagate(leaf, r)
        for node in leaf.lineage():
            rewards[id(node)].append(r)
    for node in nodes:
        seen = rewards[id(node)]
        assert node.visits == len(seen)
        assert node.value == pytest.approx(sum(seen) / len(seen) if seen else 0.0)


def test_backpropagate_rejects_non_finite_rewards() -> None:
    with pytest.raises(ValueError, match="finite"):
        backpropagate(_node(), float("inf"))


def test_react_replays_the_playbook(trial: _Trial, registry: ToolRegistry, log_schema: LogCheck) -> None:
    log = TrajectoryLog()
    report = react_run(trial.problem, trial.policy, registry, SearchConfig(), log=log)
    assert report.outcome is Outcome.SOLVED
    assert report.best == "n14"
    assert report.iterations == 14
    assert report.status == list(StageId)
    assert report.submission is not None
    assert list(report.submission.columns) == ["id", "Transported"]
    assert len(report.submission) == trial.n_test
    assert trial.problem.targets.submission_path.exists()

    kinds = [record["step_type"] for record in log.records]
    assert kinds[:2] == ["tool_execution_initiation", "tool_execution_completion"]
    assert kinds.count("tool_execution_initiation") == 14
    assert kinds[-1] == "execution_summary"
    assert log.records[-1]["outcome"] == "Solved"
    assert any(entry["name"] == "combined_clean" for record in report.scratchpad for entry in record["entries"])
    log_schema(log.records)


def test_react_stops_at_the_budget(trial: _Trial, registry: ToolRegistry) -> None:
    report = react_run(trial.problem, trial.policy, registry, SearchConfig(), budget=3)
    assert report.outcome is Outcome.NO_SOLUTION
    assert report.iterations == 3
    assert report.status == [StageId.TRAIN_DATA_LOADING, StageId.TEST_DATA_LOADING, StageId.COMBINE_TRAIN_TEST]
    assert report.submission is None
    with pytest.raises(DecodeError, match="budget >= 1"):
        react_run(trial.problem, trial.policy, registry, SearchConfig(), budget=0)


def test_shaped_reward_fires_stage_by_stage(trial: _Trial, registry: ToolRegistry, log_schema: LogCheck) -> None:
    log = TrajectoryLog()
    report = mcts_run(trial.problem, trial.policy, registry, SearchConfig(k=1), mode=RewardMode.SHAPED, log=log)
    assert report.outcome is Outcome.SOLVED
    assert report.best == "n14"
    assert report.nodes == 15

    rewards = {r["node_id"]: r["reward"] for r in log.records if r["step_type"] == "reward_feedback"}
    fired = [node for node, reward in rewards.items() if reward > -0.1 * int(node[1:]) + 1e-9]
    assert fired == list(GOLDEN_MET_AT.values())
    assert rewards["n1"] == pytest.approx(0.9)
    assert rewards["n4"] == pytest.approx(-0.4)
    log_schema(log.records)


def test_outcome_reward_only_fires_at_the_end(trial: _Trial, registry: ToolRegistry) -> None:
    log = TrajectoryLog()
    report = mcts_run(trial.problem, trial.policy, registry, SearchConfig(k=1), mode=RewardMode.OUTCOME, log=log)
    assert report.outcome is Outcome.SOLVED
    rewards = {r["node_id"]: r["reward"] for r in log.records if r["step_type"] == "reward_feedback"}
    fired = [node for node, reward in rewards.items() if reward > -0.1 * int(node[1:]) + 1e-9]
    assert fired == ["n12", "n14"]
    assert rewards["n14"] == pytest.approx(1.0 - 1.4)


def test_shaping_rewards_progress_earlier(trial: _Trial, registry: ToolRegistry) -> None:
    config = SearchConfig(k=1, max_iterations=3)
    shaped = mcts_run(trial.problem, trial.policy, registry, config, mode=RewardMode.SHAPED)
    outcome = mcts_run(trial.problem, trial.policy, registry, config, mode=RewardMode.OUTCOME)
    assert shaped.outcome is outcome.outcome is Outcome.NO_SOLUTION
    assert shaped.value > outcome.value


def test_shaping_solves_noisy_runs_sooner(trial: _Trial, registry: ToolRegistry) -> None:
    playbook = _quick(trial.policy.playbook)
    config = SearchConfig(w=0.25, max_iterations=100)
    shaped, outcome = [], []
    for seed in range(20):
        for mode, found in ((RewardMode.SHAPED, shaped), (RewardMode.OUTCOME, outcome)):
            policy = ScriptedPolicy(playbook, noise=0.3, seed=seed)
            found.append(_iterations_to_solve(mcts_run(trial.problem, policy, registry, config, mode=mode)))
    assert statistics.median(shaped) < math.inf
    assert statistics.median(shaped) <= statistics.median(outcome)


def test_lats_keeps_reflections(trial: _Trial, registry: ToolRegistry, log_schema: LogCheck) -> None:
    log = TrajectoryLog()
    report = run_search(
        Algorithm.LATS, trial.problem, trial.policy, registry, SearchConfig(k=1), judge=trial.judge, log=log
    )
    assert report.outcome is Outcome.SOLVED
    reflections = [r for r in log.records if r["step_type"] == "reflection"]
    assert len(reflections) == 14
    assert [r["extracted_score"] for r in reflections[:3]] == [1.0, 2.0, 3.0]
    assert reflections[0]["full_reflection_content"].endswith("Score: 1")
    log_schema(log.records)


def test_lats_needs_a_judge(trial: _Trial, registry: ToolRegistry) -> None:
    with pytest.raises(ValueError, match="lats needs a judge"):
        run_search(Algorithm.LATS, trial.problem, trial.policy, registry, SearchConfig())
    with pytest.raises(ValueError, match="needs a judge"):
        mcts_run(trial.problem, trial.policy, registry, SearchConfig(), mode=RewardMode.LLM_EVAL)


def test_hierarchical_solves_every_subtask(trial: _Trial, registry: ToolRegistry, log_schema: LogCheck) -> None:
    log = TrajectoryLog()
    report = hierarchical_run(trial.problem, trial.policy, registry, SearchConfig(), log=log)
    assert report.outcome is Outcome.SOLVED
    assert report.best == "n14"
    assert report.subtask_solutions == {stage: 1 for stage in StageId}
    assert report.submission is not None and len(report.submission) == trial.n_test

    exposed = {r["node_id"]: r["tools_available"] for r in log.records if r["step_type"] == "tool_selection"}
    assert exposed["n4"] == registry.mask(StageId.DATA_CLEANING).names()
    assert exposed["n7"] == registry.mask(StageId.FEATURE_ENGINEERING).names()
    assert exposed["n13"] == registry.mask(StageId.CREATE_SUBMISSION).names()
    log_schema(log.records)


def test_hierarchical_without_masking_exposes_every_tool(trial: _Trial) -> None:
    unmasked = build_registry(masking=False)
    log = TrajectoryLog()
    report = hierarchical_run(trial.problem, trial.policy, unmasked, SearchConfig(masking=False), log=log)
    assert report.outcome is Outcome.SOLVED
    exposed = [r["tools_available"] for r in log.records if r["step_type"] == "tool_selection"]
    assert all(len(names) == 61 for names in exposed)


def test_masking_rejects_tools_of_other_stages(trial: _Trial, registry: ToolRegistry) -> None:
    # A playbook that tries to fit a model while the data is still being loaded.
    steps = [*trial.policy.playbook.steps]
    steps.insert(1, steps[11])
    log = TrajectoryLog()
    stubborn = ScriptedPolicy(Playbook(steps))
    failed = hierarchical_run(trial.problem, stubborn, registry, SearchConfig(max_iterations=3), log=log)
    assert failed.outcome is Outcome.NO_SOLUTION
    assert failed.subtask_solutions[StageId.TRAIN_DATA_LOADING] == 1
    assert failed.subtask_solutions[StageId.TEST_DATA_LOADING] == 0
    results = [r for r in log.records if r["step_type"] == "tool_result"]
    assert "not available during the test_data_loading stage" in results[-1]["content_preview"]


def test_masking_solves_at_least_as_many_noisy_runs(trial: _Trial, registry: ToolRegistry) -> None:
    playbook = _quick(trial.policy.playbook)
    unmasked = build_registry(masking=False)
    masked_solved = unmasked_solved = 0
    for seed in range(20):
        masked = hierarchical_run(
            trial.problem, ScriptedPolicy(playbook, noise=0.3, seed=seed), registry, SearchConfig(max_iterations=12)
        )
        full = hierarchical_run(
            trial.problem,
            ScriptedPolicy(playbook, noise=0.3, seed=seed),
            unmasked,
            SearchConfig(max_iterations=12, masking=False),
        )
        masked_solved += masked.outcome is Outcome.SOLVED
        unmasked_solved += full.outcome is Outcome.SOLVED
        if masked.outcome is Outcome.SOLVED:
            assert all(count >= 1 for count in masked.subtask_solutions.values())
    assert masked_solved >= 10
    assert masked_solved >= unmasked_solved


def _step(parent: SearchNode, call: ToolCall, reply: str) -> SearchNode:
    node = _node(parent=parent)
    node.messages = (Message.ai("", [call]), Message.tool(reply, call.call_id))
    return node


def test_failed_calls_leave_the_state_unchanged() -> None:
    root = _node()
    read = ToolCall("read_data", {}, {"filepath": "train.csv"}, "train", "c1")
    loaded = _step(root, read, "Loaded train.")
    retried = _step(_step(root, replace(read, tool="read_csv", call_id="c2"), "Error: unknown tool"), read, "Loaded.")
    assert state_key(loaded) == state_key(retried) == (read.canonical_key(),)
    assert distinct_states([retried, loaded]) == [loaded]

    other = _step(root, replace(read, func_kwargs={"filepath": "test.csv"}, call_id="c3"), "Loaded test.")
    assert distinct_states([loaded, other, retried]) == [loaded, other]
    assert distinct_states([]) == []
