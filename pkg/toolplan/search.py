"""Planning over tool calls: the ReAct loop, MCTS with depth-0 evaluation, its LATS variant and hierarchical MCTS.

Every algorithm grows the same kind of tree. A node owns the messages and scratchpad entries produced by the single
step that created it; its state is the union of both along the root→node path. ReAct is the degenerate tree with
one child per node.
"""

from __future__ import annotations

import enum
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import pandas as pd

from toolplan.config import DecodeError, RewardMode, SearchConfig
from toolplan.policy import (
    ActionProposal,
    Judge,
    Message,
    PlaybookExhausted,
    Policy,
    TrajectoryContext,
    Usage,
)
from toolplan.prompts import Prompts, load_prompts
from toolplan.registry import RegistryView, ToolRegistry
from toolplan.rewards import (
    ERROR_SUFFIX,
    FeedbackKind,
    StageId,
    StageStatus,
    StageTargets,
    check_stage,
    depth_adjust,
    failure_feedback,
    outcome_reward,
    shaped_reward,
    stages_met,
    submission_frame,
)
from toolplan.scratchpad import PathView, ScratchpadStore, dump_path
from toolplan.toolkit.base import ToolEnvironment
from toolplan.trajectory import TrajectoryLog

logger = logging.getLogger(__name__)


class Outcome(enum.Enum):
    SOLVED = "Solved"
    NO_SOLUTION = "NoSolutionFound"


class Algorithm(enum.Enum):
    REACT = "react"
    LATS = "lats"
    MCTS_OUTCOME = "mcts-outcome"
    MCTS_SHAPED = "mcts-shaped"
    HIERARCHICAL = "hierarchical"


class NoChildren(LookupError):
    def __init__(self, node: str):
        self.node = node
        super().__init__(f"Node {node!r} has no children to select from")


@dataclass(frozen=True)
class SearchProblem:
    """One trial's task: the opening prompt, what the stage checkers compare against and the tool environment."""

    name: str
    prompt: str
    targets: StageTargets
    env: ToolEnvironment = field(default_factory=ToolEnvironment)


@dataclass(eq=False)
class SearchNode:
    id: str
    parent: SearchNode | None
    depth: int
    action: ActionProposal | None = None
    messages: tuple[Message, ...] = ()
    children: list[SearchNode] = field(default_factory=list, repr=False)
    value: float = 0.0
    visits: int = 0
    terminal: bool = False
    solved: bool = False
    failed: bool = False
    status: StageStatus = field(default_factory=StageStatus, repr=False)
    reward: float | None = None
    local_depth: int = 0

    def lineage(self) -> list[SearchNode]:
        """Nodes from the root down to this one."""
        chain: list[SearchNode] = []
        node: SearchNode | None = self
        while node is not None:
            chain.append(node)
            node = node.parent
        chain.reverse()
        return chain

    def trajectory(self) -> tuple[Message, ...]:
        return tuple(message for node in self.lineage() for message in node.messages)

    @property
    def exhausted(self) -> bool:
        """Nothing left to expand below this node."""
        if self.terminal:
            return True
        return bool(self.children) and all(child.exhausted for child in self.children)


def uct_score(value: float, visits: int, parent_visits: int, w: float) -> float:
    return value + w * math.sqrt(math.log(max(parent_visits, 1)) / visits)


def uct_select(parent: SearchNode, w: float, children: Sequence[SearchNode] | None = None) -> SearchNode:
    """Unvisited children first, then the UCT maximizer; ties go to the earliest-created child."""
    candidates = list(parent.children if children is None else children)
    if not candidates:
        raise NoChildren(parent.id)
    for child in candidates:
        if child.visits == 0:
            return child
    return max(candidates, key=lambda child: uct_score(child.value, child.visits, parent.visits, w))


def backpropagate(leaf: SearchNode | Sequence[SearchNode], r: float) -> None:
    """Fold `r` into the running mean of every node on the path, leaf first.

    A node argument means its root→node lineage; hierarchical search passes the explicit selection path instead.
    """
    if not math.isfinite(r):
        raise ValueError(f"Reward must be finite, got {r}")
    path = leaf.lineage() if isinstance(leaf, SearchNode) else list(leaf)
    for node in reversed(path):
        node.visits += 1
        node.value = (node.value * (node.visits - 1) + r) / node.visits


class SearchTree:
    """Nodes `n0, n1, ...` and the scratchpads they own."""

    def __init__(self, prompt: str):
        self.store = ScratchpadStore()
        self.nodes: dict[str, SearchNode] = {}
        self.root = self._new(None, None)
        self.root.messages = (Message.human(prompt),)
        self.store.pad(self.root.id).seal()

    def __len__(self) -> int:
        return len(self.nodes)

    def _new(self, parent: SearchNode | None, action: ActionProposal | None) -> SearchNode:
        node = SearchNode(
            id=f"n{len(self.nodes)}",
            parent=parent,
            depth=0 if parent is None else parent.depth + 1,
            action=action,
            local_depth=0 if parent is None else parent.local_depth + 1,
        )
        self.nodes[node.id] = node
        return node

    def add_child(self, parent: SearchNode, action: ActionProposal) -> SearchNode:
        child = self._new(parent, action)
        parent.children.append(child)
        return child

    def view(self, node: SearchNode) -> PathView:
        return self.store.view(*(n.id for n in node.lineage()))


@dataclass
class SolutionReport:
    outcome: Outcome
    best: str | None
    value: float
    iterations: int
    status: list[StageId] = field(default_factory=list)
    subtask_solutions: dict[StageId, int] = field(default_factory=dict)
    usage: Usage = field(default_factory=Usage)
    nodes: int = 0
    log: list[dict[str, object]] = field(default_factory=list, repr=False)
    submission: pd.DataFrame | None = field(default=None, repr=False)
    scratchpad: list[dict[str, object]] = field(default_factory=list, repr=False)

    @property
    def solved(self) -> bool:
        return self.outcome is Outcome.SOLVED


class Search:
    """State shared by one trial's run: the tree, its problem and the collaborators expanding and scoring it."""

    def __init__(
        self,
        problem: SearchProblem,
        policy: Policy,
        registry: ToolRegistry,
        config: SearchConfig,
        *,
        judge: Judge | None = None,
        log: TrajectoryLog | None = None,
        prompts: Prompts | None = None,
    ):
        self.problem = problem
        self.policy = policy
        self.registry = registry
        self.config = config
        self.judge = judge
        self.log = log if log is not None else TrajectoryLog()
        self.prompts = prompts or load_prompts()
        self.tree = SearchTree(problem.prompt)
        self._schemas: dict[StageId | None, tuple[dict[str, object], ...]] = {}

    def schemas(self, view: RegistryView) -> tuple[dict[str, object], ...]:
        if view.stage not in self._schemas:
            self._schemas[view.stage] = tuple(view.export_schemas())
        return self._schemas[view.stage]

    def context(
        self, node: SearchNode, view: RegistryView, *, system_prompt: str, subtask: StageId | None = None
    ) -> TrajectoryContext:
        return TrajectoryContext(
            messages=node.trajectory(),
            tools=self.schemas(view),
            system_prompt=system_prompt,
            subtask=subtask,
        )

    def select(self, start: SearchNode) -> list[SearchNode]:
        """Descend by UCT through nodes that still have something to expand."""
        path = [start]
        node = start
        while node.children:
            open_children = [child for child in node.children if not child.exhausted]
            if not open_children:
                break
            node = uct_select(node, self.config.w, open_children)
            path.append(node)
        return path

    def expand(
        self,
        node: SearchNode,
        view: RegistryView,
        *,
        k: int,
        system_prompt: str,
        subtask: StageId | None = None,
        linear: bool = False,
    ) -> list[SearchNode]:
        """Create one child per distinct proposal and run its tool call; failed calls still make children."""
        if node.terminal:
            return []
        if node.depth >= self.config.max_depth:
            logger.debug("Node %s reached the maximum depth %d", node.id, self.config.max_depth)
            node.terminal = True
            return []
        ctx = self.context(node, view, system_prompt=system_prompt, subtask=subtask)
        try:
            proposals = self.policy.propose(ctx, k)
        except PlaybookExhausted as error:
            logger.info("Node %s: %s", node.id, error)
            node.terminal = True
            return []
        logger.debug("Expanding %s (depth %d) with %d proposal(s)", node.id, node.depth, len(proposals))
        if not proposals:
            node.terminal = True
            return []
        parent_view = self.tree.view(node)
        children = []
        for proposal in proposals:
            child = self.tree.add_child(node, proposal)
            self._act(child, proposal, parent_view, view, linear=linear)
            self.tree.view(child).check_soft_cap(self.config.scratchpad_soft_cap)
            children.append(child)
        return children

    def _act(
        self, child: SearchNode, proposal: ActionProposal, parent_view: PathView, view: RegistryView, *, linear: bool
    ) -> None:
        pad = self.tree.store.pad(child.id)
        call = proposal.tool_call
        if call is None:
            ai = Message.ai(proposal.reasoning or "")
            child.messages = (ai,)
            self._log_selection(child, ai, view, linear=linear)
            pad.seal()
            return
        if not call.call_id:
            call = replace(call, call_id=f"call_{child.id}")
        ai = Message.ai(proposal.reasoning or "", [call])
        self._log_selection(child, ai, view, linear=linear)
        if proposal.error is not None:
            content = f"Error: MalformedBackendReply({proposal.error!r})\n{ERROR_SUFFIX}"
            ok = False
        else:
            result = view.invoke(call, parent_view, pad, env=self.problem.env)
            content, ok = result.message, result.ok
        pad.seal()
        observation = Message.tool(content, call.call_id)
        messages = [ai, observation]
        if linear:
            self.log.tool_execution_completion([observation], node_id=child.id)
        else:
            self.log.tool_result(observation, node_id=child.id)
        if not ok:
            description = self.registry.describe(call.tool) if call.tool in self.registry else ""
            messages.append(Message.human(failure_feedback(FeedbackKind.TOOL, content, description=description)))
        child.messages = tuple(messages)
        child.failed = not ok

    def _log_selection(self, child: SearchNode, ai: Message, view: RegistryView, *, linear: bool) -> None:
        if linear:
            self.log.tool_execution_initiation(ai, node_id=child.id)
        else:
            self.log.tool_selection(ai, view.names(), node_id=child.id)

    def _feedback(self, node: SearchNode, text: str, reward: float) -> None:
        if text:
            node.messages = node.messages + (Message.human(text),)
        elif node.failed:
            text = node.messages[-1].content
        self.log.reward_feedback(text, reward, node_id=node.id)

    def mark_solved(self, node: SearchNode, stage: StageId = StageId.CREATE_SUBMISSION) -> bool:
        view = self.tree.view(node)
        if check_stage(stage, view, node.trajectory(), self.problem.targets).passed:
            node.solved = True
            node.terminal = True
        return node.solved

    def evaluate(self, node: SearchNode, mode: RewardMode | None) -> float:
        """Depth-0 evaluation of a freshly expanded node, with the depth penalty applied."""
        view = self.tree.view(node)
        messages = node.trajectory()
        targets = self.problem.targets
        parent_status = node.parent.status if node.parent is not None else StageStatus()
        failed = node.failed
        feedback = ""
        match mode:
            case RewardMode.SHAPED:
                signal, node.status = shaped_reward(parent_status, view, messages, targets)
                r, feedback = signal.value, "" if failed else signal.feedback
            case RewardMode.OUTCOME:
                signal, node.status = outcome_reward(parent_status, view, messages, targets)
                r, feedback = signal.value, "" if failed else signal.feedback
            case RewardMode.LLM_EVAL:
                node.status = parent_status
                if self.judge is None:
                    raise ValueError("LLM evaluation needs a judge")
                judgement = self.judge.evaluate(TrajectoryContext(messages=messages), view)
                r = judgement.value
                node.messages = node.messages + (Message.human(judgement.reflection),)
                self.log.reflection(judgement.reflection, judgement.score, node_id=node.id)
            case None:
                node.status = parent_status
                r = 0.0
        r = depth_adjust(r, node.depth)
        node.reward = r
        self.mark_solved(node)
        if mode is not None:
            self._feedback(node, feedback, r)
        return r

    def evaluate_subtask(self, node: SearchNode, stage: StageId) -> float:
        """1.0 for a node meeting the subtask's stage, 0.0 otherwise, less the subtask-local depth penalty."""
        view = self.tree.view(node)
        check = check_stage(stage, view, node.trajectory(), self.problem.targets)
        if check.passed:
            node.solved = True
            node.terminal = True
        r = depth_adjust(1.0 if check.passed else 0.0, node.local_depth)
        node.reward = r
        self._feedback(node, check.feedback if check.passed else "", r)
        return r

    def usage(self) -> Usage:
        usage = Usage(**vars(self.policy.usage))
        if self.judge is not None and self.judge.usage is not self.policy.usage:
            usage.total_tokens += self.judge.usage.total_tokens
            usage.prompt_tokens += self.judge.usage.prompt_tokens
            usage.completion_tokens += self.judge.usage.completion_tokens
            usage.total_cost += self.judge.usage.total_cost
        return usage

    def report(
        self,
        best: SearchNode | None,
        iterations: int,
        *,
        solved: bool,
        subtask_solutions: dict[StageId, int] | None = None,
    ) -> SolutionReport:
        outcome = Outcome.SOLVED if solved else Outcome.NO_SOLUTION
        shown = best or self.tree.root
        view = self.tree.view(shown)
        messages = shown.trajectory()
        usage = self.usage()
        self.log.execution_summary(
            usage=usage,
            final_message_count=len(messages),
            competition_name=self.problem.name,
            outcome=outcome.value,
            iterations=iterations,
        )
        logger.info(
            "%s: %s after %d iteration(s), %d node(s)", self.problem.name, outcome.value, iterations, len(self.tree)
        )
        return SolutionReport(
            outcome=outcome,
            best=best.id if best is not None else None,
            value=best.value if best is not None else 0.0,
            iterations=iterations,
            status=stages_met(view, messages, self.problem.targets),
            subtask_solutions=dict(subtask_solutions or {}),
            usage=usage,
            nodes=len(self.tree),
            log=self.log.records,
            submission=submission_frame(view, messages, self.problem.targets) if solved else None,
            scratchpad=dump_path(view),
        )


def _best(nodes: Sequence[SearchNode]) -> SearchNode | None:
    return max(nodes, key=lambda node: node.value, default=None)


def state_key(node: SearchNode) -> tuple[tuple[str, str], ...]:
    """The successful tool calls on the node's path, in order; failed calls leave the scratchpad untouched."""
    executed = TrajectoryContext(messages=node.trajectory()).executed_calls()
    return tuple(call.canonical_key() for call in executed)


def distinct_states(nodes: Sequence[SearchNode]) -> list[SearchNode]:
    """One node per scratchpad state, the shallowest (then earliest) of each, in order of first appearance."""
    kept: dict[tuple[tuple[str, str], ...], SearchNode] = {}
    for node in nodes:
        key = state_key(node)
        if key not in kept or node.depth < kept[key].depth:
            kept[key] = node
    return list(kept.values())


def react_run(
    problem: SearchProblem,
    policy: Policy,
    registry: ToolRegistry,
    config: SearchConfig,
    *,
    budget: int | None = None,
    log: TrajectoryLog | None = None,
) -> SolutionReport:
    """Thought/action loop on a single path until a valid submission, a final answer or the step budget."""
    budget = config.max_iterations if budget is None else budget
    if budget < 1:
        raise DecodeError("$.search.max_iterations", "a budget >= 1", repr(budget))
    search = Search(problem, policy, registry, config, log=log)
    view = registry.full()
    node = search.tree.root
    steps = 0
    while steps < budget:
        steps += 1
        children = search.expand(node, view, k=1, system_prompt=search.prompts.system, linear=True)
        if not children:
            break
        node = children[0]
        search.evaluate(node, None)
        if node.solved or node.action is None or node.action.tool_call is None:
            break
    return search.report(node if node is not search.tree.root else None, steps, solved=node.solved)


def mcts_run(
    problem: SearchProblem,
    policy: Policy,
    registry: ToolRegistry,
    config: SearchConfig,
    *,
    mode: RewardMode | None = None,
    judge: Judge | None = None,
    log: TrajectoryLog | None = None,
) -> SolutionReport:
    """Select by UCT, expand `k` candidates, score each child at depth 0 and back the score up; stop on success."""
    mode = mode or config.reward_mode
    if mode is RewardMode.LLM_EVAL and judge is None:
        raise ValueError("LLM evaluation needs a judge")
    search = Search(problem, policy, registry, config, judge=judge, log=log)
    view = registry.full()
    root = search.tree.root
    solution: SearchNode | None = None
    iterations = 0
    while iterations < config.max_iterations and solution is None and not root.exhausted:
        iterations += 1
        path = search.select(root)
        for child in search.expand(path[-1], view, k=config.k, system_prompt=search.prompts.system):
            backpropagate([*path, child], search.evaluate(child, mode))
            if child.solved and solution is None:
                solution = child
    best = solution or _best(list(search.tree.nodes.values())[1:])
    return search.report(best, iterations, solved=solution is not None)


def lats_run(
    problem: SearchProblem,
    policy: Policy,
    registry: ToolRegistry,
    config: SearchConfig,
    *,
    judge: Judge,
    log: TrajectoryLog | None = None,
) -> SolutionReport:
    """MCTS scored by an evaluator's graded reflection, which stays on the node's path as a Human message."""
    return mcts_run(problem, policy, registry, config, mode=RewardMode.LLM_EVAL, judge=judge, log=log)


def hierarchical_run(
    problem: SearchProblem,
    policy: Policy,
    registry: ToolRegistry,
    config: SearchConfig,
    *,
    log: TrajectoryLog | None = None,
) -> SolutionReport:
    """One MCTS per stage, in order; each distinct solution state becomes a root child of the next stage's search."""
    search = Search(problem, policy, registry, config, log=log)
    carried = [search.tree.root]
    counts: dict[StageId, int] = {}
    iterations = 0
    for stage in StageId:
        view = registry.mask(stage) if config.masking else registry.full()
        system_prompt = search.prompts.subtask_system(stage)
        subtask_root = SearchNode(id=f"subtask:{stage.value}", parent=None, depth=-1, children=list(carried))
        solutions: list[SearchNode] = []
        for node in carried:
            node.value, node.visits, node.local_depth = 0.0, 0, 0
            node.terminal = node.solved = False
            if check_stage(stage, search.tree.view(node), node.trajectory(), problem.targets).passed:
                node.solved = node.terminal = True
                backpropagate([subtask_root, node], 1.0)
                solutions.append(node)
        used = 0
        budget = config.max_iterations + len(carried)
        while used < budget and not subtask_root.exhausted:
            used += 1
            path = search.select(subtask_root)
            leaf = path[-1]
            if leaf.local_depth >= config.max_subtask_depth:
                leaf.terminal = True
                continue
            for child in search.expand(leaf, view, k=config.k, system_prompt=system_prompt, subtask=stage):
                backpropagate([*path, child], search.evaluate_subtask(child, stage))
                if child.solved:
                    solutions.append(child)
        iterations += used
        distinct = distinct_states(solutions)
        counts[stage] = len(distinct)
        logger.info(
            "Subtask %s: %d solution(s), %d distinct, in %d iteration(s)",
            stage.label,
            len(solutions),
            len(distinct),
            used,
        )
        if not distinct:
            return search.report(None, iterations, solved=False, subtask_solutions=counts)
        carried = distinct
    return search.report(_best(carried), iterations, solved=True, subtask_solutions=counts)


def run_search(
    algorithm: Algorithm,
    problem: SearchProblem,
    policy: Policy,
    registry: ToolRegistry,
    config: SearchConfig,
    *,
    judge: Judge | None = None,
    log: TrajectoryLog | None = None,
) -> SolutionReport:
    match algorithm:
        case Algorithm.REACT:
            return react_run(problem, policy, registry, config, log=log)
        case Algorithm.LATS:
            if judge is None:
                raise ValueError("lats needs a judge")
            return lats_run(problem, policy, registry, config, judge=judge, log=log)
        case Algorithm.MCTS_OUTCOME:
            return mcts_run(problem, policy, registry, config, mode=RewardMode.OUTCOME, log=log)
        case Algorithm.MCTS_SHAPED:
            return mcts_run(problem, policy, registry, config, mode=RewardMode.SHAPED, log=log)
        case Algorithm.HIERARCHICAL:
            return hierarchical_run(problem, policy, registry, config, log=log)
