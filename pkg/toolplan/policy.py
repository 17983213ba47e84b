"""Messages, action proposals and the deterministic proposal/evaluation backends."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import random
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from toolplan.config import DecodeError, decode, packaged_path, read_toml
from toolplan.registry import ToolCall
from toolplan.rewards import StageId, StageTargets, stages_met
from toolplan.scratchpad import PathView

logger = logging.getLogger(__name__)


class Role(enum.Enum):
    SYSTEM = "system"
    HUMAN = "human"
    AI = "ai"
    TOOL = "tool"


_TYPE_NAMES = {
    Role.SYSTEM: "SystemMessage",
    Role.HUMAN: "HumanMessage",
    Role.AI: "AIMessage",
    Role.TOOL: "ToolMessage",
}


@dataclass(frozen=True)
class Message:
    role: Role
    content: str
    tool_calls: tuple[ToolCall, ...] = ()
    tool_call_id: str | None = None

    def __post_init__(self) -> None:
        if self.tool_calls and self.role is not Role.AI:
            raise ValueError("Only AI messages carry tool calls")
        if (self.tool_call_id is not None) != (self.role is Role.TOOL):
            raise ValueError("Tool messages, and only tool messages, answer a tool call id")

    @property
    def type_name(self) -> str:
        return _TYPE_NAMES[self.role]

    @classmethod
    def system(cls, content: str) -> Message:
        return cls(Role.SYSTEM, content)

    @classmethod
    def human(cls, content: str) -> Message:
        return cls(Role.HUMAN, content)

    @classmethod
    def ai(cls, content: str, calls: Sequence[ToolCall] = ()) -> Message:
        return cls(Role.AI, content, tuple(calls))

    @classmethod
    def tool(cls, content: str, call_id: str) -> Message:
        return cls(Role.TOOL, content, tool_call_id=call_id)


@dataclass(frozen=True)
class ActionProposal:
    """A candidate step: reasoning, a tool call, both, or neither (the null action).

    `error` marks a proposal whose tool call could not be parsed; it is answered with an error
    observation instead of being executed.
    """

    reasoning: str | None = None
    tool_call: ToolCall | None = None
    error: str | None = None

    @property
    def is_null(self) -> bool:
        return self.tool_call is None and not self.reasoning

    def key(self) -> tuple[str, str]:
        if self.tool_call is not None:
            return self.tool_call.canonical_key()
        return "", self.reasoning or ""


@dataclass(frozen=True)
class TrajectoryContext:
    """The root→node messages plus what the proposal may use."""

    messages: tuple[Message, ...]
    tools: tuple[Mapping[str, Any], ...] = ()
    system_prompt: str = ""
    subtask: StageId | None = None

    def tool_names(self) -> list[str]:
        return [schema["function"]["name"] for schema in self.tools]

    def executed_calls(self) -> list[ToolCall]:
        """Tool calls on the path whose observation is not an error, in order."""
        ok = {
            message.tool_call_id
            for message in self.messages
            if message.role is Role.TOOL and not message.content.startswith("Error:")
        }
        return [call for message in self.messages for call in message.tool_calls if call.call_id in ok]

    def digest(self) -> str:
        payload = [
            [message.role.value, message.content, [call.call_id for call in message.tool_calls], message.tool_call_id]
            for message in self.messages
        ]
        return hashlib.sha256(json.dumps(payload).encode("utf-8")).hexdigest()


@dataclass
class Usage:
    total_tokens: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    total_cost: float = 0.0


class Policy(Protocol):
    usage: Usage

    def propose(self, ctx: TrajectoryContext, k: int) -> list[ActionProposal]: ...


@dataclass(frozen=True)
class Judgement:
    score: float
    reflection: str

    @property
    def value(self) -> float:
        return self.score / 10.0


class Judge(Protocol):
    usage: Usage

    def evaluate(self, ctx: TrajectoryContext, view: PathView) -> Judgement: ...


class PlaybookExhausted(RuntimeError):
    def __init__(self, steps: int):
        self.steps = steps
        super().__init__(f"All {steps} playbook steps have been executed")


class ScoreNotFound(ValueError):
    def __init__(self, reply: str):
        self.reply = reply
        super().__init__("No 'Score: <n>' line found in the judge reply")


_SCORE_LINE = re.compile(r"^\s*Score:\s*(-?\d+(?:\.\d+)?)\s*$", re.MULTILINE)


def extract_score(reply: str) -> float:
    """The score on the last `Score: <n>` line, clamped to [0, 10]."""
    matches = _SCORE_LINE.findall(reply)
    if not matches:
        raise ScoreNotFound(reply)
    return min(10.0, max(0.0, float(matches[-1])))


def score_or_zero(reply: str) -> float:
    try:
        return extract_score(reply)
    except ScoreNotFound:
        logger.warning("Judge reply has no score line; scoring the trajectory 0")
        return 0.0


def dedupe(proposals: Sequence[ActionProposal], k: int) -> list[ActionProposal]:
    """At most `k` proposals, first occurrence wins among equal (tool, arguments) pairs."""
    seen: set[tuple[str, str]] = set()
    distinct: list[ActionProposal] = []
    for proposal in proposals:
        key = proposal.key()
        if key in seen:
            continue
        seen.add(key)
        distinct.append(proposal)
        if len(distinct) == k:
            break
    return distinct


@dataclass(frozen=True)
class PlaybookStep:
    tool: str
    bindings: dict[str, str] = field(default_factory=dict)
    func_kwargs: dict[str, Any] = field(default_factory=dict)
    output: str | None = None
    thought: str = ""


@dataclass(frozen=True)
class Playbook:
    steps: list[PlaybookStep]
    name: str = ""

    def __post_init__(self) -> None:
        if not self.steps:
            raise DecodeError("$.steps", "a nonempty list of steps", "[]")


def _fill(value: Any, fields: Mapping[str, str]) -> Any:
    if isinstance(value, str):
        return value.format(**fields)
    if isinstance(value, list):
        return [_fill(item, fields) for item in value]
    if isinstance(value, dict):
        return {key: _fill(item, fields) for key, item in value.items()}
    return value


def load_playbook(source: str | Path, fields: Mapping[str, str]) -> Playbook:
    """Read a playbook by bundled name or path and fill its `{placeholders}` from `fields`."""
    path = Path(source)
    if not path.suffix:
        path = packaged_path("playbooks", f"{source}.toml")
    data = read_toml(path)
    try:
        data = _fill(data, fields)
    except KeyError as cause:
        raise DecodeError(str(path), f"placeholders among {sorted(fields)}", f"unknown {cause}") from cause
    playbook: Playbook = decode(data, Playbook, path=str(path))
    return playbook


class ScriptedPolicy:
    """Replays a playbook; with probability `noise` a candidate calls a random exposed tool instead."""

    def __init__(self, playbook: Playbook, *, noise: float = 0.0, seed: int = 0):
        if not 0.0 <= noise <= 1.0:
            raise ValueError(f"noise must lie in [0, 1], got {noise}")
        self.playbook = playbook
        self.noise = noise
        self.seed = seed
        self.usage = Usage()

    def position(self, ctx: TrajectoryContext) -> int:
        """How many playbook steps the path has already executed, matched in order."""
        index = 0
        steps = self.playbook.steps
        for call in ctx.executed_calls():
            if index < len(steps) and call.canonical_key() == self._call(steps[index], "").canonical_key():
                index += 1
        return index

    @staticmethod
    def _call(step: PlaybookStep, call_id: str) -> ToolCall:
        return ToolCall(step.tool, dict(step.bindings), dict(step.func_kwargs), step.output, call_id)

    def scripted_step(self, ctx: TrajectoryContext, candidate: int = 0) -> ActionProposal:
        index = self.position(ctx)
        if index >= len(self.playbook.steps):
            raise PlaybookExhausted(len(self.playbook.steps))
        step = self.playbook.steps[index]
        digest = ctx.digest()
        call_id = f"call_{digest[:12]}_{len(ctx.messages)}_{candidate}"
        rng = random.Random(f"{self.seed}/{len(ctx.messages)}/{digest}/{candidate}")
        if self.noise > 0 and rng.random() < self.noise:
            others = [name for name in ctx.tool_names() if name != step.tool]
            if not others:
                return ActionProposal(reasoning="No other tool is available at this point.")
            tool = rng.choice(others)
            call = ToolCall(tool, dict(step.bindings), dict(step.func_kwargs), step.output, call_id)
            return ActionProposal(reasoning=f"Try {tool}.", tool_call=call)
        return ActionProposal(reasoning=step.thought or None, tool_call=self._call(step, call_id))

    def propose(self, ctx: TrajectoryContext, k: int) -> list[ActionProposal]:
        if k < 1:
            raise ValueError(f"k must be at least 1, got {k}")
        return dedupe([self.scripted_step(ctx, candidate) for candidate in range(k)], k)


class ScriptedJudge:
    """Scores a trajectory by the number of workflow stages already met on its path."""

    def __init__(self, targets: StageTargets):
        self.targets = targets
        self.usage = Usage()

    def evaluate(self, ctx: TrajectoryContext, view: PathView) -> Judgement:
        met = stages_met(view, ctx.messages, self.targets)
        done = ", ".join(stage.label for stage in met) or "none"
        reflection = (
            f"Reasoning: The trajectory has completed {len(met)} of {len(StageId)} stages ({done}).\nScore: {len(met)}"
        )
        return Judgement(score=score_or_zero(reflection), reflection=reflection)
