"""Trajectory logs: one JSON record per step, validation and a plain-text rendering for `replay`."""

from __future__ import annotations

import datetime as dt
import json
import logging
from collections.abc import Callable, Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

from toolplan.policy import Message, Usage

logger = logging.getLogger(__name__)

PREVIEW_CHARS = 300

ACTIONS = {
    "tool_selection": "selected_tools_for_execution",
    "tool_execution_initiation": "tool_execution_started",
    "tool_execution_completion": "tool_execution_completed",
    "tool_result": "received_tool_output",
    "reflection": "llm_reflection",
    "reward_feedback": "generated_reward_feedback",
    "execution_summary": "agent_execution_completed",
}

_COMMON_FIELDS = ("step_number", "timestamp", "step_type", "action")

REQUIRED_FIELDS: dict[str, tuple[str, ...]] = {
    "tool_selection": ("tools_selected", "tool_calls_detail", "content", "tools_available"),
    "tool_execution_initiation": ("tools_to_execute",),
    "tool_execution_completion": ("tool_results",),
    "tool_result": ("content_preview", "content_length"),
    "reflection": ("content_preview", "content_length", "extracted_score", "full_reflection_content"),
    "reward_feedback": ("content_preview", "content_length", "reward"),
    "execution_summary": (
        "total_execution_time",
        "total_tokens",
        "total_cost",
        "final_message_count",
        "competition_name",
        "outcome",
        "iterations",
    ),
}


class LogError(ValueError):
    """A trajectory log that cannot be read or lacks required fields."""

    def __init__(self, source: str, detail: str):
        self.source = source
        self.detail = detail
        super().__init__(f"{source}: {detail}")


def preview(content: str) -> str:
    if len(content) <= PREVIEW_CHARS:
        return content
    return content[:PREVIEW_CHARS] + "..."


def utc_now() -> dt.datetime:
    return dt.datetime.now(dt.timezone.utc)


def _call_detail(message: Message) -> list[dict[str, Any]]:
    return [
        {"name": call.tool, "args": call.args(), "id": call.call_id, "type": "tool_call"} for call in message.tool_calls
    ]


class TrajectoryLog:
    """Accumulates log records; timestamps come from `clock` so runs can be replayed byte for byte."""

    def __init__(self, *, clock: Callable[[], dt.datetime] = utc_now):
        self.clock = clock
        self.records: list[dict[str, Any]] = []
        self._started = clock()

    def __len__(self) -> int:
        return len(self.records)

    def add(
        self,
        step_type: str,
        *,
        node_id: str | None = None,
        message_type: str | None = None,
        **fields: Any,
    ) -> dict[str, Any]:
        record: dict[str, Any] = {
            "step_number": len(self.records) + 1,
            "timestamp": self.clock().isoformat(),
            "step_type": step_type,
            "action": ACTIONS.get(step_type, step_type),
        }
        if message_type is not None:
            record["message_type"] = message_type
        if node_id is not None:
            record["node_id"] = node_id
        record.update(fields)
        self.records.append(record)
        return record

    def tool_selection(self, message: Message, tools_available: Sequence[str], *, node_id: str | None = None) -> None:
        self.add(
            "tool_selection",
            node_id=node_id,
            message_type=message.type_name,
            tools_selected=[call.tool for call in message.tool_calls],
            tool_calls_detail=_call_detail(message),
            content=message.content,
            tools_available=list(tools_available),
        )

    def tool_execution_initiation(self, message: Message, *, node_id: str | None = None) -> None:
        self.add(
            "tool_execution_initiation",
            node_id=node_id,
            message_type=message.type_name,
            tools_to_execute=[
                {"tool_name": call.tool, "tool_args": call.args(), "tool_id": call.call_id}
                for call in message.tool_calls
            ],
        )

    def tool_execution_completion(self, messages: Iterable[Message], *, node_id: str | None = None) -> None:
        self.add(
            "tool_execution_completion",
            node_id=node_id,
            tool_results=[
                {
                    "message_type": message.type_name,
                    "content_preview": preview(message.content),
                    "content_length": len(message.content),
                }
                for message in messages
            ],
        )

    def tool_result(self, message: Message, *, node_id: str | None = None) -> None:
        self.add(
            "tool_result",
            node_id=node_id,
            message_type=message.type_name,
            content_preview=preview(message.content),
            content_length=len(message.content),
        )

    def reflection(self, content: str, score: float, *, node_id: str | None = None) -> None:
        self.add(
            "reflection",
            node_id=node_id,
            message_type="HumanMessage",
            content_preview=preview(content),
            content_length=len(content),
            extracted_score=score,
            full_reflection_content=content,
        )

    def reward_feedback(self, content: str, reward: float, *, node_id: str | None = None) -> None:
        self.add(
            "reward_feedback",
            node_id=node_id,
            message_type="HumanMessage",
            content_preview=preview(content),
            content_length=len(content),
            reward=reward,
        )

    def execution_summary(
        self,
        *,
        usage: Usage,
        final_message_count: int,
        competition_name: str,
        outcome: str,
        iterations: int,
    ) -> None:
        elapsed = (self.clock() - self._started).total_seconds()
        self.add(
            "execution_summary",
            total_execution_time=elapsed,
            total_tokens=usage.total_tokens,
            total_cost=usage.total_cost,
            final_message_count=final_message_count,
            competition_name=competition_name,
            outcome=outcome,
            iterations=iterations,
        )

    def to_json(self) -> str:
        return json.dumps(self.records, indent=2, sort_keys=False)

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path


def validate_log(records: Any, *, source: str = "<log>") -> list[str]:
    """Check every record's required fields; unknown step types only produce warnings, which are returned."""
    if not isinstance(records, list):
        raise LogError(source, f"expected a JSON array of records, got {type(records).__name__}")
    warnings: list[str] = []
    for index, record in enumerate(records):
        if not isinstance(record, Mapping):
            raise LogError(source, f"record {index} is not an object")
        missing = [name for name in _COMMON_FIELDS if name not in record]
        if missing:
            raise LogError(source, f"record {index} lacks {missing}")
        step_type = record["step_type"]
        required = REQUIRED_FIELDS.get(step_type)
        if required is None:
            warning = f"record {index} has unknown step_type {step_type!r}"
            logger.warning("%s: %s", source, warning)
            warnings.append(warning)
            continue
        missing = [name for name in required if name not in record]
        if missing:
            raise LogError(source, f"{step_type} record {index} lacks {missing}")
    return warnings


def read_log(path: str | Path) -> list[dict[str, Any]]:
    path = Path(path)
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except OSError as error:
        raise LogError(str(path), f"cannot read the log ({error.strerror or error})") from error
    except json.JSONDecodeError as error:
        raise LogError(str(path), f"invalid JSON at line {error.lineno} column {error.colno}: {error.msg}") from error
    validate_log(records, source=str(path))
    return records


def _signature(name: str, args: Any) -> str:
    return f"{name}({json.dumps(args, sort_keys=True)})"


def render_record(record: Mapping[str, Any]) -> str:
    head = f"#{record['step_number']:>4} {record['step_type']}"
    if "node_id" in record:
        head += f" [{record['node_id']}]"
    match record["step_type"]:
        case "tool_selection":
            calls = ", ".join(_signature(d["name"], d["args"]) for d in record["tool_calls_detail"])
            body = calls or "(no tool call)"
            if record.get("content"):
                body = f"{record['content']}\n      {body}"
        case "tool_execution_initiation":
            body = ", ".join(_signature(item["tool_name"], item["tool_args"]) for item in record["tools_to_execute"])
        case "tool_execution_completion":
            body = "\n      ".join(item["content_preview"] for item in record["tool_results"])
        case "reflection":
            body = f"score {record['extracted_score']}: {record['content_preview']}"
        case "reward_feedback":
            body = f"reward {record['reward']:.4f}: {record['content_preview']}"
        case "tool_result":
            body = record["content_preview"]
        case "execution_summary":
            body = (
                f"{record['competition_name']}: {record['outcome']} after {record['iterations']} iteration(s), "
                f"{record['final_message_count']} messages, {record['total_tokens']} tokens, "
                f"{record['total_execution_time']:.2f}s"
            )
        case _:
            body = json.dumps({k: v for k, v in record.items() if k not in _COMMON_FIELDS}, sort_keys=True)
    return f"{head}\n      {body}"


def render_log(records: Sequence[Mapping[str, Any]]) -> str:
    return "\n".join(render_record(record) for record in records)
