from __future__ import annotations

import datetime as dt
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any

import pytest

ROOT = Path(__file__).resolve().parents[1]
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"

if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))


def read_golden(name: str) -> bytes:
    """A recorded file under `tests/golden/`, without the final newline editors add."""
    return (GOLDEN_DIR / name).read_bytes().removesuffix(b"\n")


@pytest.fixture()
def golden() -> Callable[[str], bytes]:
    return read_golden


# Keys of every trajectory record by step type, beyond step_number, timestamp, step_type and action.
LOG_FIELDS: dict[str, set[str]] = {
    "tool_selection": {"message_type", "node_id", "tools_selected", "tool_calls_detail", "content", "tools_available"},
    "tool_execution_initiation": {"message_type", "node_id", "tools_to_execute"},
    "tool_execution_completion": {"node_id", "tool_results"},
    "tool_result": {"message_type", "node_id", "content_preview", "content_length"},
    "reflection": {
        "message_type",
        "node_id",
        "content_preview",
        "content_length",
        "extracted_score",
        "full_reflection_content",
    },
    "reward_feedback": {"message_type", "node_id", "content_preview", "content_length", "reward"},
    "execution_summary": {
        "total_execution_time",
        "total_tokens",
        "total_cost",
        "final_message_count",
        "competition_name",
        "outcome",
        "iterations",
    },
}


def check_log_records(records: list[dict[str, Any]]) -> None:
    """Every record carries exactly its step type's keys, with the value types readers rely on."""
    assert records, "empty log"
    assert [record["step_number"] for record in records] == list(range(1, len(records) + 1))
    for record in records:
        step_type = record["step_type"]
        assert set(record) == {"step_number", "timestamp", "step_type", "action"} | LOG_FIELDS[step_type], record
        dt.datetime.fromisoformat(record["timestamp"])
        assert isinstance(record["action"], str) and record["action"]
        for detail in record.get("tool_calls_detail", []):
            assert set(detail) == {"name", "args", "id", "type"}
            assert set(detail["args"]) <= {"bindings", "func_kwargs", "output"}
        for entry in record.get("tools_to_execute", []):
            assert set(entry) == {"tool_name", "tool_args", "tool_id"}
        for result in record.get("tool_results", []):
            assert set(result) == {"message_type", "content_preview", "content_length"}
        if "content_length" in record:
            assert isinstance(record["content_length"], int)
            assert len(record["content_preview"]) <= 303
        if step_type == "execution_summary":
            assert isinstance(record["total_tokens"], int)
            assert isinstance(record["total_execution_time"], float)
    assert records[-1]["step_type"] == "execution_summary"


@pytest.fixture()
def log_schema() -> Callable[[list[dict[str, Any]]], None]:
    return check_log_records
