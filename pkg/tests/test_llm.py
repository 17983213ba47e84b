from __future__ import annotations

import dataclasses
import json
from collections.abc import Callable
from pathlib import Path
from typing import Any

import httpx
import pytest

from toolplan.catalog import build_registry
from toolplan.config import PolicyConfig, SearchConfig
from toolplan.harness import load_competition, prepare_splits, trial_problem
from toolplan.llm import (
    BackendUnavailable,
    ChatClient,
    LLMJudge,
    LLMPolicy,
    MalformedBackendReply,
    encode_payload,
    parse_tool_call,
    wire_message,
)
from toolplan.policy import Message, TrajectoryContext
from toolplan.prompts import Prompts
from toolplan.registry import ToolCall
from toolplan.scratchpad import ScratchpadStore
from toolplan.search import Outcome, react_run
from toolplan.trajectory import TrajectoryLog

CONFIG = PolicyConfig(base_url="https://llm.example.test/v1", model="test-model", cost_per_1k_tokens=0.5)
TOOLS = ({"type": "function", "function": {"name": "read_data", "parameters": {}}},)


def _tool_call(call_id: str, name: str, arguments: str) -> dict[str, Any]:
    return {"id": call_id, "type": "function", "function": {"name": name, "arguments": arguments}}


def _reply(*messages: dict[str, Any], total_tokens: int = 100) -> dict[str, Any]:
    return {
        "choices": [{"index": i, "message": m} for i, m in enumerate(messages)],
        "usage": {"total_tokens": total_tokens, "prompt_tokens": 80, "completion_tokens": 20},
    }


class _Recorder:
    def __init__(self, *responses: httpx.Response | Exception):
        self.responses = list(responses)
        self.requests: list[httpx.Request] = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(request)
        response = self.responses.pop(0)
        if isinstance(response, Exception):
            raise response
        return response

    def client(self, sleeps: list[float] | None = None) -> ChatClient:
        sink = sleeps if sleeps is not None else []
        return ChatClient(CONFIG, transport=httpx.MockTransport(self), api_key="sk-test", sleep=sink.append)


def _ctx() -> TrajectoryContext:
    call = ToolCall("read_data", {}, {"filepath": "train.csv"}, "train", "call_0")
    messages = (Message.human("Solve it."), Message.ai("Load.", [call]), Message.tool("Applied read_data", "call_0"))
    return TrajectoryContext(messages=messages, tools=TOOLS, system_prompt="You are a data scientist.")


def test_policy_request_and_parsing() -> None:
    args = json.dumps({"func_kwargs": {"filepath": "test.csv"}, "output": "test"})
    recorder = _Recorder(
        httpx.Response(
            200,
            json=_reply(
                {"role": "assistant", "content": "Load test.", "tool_calls": [_tool_call("a", "read_data", args)]},
                {"role": "assistant", "content": None, "tool_calls": [_tool_call("b", "read_data", args)]},
                {"role": "assistant", "content": "Nothing to do."},
            ),
        )
    )
    client = recorder.client()
    proposals = LLMPolicy(client).propose(_ctx(), 3)

    request = recorder.requests[0]
    assert request.url.path == "/v1/chat/completions"
    assert request.headers["Authorization"] == "Bearer sk-test"
    payload = json.loads(request.content)
    assert payload["model"] == "test-model"
    assert payload["n"] == 3
    assert payload["tools"] == [dict(t) for t in TOOLS]
    assert [m["role"] for m in payload["messages"]] == ["system", "user", "assistant", "tool"]
    assert payload["messages"][0]["content"] == "You are a data scientist."
    assert payload["messages"][3] == {"role": "tool", "tool_call_id": "call_0", "content": "Applied read_data"}

    assert len(proposals) == 2
    assert proposals[0].tool_call == ToolCall("read_data", {}, {"filepath": "test.csv"}, "test", "a")
    assert proposals[1].tool_call is None and proposals[1].reasoning == "Nothing to do."
    assert client.usage.total_tokens == 100
    assert client.usage.total_cost == pytest.approx(0.05)


def test_malformed_tool_call_becomes_an_error_proposal() -> None:
    recorder = _Recorder(
        httpx.Response(
            200, json=_reply({"role": "assistant", "content": None, "tool_calls": [_tool_call("x", "read_data", "{")]})
        )
    )
    proposals = LLMPolicy(recorder.client()).propose(_ctx(), 1)
    assert proposals[0].error is not None and "not valid JSON" in proposals[0].error
    assert proposals[0].tool_call is not None and proposals[0].tool_call.call_id == "x"


@pytest.mark.parametrize(
    ("arguments", "message"),
    [
        ('["a"]', "not a JSON object"),
        ('{"bindings": {"df": 3}}', "bindings of read_data"),
        ('{"output": 5}', "output of read_data must be a string"),
    ],
)
def test_parse_tool_call_rejects(arguments: str, message: str) -> None:
    with pytest.raises(MalformedBackendReply, match=message):
        parse_tool_call(_tool_call("x", "read_data", arguments), "fallback")


def test_parse_tool_call_falls_back_to_generated_id() -> None:
    raw = {"function": {"name": "read_data", "arguments": ""}}
    assert parse_tool_call(raw, "call_3_0_0").call_id == "call_3_0_0"


def test_retries_server_errors_with_backoff() -> None:
    sleeps: list[float] = []
    recorder = _Recorder(
        httpx.Response(503),
        httpx.ConnectError("refused"),
        httpx.Response(200, json=_reply({"role": "assistant", "content": "ok"})),
    )
    body = recorder.client(sleeps).complete({"model": "m"})
    assert body["choices"][0]["message"]["content"] == "ok"
    assert sleeps == [0.5, 1.0]
    assert len(recorder.requests) == 3


def test_gives_up_after_max_retries() -> None:
    sleeps: list[float] = []
    recorder = _Recorder(httpx.Response(429), httpx.Response(500), httpx.Response(502), httpx.Response(503))
    with pytest.raises(BackendUnavailable, match="after 4 attempt\\(s\\): HTTP 503") as error:
        recorder.client(sleeps).complete({})
    assert error.value.attempts == 4
    assert len(recorder.requests) == 4
    assert sleeps == [0.5, 1.0, 2.0]


def test_zero_retries_means_one_attempt() -> None:
    recorder = _Recorder(httpx.Response(500))
    client = ChatClient(
        dataclasses.replace(CONFIG, max_retries=0), transport=httpx.MockTransport(recorder), sleep=lambda _: None
    )
    with pytest.raises(BackendUnavailable, match="after 1 attempt\\(s\\)"):
        client.complete({})
    assert len(recorder.requests) == 1


def test_client_errors_are_not_retried() -> None:
    recorder = _Recorder(httpx.Response(401, text="bad key"))
    with pytest.raises(BackendUnavailable, match="HTTP 401: bad key"):
        recorder.client().complete({})
    assert len(recorder.requests) == 1


def test_non_json_reply() -> None:
    recorder = _Recorder(httpx.Response(200, text="<html>"))
    with pytest.raises(MalformedBackendReply, match="not JSON"):
        recorder.client().complete({})


def test_judge_reads_the_last_score_line() -> None:
    recorder = _Recorder(
        httpx.Response(200, json=_reply({"role": "assistant", "content": "Reasoning: solid start.\nScore: 8"}))
    )
    judgement = LLMJudge(recorder.client()).evaluate(_ctx(), ScratchpadStore().view("n0"))
    assert judgement.score == 8.0
    assert judgement.value == pytest.approx(0.8)
    payload = json.loads(recorder.requests[0].content)
    assert payload["messages"][0]["content"].endswith("an integer from 0 to 10.")
    assert payload["messages"][1]["content"].startswith("HumanMessage: Solve it.\nAIMessage: Load.")


def test_wire_message_for_ai_tool_calls() -> None:
    call = ToolCall("drop_feature", {"df": "df"}, {"column": "a"}, None, "c9")
    wire = wire_message(Message.ai("", [call]))
    assert wire["content"] is None
    assert wire["tool_calls"][0]["id"] == "c9"
    assert json.loads(wire["tool_calls"][0]["function"]["arguments"]) == {
        "bindings": {"df": "df"},
        "func_kwargs": {"column": "a"},
    }


class _ChatServer:
    """Chat-completions endpoint that answers each system prompt with a recorded reply from `tests/golden/`."""

    def __init__(self, read: Callable[[str], bytes], replies: dict[str, str], *, default: str | None = None):
        self.read = read
        self.replies = replies
        self.default = default
        self.requests: list[httpx.Request] = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(request)
        if request.method != "POST" or not request.url.path.endswith("/chat/completions"):
            return httpx.Response(404, json={"error": {"message": f"no route for {request.url.path}"}})
        messages = json.loads(request.content).get("messages") or [{}]
        name = self.replies.get(str(messages[0].get("content")), self.default)
        if name is None:
            return httpx.Response(400, json={"error": {"message": "no recorded reply for this prompt"}})
        return httpx.Response(200, content=self.read(name), headers={"Content-Type": "application/json"})

    def client(self) -> ChatClient:
        config = PolicyConfig(base_url="http://chat.local/v1")
        return ChatClient(config, transport=httpx.MockTransport(self), api_key="", sleep=lambda _: None)


GOLDEN_PROMPTS = Prompts(
    system="You are a data scientist.",
    judge="Grade the trajectory.",
    judge_format="End with a line Score: <n>.",
    hierarchical="{prefix}",
    prefixes={},
)


def _golden_ctx() -> TrajectoryContext:
    call = ToolCall("read_data", {}, {"filepath": "train.csv"}, "train", "call_1")
    messages = (
        Message.human("Predict Transported."),
        Message.ai("Load the data.", [call]),
        Message.tool("Loaded train with 4 rows.", "call_1"),
    )
    schema = {
        "type": "function",
        "function": {
            "name": "read_data",
            "description": "Read a CSV file into a table.",
            "parameters": {"type": "object", "properties": {"filepath": {"type": "string"}}, "required": ["filepath"]},
        },
    }
    return TrajectoryContext(messages=messages, tools=(schema,), system_prompt=GOLDEN_PROMPTS.system)


def _server(golden: Callable[[str], bytes], **kwargs: Any) -> _ChatServer:
    replies = {
        GOLDEN_PROMPTS.system: "propose_response.json",
        GOLDEN_PROMPTS.judge_system(): "judge_response.json",
    }
    return _ChatServer(golden, replies, **kwargs)


def test_encode_payload_keeps_key_order() -> None:
    assert encode_payload({"n": 1, "model": "m", "text": "é"}) == '{"n":1,"model":"m","text":"é"}'.encode()
    with pytest.raises(ValueError):
        encode_payload({"temperature": float("nan")})


def test_policy_matches_recorded_exchange(golden: Callable[[str], bytes]) -> None:
    server = _server(golden)
    client = server.client()
    proposals = LLMPolicy(client, prompts=GOLDEN_PROMPTS).propose(_golden_ctx(), 2)

    assert len(server.requests) == 1
    request = server.requests[0]
    assert request.url == "http://chat.local/v1/chat/completions"
    assert request.headers["Content-Type"] == "application/json"
    assert "Authorization" not in request.headers
    assert request.content == golden("propose_request.json")

    assert [proposal.tool_call for proposal in proposals] == [
        ToolCall("read_data", {}, {"filepath": "test.csv"}, "test", "call_a"),
        None,
    ]
    assert proposals[0].reasoning == "Load the test data next."
    assert proposals[1].reasoning == "Inspect the training data before loading anything else."
    assert (client.usage.total_tokens, client.usage.prompt_tokens, client.usage.completion_tokens) == (120, 96, 24)


def test_judge_matches_recorded_exchange(golden: Callable[[str], bytes]) -> None:
    server = _server(golden)
    client = server.client()
    judgement = LLMJudge(client, prompts=GOLDEN_PROMPTS).evaluate(_golden_ctx(), ScratchpadStore().view("n0"))

    assert server.requests[0].content == golden("judge_request.json")
    assert judgement.score == 2.0
    assert judgement.reflection == "Reasoning: The training data is loaded; nothing else has been done yet.\nScore: 2"
    assert client.usage.total_tokens == 78


def test_unrecorded_prompt_is_a_client_error(golden: Callable[[str], bytes]) -> None:
    server = _server(golden)
    ctx = dataclasses.replace(_golden_ctx(), system_prompt="Something else.")
    with pytest.raises(BackendUnavailable, match="HTTP 400"):
        LLMPolicy(server.client()).propose(ctx, 1)
    assert len(server.requests) == 1


def test_search_log_passes_token_usage_through(
    golden: Callable[[str], bytes],
    log_schema: Callable[[list[dict[str, Any]]], None],
    tmp_path: Path,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    monkeypatch.chdir(tmp_path)
    registry = build_registry()
    spec = load_competition("synthetic_binary", tmp_path / "data")
    split = prepare_splits(spec, tmp_path / "work", sample_n=100, seed=0)
    problem, _ = trial_problem(spec, split, tmp_path / "submission.csv", tmp_path / "models", registry)
    server = _server(golden, default="propose_response.json")
    policy = LLMPolicy(server.client())
    log = TrajectoryLog()

    report = react_run(problem, policy, registry, SearchConfig(), budget=2, log=log)

    assert len(server.requests) == 2
    assert all(json.loads(request.content)["n"] == 1 for request in server.requests)
    assert report.outcome is Outcome.NO_SOLUTION
    log_schema(log.records)
    summary = log.records[-1]
    assert summary["total_tokens"] == 240
    assert summary["competition_name"] == "synthetic_binary"
    started = [r for r in log.records if r["step_type"] == "tool_execution_initiation"]
    assert [r["tools_to_execute"][0]["tool_id"] for r in started] == ["call_a", "call_a"]
