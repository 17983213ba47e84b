"""Chat-completions backend: tool-calling proposals and trajectory judging over HTTP."""

from __future__ import annotations

import json
import logging
import os
import time
from collections.abc import Callable, Sequence
from typing import Any

import httpx

from toolplan.config import PolicyConfig
from toolplan.policy import (
    ActionProposal,
    Judgement,
    Message,
    Role,
    TrajectoryContext,
    Usage,
    dedupe,
    score_or_zero,
)
from toolplan.prompts import Prompts, load_prompts
from toolplan.registry import ToolCall
from toolplan.scratchpad import PathView

logger = logging.getLogger(__name__)


class BackendUnavailable(RuntimeError):
    def __init__(self, attempts: int, cause: BaseException | str):
        self.attempts = attempts
        self.cause = cause
        super().__init__(f"Chat backend unavailable after {attempts} attempt(s): {cause}")


class MalformedBackendReply(ValueError):
    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(f"Malformed backend reply: {detail}")


def encode_payload(payload: dict[str, Any]) -> bytes:
    """Request body bytes: keys in insertion order, compact separators, UTF-8."""
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"), allow_nan=False).encode("utf-8")


def wire_message(message: Message) -> dict[str, Any]:
    match message.role:
        case Role.SYSTEM:
            return {"role": "system", "content": message.content}
        case Role.HUMAN:
            return {"role": "user", "content": message.content}
        case Role.TOOL:
            return {"role": "tool", "tool_call_id": message.tool_call_id, "content": message.content}
        case Role.AI:
            wire: dict[str, Any] = {"role": "assistant", "content": message.content or None}
            if message.tool_calls:
                wire["tool_calls"] = [
                    {
                        "id": call.call_id,
                        "type": "function",
                        "function": {"name": call.tool, "arguments": json.dumps(call.args(), sort_keys=True)},
                    }
                    for call in message.tool_calls
                ]
            return wire


class ChatClient:
    """POSTs to `{base_url}/chat/completions`, retrying server errors with exponential backoff."""

    def __init__(
        self,
        config: PolicyConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        api_key: str | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.sleep = sleep
        key = api_key if api_key is not None else os.environ.get(config.api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            headers=headers,
            timeout=config.timeout_s,
            transport=transport,
        )
        self.usage = Usage()

    def close(self) -> None:
        self._client.close()

    def complete(self, payload: dict[str, Any]) -> dict[str, Any]:
        attempts = 1 + max(0, self.config.max_retries)
        content = encode_payload(payload)
        last: BaseException | str = "no attempt made"
        for attempt in range(attempts):
            if attempt:
                self.sleep(self.config.backoff_s * 2 ** (attempt - 1))
            try:
                response = self._client.post("/chat/completions", content=content)
            except httpx.TransportError as error:
                last = error
                logger.warning("Chat request failed (attempt %d/%d): %s", attempt + 1, attempts, error)
                continue
            if response.status_code == 429 or response.status_code >= 500:
                last = f"HTTP {response.status_code}"
                logger.warning(
                    "Chat backend returned HTTP %d (attempt %d/%d)", response.status_code, attempt + 1, attempts
                )
                continue
            if response.status_code >= 400:
                raise BackendUnavailable(attempt + 1, f"HTTP {response.status_code}: {response.text[:200]}")
            try:
                body = response.json()
            except ValueError as error:
                raise MalformedBackendReply(f"response is not JSON ({error})") from error
            if not isinstance(body, dict):
                raise MalformedBackendReply("response is not a JSON object")
            self._count(body)
            return body
        raise BackendUnavailable(attempts, last)

    def _count(self, body: dict[str, Any]) -> None:
        usage = body.get("usage") or {}
        total = int(usage.get("total_tokens", 0) or 0)
        self.usage.total_tokens += total
        self.usage.prompt_tokens += int(usage.get("prompt_tokens", 0) or 0)
        self.usage.completion_tokens += int(usage.get("completion_tokens", 0) or 0)
        self.usage.total_cost += total / 1000 * self.config.cost_per_1k_tokens


def _choices(body: dict[str, Any]) -> list[dict[str, Any]]:
    choices = body.get("choices")
    if not isinstance(choices, list) or not choices:
        raise MalformedBackendReply("no choices in the response")
    messages = []
    for choice in choices:
        message = choice.get("message") if isinstance(choice, dict) else None
        if not isinstance(message, dict):
            raise MalformedBackendReply("a choice has no message")
        messages.append(message)
    return messages


def parse_tool_call(raw: dict[str, Any], fallback_id: str) -> ToolCall:
    """A wire tool call as a `ToolCall`; raises `MalformedBackendReply` on unusable arguments."""
    function = raw.get("function") or {}
    name = function.get("name")
    if not isinstance(name, str) or not name:
        raise MalformedBackendReply("tool call without a function name")
    call_id = raw.get("id") or fallback_id
    try:
        args = json.loads(function.get("arguments") or "{}")
    except json.JSONDecodeError as error:
        raise MalformedBackendReply(f"arguments of {name} are not valid JSON ({error.msg})") from error
    if not isinstance(args, dict):
        raise MalformedBackendReply(f"arguments of {name} are not a JSON object")
    bindings = args.get("bindings") or {}
    func_kwargs = args.get("func_kwargs") or {}
    output = args.get("output")
    if not isinstance(bindings, dict) or not all(isinstance(v, str) for v in bindings.values()):
        raise MalformedBackendReply(f"bindings of {name} must map parameter names to scratchpad names")
    if not isinstance(func_kwargs, dict):
        raise MalformedBackendReply(f"func_kwargs of {name} must be a JSON object")
    if output is not None and not isinstance(output, str):
        raise MalformedBackendReply(f"output of {name} must be a string")
    return ToolCall(name, bindings, func_kwargs, output, call_id)


class LLMPolicy:
    """Proposes candidates by sampling `n=k` tool-calling completions."""

    def __init__(self, client: ChatClient, *, prompts: Prompts | None = None):
        self.client = client
        self.prompts = prompts or load_prompts()

    @property
    def usage(self) -> Usage:
        return self.client.usage

    def request(self, ctx: TrajectoryContext, k: int) -> dict[str, Any]:
        system = ctx.system_prompt or self.prompts.system
        messages = [wire_message(Message.system(system))] + [wire_message(m) for m in ctx.messages]
        payload: dict[str, Any] = {
            "model": self.client.config.model,
            "messages": messages,
            "tools": list(ctx.tools),
            "tool_choice": "auto",
            "n": k,
            "temperature": self.client.config.temperature,
        }
        if not ctx.tools:
            del payload["tools"], payload["tool_choice"]
        return payload

    def propose(self, ctx: TrajectoryContext, k: int) -> list[ActionProposal]:
        if k < 1:
            raise ValueError(f"k must be at least 1, got {k}")
        body = self.client.complete(self.request(ctx, k))
        proposals: list[ActionProposal] = []
        for index, message in enumerate(_choices(body)):
            content = message.get("content") or None
            raw_calls = message.get("tool_calls") or []
            if not raw_calls:
                proposals.append(ActionProposal(reasoning=content))
                continue
            for position, raw in enumerate(raw_calls):
                fallback_id = f"call_{len(ctx.messages)}_{index}_{position}"
                try:
                    proposals.append(ActionProposal(reasoning=content, tool_call=parse_tool_call(raw, fallback_id)))
                except MalformedBackendReply as error:
                    logger.warning("Discarding malformed tool call: %s", error)
                    name = str((raw.get("function") or {}).get("name") or "unknown")
                    call = ToolCall(name, call_id=str(raw.get("id") or fallback_id))
                    proposals.append(ActionProposal(reasoning=content, tool_call=call, error=str(error)))
        return dedupe(proposals, k)


def render_trajectory(messages: Sequence[Message]) -> str:
    lines = []
    for message in messages:
        lines.append(f"{message.type_name}: {message.content}")
        for call in message.tool_calls:
            lines.append(f"  tool call {call.tool}({json.dumps(call.args(), sort_keys=True)})")
    return "\n".join(lines)


class LLMJudge:
    """Asks the judge prompt to grade the root→node trajectory and reads the final score line."""

    def __init__(self, client: ChatClient, *, prompts: Prompts | None = None):
        self.client = client
        self.prompts = prompts or load_prompts()

    @property
    def usage(self) -> Usage:
        return self.client.usage

    def evaluate(self, ctx: TrajectoryContext, view: PathView) -> Judgement:
        payload = {
            "model": self.client.config.model,
            "messages": [
                {"role": "system", "content": self.prompts.judge_system()},
                {"role": "user", "content": render_trajectory(ctx.messages)},
            ],
            "n": 1,
            "temperature": self.client.config.temperature,
        }
        body = self.client.complete(payload)
        reply = str(_choices(body)[0].get("content") or "")
        return Judgement(score=score_or_zero(reply), reflection=reply)
