"""Typed configuration loading: TOML documents decoded into frozen dataclasses."""

from __future__ import annotations

import dataclasses
import enum
import tomllib
import types
import typing
from collections.abc import Mapping
from dataclasses import MISSING, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Literal, TypeVar, get_args, get_origin, overload

T = TypeVar("T")


class DecodeError(ValueError):
    """Structured decode error with path/expected/got/cause details."""

    def __init__(
        self,
        path: str,
        expected: str,
        got: str,
        cause: Exception | None = None,
        message: str | None = None,
    ):
        self.path = path
        self.expected = expected
        self.got = got
        self.cause = cause
        if message is None:
            message = f"{path}: expected {expected}, got {got}"
            if cause is not None:
                message += f" ({cause})"
        super().__init__(message)


class RewardMode(enum.Enum):
    OUTCOME = "outcome"
    SHAPED = "shaped"
    LLM_EVAL = "llm_eval"


@dataclass(frozen=True)
class SearchConfig:
    """Knobs shared by every planning algorithm."""

    w: float = 1.0
    k: int = 3
    max_iterations: int = 50
    max_depth: int = 40
    max_subtask_depth: int = 6
    reward_mode: RewardMode = RewardMode.SHAPED
    masking: bool = True
    seed: int = 0
    scratchpad_soft_cap: int = 256

    def __post_init__(self) -> None:
        if not self.w > 0:
            raise DecodeError("$.search.w", "w > 0", repr(self.w))
        for name in ("k", "max_iterations", "max_depth", "max_subtask_depth"):
            value = getattr(self, name)
            if value < 1:
                raise DecodeError(f"$.search.{name}", "a budget >= 1", repr(value))


@dataclass(frozen=True)
class PolicyConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    api_key_env: str = "OPENAI_API_KEY"
    timeout_s: float = 120.0
    max_retries: int = 3
    backoff_s: float = 0.5
    temperature: float = 1.0
    noise: float = 0.0
    cost_per_1k_tokens: float = 0.0


@dataclass(frozen=True)
class HarnessConfig:
    sample_n: int = 10_000
    test_fraction: float = 0.2
    trials: int = 10
    workers: int = 4
    output_dir: Path = Path(".")
    data_dir: Path = Path("data")


@dataclass(frozen=True)
class RunConfig:
    search: SearchConfig = field(default_factory=SearchConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)


def decode(value: Any, target: Any, *, path: str = "$") -> Any:
    """Decode a plain TOML/JSON value into `target` (a dataclass, builtin, enum or generic alias)."""
    if target is Any:
        return value

    origin = get_origin(target)

    if origin in {typing.Union, types.UnionType}:
        return _decode_union(value, list(get_args(target)), path)

    if origin is Literal:
        allowed = get_args(target)
        if value not in allowed:
            _raise_decode(path, f"one of {list(allowed)}", value)
        return value

    if isinstance(target, type) and dataclasses.is_dataclass(target):
        return _decode_dataclass(value, target, path)

    if isinstance(target, type) and issubclass(target, enum.Enum):
        try:
            return target(value)
        except ValueError as cause:
            options = ", ".join(repr(member.value) for member in target)
            _raise_decode(path, f"one of {options}", value, cause=cause)

    if target is bool:
        if isinstance(value, bool):
            return value
        _raise_decode(path, "bool", value)

    if target is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        _raise_decode(path, "int", value)

    if target is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        _raise_decode(path, "float", value)

    if target is str:
        if isinstance(value, str):
            return value
        _raise_decode(path, "str", value)

    if target is Path:
        if isinstance(value, str):
            return Path(value)
        _raise_decode(path, "path string", value)

    if origin in {list, tuple}:
        if not isinstance(value, list):
            _raise_decode(path, "array", value)
        args = get_args(target)
        item_type = args[0] if args else Any
        items = [decode(item, item_type, path=f"{path}[{index}]") for index, item in enumerate(value)]
        return items if origin is list else tuple(items)

    if origin is dict:
        if not isinstance(value, dict):
            _raise_decode(path, "table", value)
        args = get_args(target)
        value_type = args[1] if len(args) >= 2 else Any
        return {str(key): decode(item, value_type, path=f"{path}.{key}") for key, item in value.items()}

    _raise_decode(path, getattr(target, "__name__", str(target)), value)


def _decode_union(value: Any, members: list[Any], path: str) -> Any:
    none_member = type(None)
    if value is None and none_member in members:
        return None

    errors: list[DecodeError] = []
    for member in members:
        if member is none_member:
            continue
        try:
            return decode(value, member, path=path)
        except DecodeError as error:
            errors.append(error)

    expected = " | ".join(_target_name(member) for member in members)
    _raise_decode(path, expected, value, cause=errors[0] if errors else None)


def _decode_dataclass(value: Any, target: type[Any], path: str) -> Any:
    if not isinstance(value, dict):
        _raise_decode(path, f"table for {target.__name__}", value)

    hints = typing.get_type_hints(target)
    fields = {f.name: f for f in dataclasses.fields(target) if f.init}

    unknown = sorted(set(value) - set(fields))
    if unknown:
        raise DecodeError(path, f"fields of {target.__name__} ({', '.join(fields)})", f"unknown key(s) {unknown}")

    kwargs: dict[str, Any] = {}
    for name, spec in fields.items():
        if name not in value:
            if spec.default is MISSING and spec.default_factory is MISSING:
                raise DecodeError(f"{path}.{name}", _target_name(hints.get(name, Any)), "missing key")
            continue
        kwargs[name] = decode(value[name], hints.get(name, Any), path=f"{path}.{name}")

    try:
        return target(**kwargs)
    except DecodeError:
        raise
    except (TypeError, ValueError) as cause:
        _raise_decode(path, f"valid {target.__name__}", value, cause=cause)


def _target_name(target: Any) -> str:
    if target is type(None):
        return "None"
    return getattr(target, "__name__", str(target))


def _describe(value: Any) -> str:
    text = repr(value)
    if len(text) > 60:
        text = text[:57] + "..."
    return f"{type(value).__name__}({text})"


def _raise_decode(path: str, expected: str, value: Any, cause: Exception | None = None) -> typing.NoReturn:
    raise DecodeError(path=path, expected=expected, got=_describe(value), cause=cause)


def merge_tables(base: Mapping[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    """Table-wise deep merge; scalars and arrays in `override` replace those in `base`."""
    merged = dict(base)
    for key, value in override.items():
        current = merged.get(key)
        if isinstance(current, Mapping) and isinstance(value, Mapping):
            merged[key] = merge_tables(current, value)
        else:
            merged[key] = value
    return merged


def read_toml(path: str | Path) -> dict[str, Any]:
    try:
        with Path(path).open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as cause:
        raise DecodeError(str(path), "valid TOML", "a syntax error", cause=cause) from cause
    except OSError as cause:
        raise DecodeError(str(path), "a readable file", "an I/O error", cause=cause) from cause


def packaged_toml(*parts: str) -> dict[str, Any]:
    """Read a TOML document shipped under `toolplan/data/`."""
    resource = resources.files("toolplan").joinpath("data", *parts)
    return tomllib.loads(resource.read_text(encoding="utf-8"))


def packaged_path(*parts: str) -> Path:
    return Path(str(resources.files("toolplan").joinpath("data", *parts)))


@overload
def load_config(path: None = None) -> RunConfig: ...


@overload
def load_config(path: str | Path) -> RunConfig: ...


def load_config(path: str | Path | None = None) -> RunConfig:
    """Load the packaged defaults, overlay `path` when given, and decode into `RunConfig`."""
    data = packaged_toml("defaults.toml")
    if path is not None:
        data = merge_tables(data, read_toml(path))
    result: RunConfig = decode(data, RunConfig)
    return result
