"""Tool registry: descriptors, the four scratchpad wrapper kinds, invocation and per-stage masking."""

from __future__ import annotations

import enum
import inspect
import json
import logging
import types
import typing
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import Annotated, Any, Literal

import pandas as pd

from toolplan.rewards import ERROR_SUFFIX, StageId
from toolplan.scratchpad import NodeScratchpad, ObjectKind, PathView, summarize
from toolplan.table import TRACKING_COLUMN
from toolplan.toolkit.base import Ref, ToolEnvironment, ToolOutput

logger = logging.getLogger(__name__)


class WrapperKind(enum.Enum):
    SET = "Set"
    GET = "Get"
    GET_SET = "GetSet"
    OVERRIDE = "Override"

    @property
    def reads(self) -> bool:
        return self is not WrapperKind.SET

    @property
    def writes(self) -> bool:
        return self is not WrapperKind.GET


PREAMBLES: dict[WrapperKind, str] = {
    WrapperKind.SET: (
        "This tool passes the literal arguments in `func_kwargs` to the internal function and saves the result to "
        "the scratchpad under the name given in `output`."
    ),
    WrapperKind.GET: (
        "This tool reads arguments from the scratchpad using `bindings`, passes them to the internal function. "
        "Literal arguments go in `func_kwargs`. The result is returned in the tool message and nothing is saved."
    ),
    WrapperKind.GET_SET: (
        "This tool reads arguments from the scratchpad using `bindings`, passes them to the internal function "
        "together with the literal arguments in `func_kwargs`, and saves the result to the scratchpad under the "
        "name given in `output`."
    ),
    WrapperKind.OVERRIDE: (
        "This tool reads arguments from the scratchpad using `bindings`, passes them to the internal function "
        "together with the literal arguments in `func_kwargs`, and saves the result back under the scratchpad name "
        "bound to its first argument (or under `output` when given)."
    ),
}


class ToolErrorKind(enum.Enum):
    UNKNOWN_TOOL = "unknown_tool"
    MASKED_TOOL = "masked_tool"
    BINDING_UNRESOLVED = "binding_unresolved"
    KIND_MISMATCH = "kind_mismatch"
    MISSING_REQUIRED_ARG = "missing_required_arg"
    TOOL_RUNTIME_ERROR = "tool_runtime_error"


class ToolError(Exception):
    kind: ToolErrorKind = ToolErrorKind.TOOL_RUNTIME_ERROR

    def shown(self) -> BaseException:
        """The exception rendered in the tool message."""
        return self


class UnknownTool(ToolError, LookupError):
    kind = ToolErrorKind.UNKNOWN_TOOL

    def __init__(self, name: str, available: list[str]):
        self.name = name
        self.available = available
        super().__init__(f"Unknown tool {name!r}. Available tools: {available}")


class MaskedTool(ToolError, LookupError):
    kind = ToolErrorKind.MASKED_TOOL

    def __init__(self, name: str, stage: StageId):
        self.name = name
        self.stage = stage
        super().__init__(f"Tool {name!r} is not available during the {stage.value} stage")


class BindingUnresolved(ToolError, LookupError):
    kind = ToolErrorKind.BINDING_UNRESOLVED

    def __init__(self, param: str, name: str, available: list[str]):
        self.param = param
        self.name = name
        self.available = available
        super().__init__(
            f"Parameter {param!r} is bound to {name!r}, which is not in the scratchpad. Available names: {available}"
        )


class KindMismatch(ToolError, TypeError):
    kind = ToolErrorKind.KIND_MISMATCH

    def __init__(self, param: str, name: str, got: ObjectKind, expected: tuple[ObjectKind, ...]):
        self.param = param
        self.name = name
        self.got = got
        self.expected = expected
        accepted = ", ".join(kind.value for kind in expected)
        super().__init__(f"Parameter {param!r} expects one of ({accepted}), but {name!r} holds a {got.value}")


class MissingRequiredArg(ToolError, TypeError):
    kind = ToolErrorKind.MISSING_REQUIRED_ARG

    def __init__(self, tool: str, params: list[str]):
        self.tool = tool
        self.params = params
        quoted = [repr(p) for p in params]
        if len(quoted) == 1:
            names = quoted[0]
        elif len(quoted) == 2:
            names = f"{quoted[0]} and {quoted[1]}"
        else:
            names = ", ".join(quoted[:-1]) + f", and {quoted[-1]}"
        noun = "argument" if len(params) == 1 else "arguments"
        super().__init__(f"{tool}() missing {len(params)} required positional {noun}: {names}")

    def shown(self) -> BaseException:
        return TypeError(str(self))


class ToolRuntimeError(ToolError, RuntimeError):
    kind = ToolErrorKind.TOOL_RUNTIME_ERROR

    def __init__(self, tool: str, cause: BaseException):
        self.tool = tool
        self.cause = cause
        super().__init__(f"{tool} failed: {cause}")

    def shown(self) -> BaseException:
        return self.cause


class DuplicateToolName(ValueError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Tool {name!r} is already registered")


class EmptySubtaskToolset(ValueError):
    def __init__(self, stage: StageId):
        self.stage = stage
        super().__init__(f"No tools are assigned to the {stage.value} stage")


class CatalogError(ValueError):
    """The tool catalog and the registered implementations disagree."""


def format_type(t: Any) -> str:
    if t is Any:
        return "Any"
    if t is type(None):
        return "None"
    origin = typing.get_origin(t)
    if origin is Annotated:
        return format_type(typing.get_args(t)[0])
    if origin in {typing.Union, types.UnionType}:
        return " | ".join(format_type(arg) for arg in typing.get_args(t))
    if origin is Literal:
        return " | ".join(repr(arg) for arg in typing.get_args(t))
    if origin is not None:
        origin_name = getattr(origin, "__name__", str(origin))
        args = typing.get_args(t)
        if args:
            return f"{origin_name}[{', '.join(format_type(arg) for arg in args)}]"
        return origin_name
    if isinstance(t, type):
        module = t.__module__
        if module.startswith("pandas"):
            return f"pd.{t.__name__}"
        return t.__name__
    return str(t)


def json_schema(t: Any) -> dict[str, Any]:
    """JSON schema for a literal parameter annotation."""
    if t is Any:
        return {}
    origin = typing.get_origin(t)
    if origin in {typing.Union, types.UnionType}:
        return {"anyOf": [json_schema(arg) for arg in typing.get_args(t)]}
    if origin is Literal:
        return {"enum": list(typing.get_args(t))}
    if origin in {list, tuple}:
        args = [arg for arg in typing.get_args(t) if arg is not Ellipsis]
        return {"type": "array", "items": json_schema(args[0]) if args else {}}
    if origin is dict:
        args = typing.get_args(t)
        return {"type": "object", "additionalProperties": json_schema(args[1]) if len(args) == 2 else {}}
    simple = {str: "string", bool: "boolean", int: "integer", float: "number", type(None): "null", dict: "object"}
    if t in simple:
        return {"type": simple[t]}
    if t is list:
        return {"type": "array"}
    return {}


def is_json_value(value: Any) -> bool:
    if value is None or isinstance(value, (str, bool, int, float)):
        return True
    if isinstance(value, list):
        return all(is_json_value(item) for item in value)
    if isinstance(value, dict):
        return all(isinstance(key, str) and is_json_value(item) for key, item in value.items())
    return False


@dataclass(frozen=True)
class ToolParam:
    name: str
    semantic_type: str
    kinds: tuple[ObjectKind, ...] | None
    required: bool
    default: Any = None
    schema: Mapping[str, Any] = field(default_factory=dict, compare=False)

    @property
    def is_ref(self) -> bool:
        return self.kinds is not None


def _kinds(param: ToolParam) -> str:
    return " | ".join(kind.value for kind in param.kinds or ())


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    docstring: str
    params: tuple[ToolParam, ...]
    wrapper: WrapperKind
    stages: frozenset[StageId]
    output_kind: ObjectKind | None = None
    injects_env: bool = False

    @property
    def description(self) -> str:
        return f"{PREAMBLES[self.wrapper]}\n{self.docstring}"

    @property
    def summary(self) -> str:
        for line in self.docstring.splitlines():
            if line.strip():
                return line.strip()
        return ""

    @property
    def ref_params(self) -> tuple[ToolParam, ...]:
        return tuple(p for p in self.params if p.is_ref)

    @property
    def literal_params(self) -> tuple[ToolParam, ...]:
        return tuple(p for p in self.params if not p.is_ref)

    @property
    def output_required(self) -> bool:
        return self.wrapper in {WrapperKind.SET, WrapperKind.GET_SET} and self.output_kind is not None

    def param(self, name: str) -> ToolParam | None:
        for p in self.params:
            if p.name == name:
                return p
        return None

    def schema(self) -> dict[str, Any]:
        """OpenAI-style function-calling schema."""
        properties: dict[str, Any] = {}
        required: list[str] = []
        refs, literals = self.ref_params, self.literal_params
        if refs:
            properties["bindings"] = {
                "type": "object",
                "description": "Scratchpad names to read the tool's inputs from.",
                "properties": {
                    p.name: {"type": "string", "description": f"Name of a scratchpad object of kind {_kinds(p)}"}
                    for p in refs
                },
                "required": [p.name for p in refs if p.required],
            }
            if any(p.required for p in refs):
                required.append("bindings")
        if literals:
            properties["func_kwargs"] = {
                "type": "object",
                "description": "Literal (JSON) arguments passed to the tool.",
                "properties": {p.name: dict(p.schema) for p in literals},
                "required": [p.name for p in literals if p.required],
            }
            if any(p.required for p in literals):
                required.append("func_kwargs")
        if self.wrapper is not WrapperKind.GET:
            properties["output"] = {
                "type": "string",
                "description": "Scratchpad name to save the result under.",
            }
            if self.output_required:
                required.append("output")
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {"type": "object", "properties": properties, "required": required},
            },
        }


def describe_function(
    fn: Callable[..., Any],
    *,
    wrapper: WrapperKind,
    stages: frozenset[StageId] = frozenset(),
    output_kind: ObjectKind | None = None,
    name: str | None = None,
) -> ToolDescriptor:
    """Build a descriptor from a tool function's signature and `Annotated[..., Ref]` markers."""
    signature = inspect.signature(fn)
    hints = typing.get_type_hints(fn, include_extras=True)
    params: list[ToolParam] = []
    injects_env = False
    for parameter in signature.parameters.values():
        if parameter.name == "env" and parameter.kind is inspect.Parameter.KEYWORD_ONLY:
            injects_env = True
            continue
        hint = hints.get(parameter.name, Any)
        kinds: tuple[ObjectKind, ...] | None = None
        if typing.get_origin(hint) is Annotated:
            for marker in hint.__metadata__:
                if isinstance(marker, Ref):
                    kinds = marker.kinds
            base = typing.get_args(hint)[0]
        else:
            base = hint
        required = parameter.default is inspect.Parameter.empty
        default = None if required else parameter.default
        params.append(
            ToolParam(
                name=parameter.name,
                semantic_type=format_type(hint),
                kinds=kinds,
                required=required,
                default=default,
                schema={} if kinds is not None else json_schema(base),
            )
        )
    return ToolDescriptor(
        name=name or fn.__name__,
        docstring=fn.__doc__ or "",
        params=tuple(params),
        wrapper=wrapper,
        stages=stages,
        output_kind=output_kind,
        injects_env=injects_env,
    )


@dataclass(frozen=True)
class ToolCall:
    tool: str
    bindings: Mapping[str, str] = field(default_factory=dict)
    func_kwargs: Mapping[str, Any] = field(default_factory=dict)
    output: str | None = None
    call_id: str = ""

    def args(self) -> dict[str, Any]:
        args: dict[str, Any] = {"bindings": dict(self.bindings), "func_kwargs": dict(self.func_kwargs)}
        if self.output is not None:
            args["output"] = self.output
        return args

    def canonical_key(self) -> tuple[str, str]:
        """Identity used to deduplicate proposals (call ids excluded)."""
        return self.tool, json.dumps(self.args(), sort_keys=True, default=repr)


@dataclass(frozen=True)
class ToolResult:
    ok: bool
    message: str
    created: tuple[tuple[str, ObjectKind], ...] = ()
    error_kind: ToolErrorKind | None = None
    reads: tuple[str, ...] = ()
    value: Any = field(default=None, repr=False, compare=False)


def render_value(value: Any) -> str:
    if isinstance(value, (pd.DataFrame, pd.Series)):
        return value.to_string()
    if isinstance(value, str):
        return value
    if isinstance(value, dict):
        return str(value)
    return summarize(value)


def _unexpected(tool: str, param: str) -> ToolRuntimeError:
    return ToolRuntimeError(tool, TypeError(f"{tool}() got an unexpected keyword argument {param!r}"))


def error_message(error: ToolError) -> str:
    shown = error.shown()
    return f"Error: {type(shown).__name__}({str(shown)!r})\n{ERROR_SUFFIX}"


class ToolRegistry:
    """All registered tools; immutable once the catalog is loaded."""

    def __init__(self) -> None:
        self._tools: dict[str, tuple[ToolDescriptor, Callable[..., Any]]] = {}
        self.masking = True

    def register(self, desc: ToolDescriptor, impl: Callable[..., Any]) -> ToolRegistry:
        if desc.name in self._tools:
            raise DuplicateToolName(desc.name)
        self._tools[desc.name] = (desc, impl)
        return self

    def __len__(self) -> int:
        return len(self._tools)

    def __contains__(self, name: object) -> bool:
        return name in self._tools

    def __iter__(self) -> Iterator[ToolDescriptor]:
        return (desc for desc, _ in self._tools.values())

    def descriptor(self, name: str) -> ToolDescriptor:
        if name not in self._tools:
            raise UnknownTool(name, sorted(self._tools))
        return self._tools[name][0]

    def implementation(self, name: str) -> Callable[..., Any]:
        if name not in self._tools:
            raise UnknownTool(name, sorted(self._tools))
        return self._tools[name][1]

    def describe(self, name: str) -> str:
        return self.descriptor(name).description

    def full(self) -> RegistryView:
        return RegistryView(self, None)

    def mask(self, stage: StageId) -> RegistryView:
        """Expose only the tools tagged with `stage`; the whole registry when masking is off."""
        if not any(stage in desc.stages for desc in self):
            raise EmptySubtaskToolset(stage)
        if not self.masking:
            return RegistryView(self, None)
        return RegistryView(self, stage)

    def export_schemas(self) -> list[dict[str, Any]]:
        return self.full().export_schemas()

    def invoke(
        self,
        call: ToolCall,
        view: PathView,
        child_pad: NodeScratchpad,
        *,
        env: ToolEnvironment | None = None,
    ) -> ToolResult:
        return self.full().invoke(call, view, child_pad, env=env)


@dataclass(frozen=True)
class RegistryView:
    """The tools exposed to one proposal: all of them, or those of one stage."""

    registry: ToolRegistry
    stage: StageId | None

    def exposed(self) -> list[ToolDescriptor]:
        return [desc for desc in self.registry if self.stage is None or self.stage in desc.stages]

    def names(self) -> list[str]:
        return [desc.name for desc in self.exposed()]

    def export_schemas(self) -> list[dict[str, Any]]:
        return [desc.schema() for desc in self.exposed()]

    def invoke(
        self,
        call: ToolCall,
        view: PathView,
        child_pad: NodeScratchpad,
        *,
        env: ToolEnvironment | None = None,
    ) -> ToolResult:
        """Run `call` against `view` and write its outputs to `child_pad`; failures leave the pad untouched."""
        reads: tuple[str, ...] = ()
        try:
            desc = self._lookup(call.tool)
            kwargs, reads, first_input = self._bind(desc, call, view)
            output = call.output
            if desc.wrapper is WrapperKind.GET:
                output = None
            elif desc.wrapper is WrapperKind.OVERRIDE and not output:
                output = first_input[0] if first_input else None
            if desc.output_required and not output:
                raise MissingRequiredArg(desc.name, ["output"])
            if desc.injects_env:
                kwargs["env"] = env if env is not None else ToolEnvironment()
            impl = self.registry.implementation(desc.name)
            try:
                returned = impl(**kwargs)
            except Exception as cause:
                raise ToolRuntimeError(desc.name, cause) from cause
            staged = self._stage(desc, returned, output, first_input)
            for name, _, _ in staged:
                if not name:
                    raise ToolRuntimeError(desc.name, ValueError("Scratchpad names must be non-empty"))
                if child_pad.get(name) is not None:
                    raise ToolRuntimeError(desc.name, ValueError(f"Name {name!r} was already written at this node"))
        except ToolError as error:
            logger.debug("Tool call %s failed: %s", call.tool, error)
            return ToolResult(ok=False, message=error_message(error), error_kind=error.kind, reads=reads)

        for name, kind, value in staged:
            child_pad.put(name, kind, value, created_by=call.call_id)
        returned_value = returned.value if isinstance(returned, ToolOutput) else returned
        message = self._success_message(desc, call, returned, staged, returned_value)
        return ToolResult(
            ok=True,
            message=message,
            created=tuple((name, kind) for name, kind, _ in staged),
            reads=reads,
            value=returned_value if desc.wrapper is WrapperKind.GET else None,
        )

    def _lookup(self, name: str) -> ToolDescriptor:
        if name not in self.registry:
            raise UnknownTool(name, self.names())
        desc = self.registry.descriptor(name)
        if self.stage is not None and self.stage not in desc.stages:
            raise MaskedTool(name, self.stage)
        return desc

    def _bind(
        self, desc: ToolDescriptor, call: ToolCall, view: PathView
    ) -> tuple[dict[str, Any], tuple[str, ...], tuple[str, ObjectKind] | None]:
        kwargs: dict[str, Any] = {}
        reads: list[str] = []
        first_input: tuple[str, ObjectKind] | None = None
        for param_name, scratch_name in call.bindings.items():
            param = desc.param(param_name)
            if param is None:
                raise _unexpected(desc.name, param_name)
            if not isinstance(scratch_name, str):
                raise ToolRuntimeError(
                    desc.name, TypeError(f"Binding for {param_name!r} must be a scratchpad name, got {scratch_name!r}")
                )
            entry = view.get(scratch_name)
            if entry is None:
                raise BindingUnresolved(param_name, scratch_name, view.names())
            if param.kinds is not None and entry.kind not in param.kinds:
                raise KindMismatch(param_name, scratch_name, entry.kind, param.kinds)
            kwargs[param_name] = entry.value
            reads.append(scratch_name)
        for param in desc.ref_params:
            if param.name in call.bindings:
                first_input = (call.bindings[param.name], view.resolve(call.bindings[param.name]).kind)
                break
        for param_name, value in call.func_kwargs.items():
            param = desc.param(param_name)
            if param is None:
                raise _unexpected(desc.name, param_name)
            if param.is_ref:
                raise ToolRuntimeError(
                    desc.name,
                    TypeError(f"Argument {param_name!r} must be bound to a scratchpad name through `bindings`"),
                )
            if param_name in kwargs:
                raise ToolRuntimeError(
                    desc.name, TypeError(f"{desc.name}() got multiple values for argument {param_name!r}")
                )
            if not is_json_value(value):
                raise ToolRuntimeError(
                    desc.name, TypeError(f"Argument {param_name!r} must be a JSON value, got {type(value).__name__}")
                )
            kwargs[param_name] = value
        missing = [p.name for p in desc.params if p.required and p.name not in kwargs]
        if missing:
            raise MissingRequiredArg(desc.name, missing)
        return kwargs, tuple(reads), first_input

    def _stage(
        self,
        desc: ToolDescriptor,
        returned: Any,
        output: str | None,
        first_input: tuple[str, ObjectKind] | None,
    ) -> list[tuple[str, ObjectKind, Any]]:
        if desc.wrapper is WrapperKind.GET:
            return []
        result = returned if isinstance(returned, ToolOutput) else ToolOutput(value=returned)
        staged: list[tuple[str, ObjectKind, Any]] = []
        if output and desc.output_kind is not None and result.value is not None:
            kind = desc.output_kind
            if isinstance(result.value, pd.DataFrame) and kind is ObjectKind.TABLE:
                if TRACKING_COLUMN in result.value.columns:
                    kind = ObjectKind.TRAIN_TEST_PAIR
                elif first_input and first_input[1] is ObjectKind.PREDICTION_TABLE:
                    kind = ObjectKind.PREDICTION_TABLE
            staged.append((output, kind, result.value))
        for named in result.named:
            name = f"{output}_{named.suffix}" if named.suffix and output else named.name
            if any(name == existing for existing, _, _ in staged):
                continue
            staged.append((name, named.kind, named.value))
        return staged

    def _success_message(
        self,
        desc: ToolDescriptor,
        call: ToolCall,
        returned: Any,
        staged: list[tuple[str, ObjectKind, Any]],
        value: Any,
    ) -> str:
        message = f"Applied {desc.name} with docstring: {desc.docstring}"
        if isinstance(returned, ToolOutput) and returned.note:
            message += f" {returned.note}"
        message += f" The mapping between the function parameters and the scratchpad keys is {dict(call.bindings)}."
        if staged:
            saved = ", ".join(f"'{name}' ({kind.value})" for name, kind, _ in staged)
            message += f" Saved to the scratchpad: {saved}."
        if desc.wrapper is WrapperKind.GET:
            message += f" Result:\n{render_value(value)}"
        return message
