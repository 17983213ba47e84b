"""Shared plumbing for tool implementations: the `tool` decorator, scratchpad markers and errors."""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Any, TypeVar

import pandas as pd

from toolplan.scratchpad import ObjectKind

F = TypeVar("F", bound=Callable[..., Any])


@dataclass(frozen=True)
class Ref:
    """Annotated marker: the parameter is bound to a scratchpad entry of one of `kinds`."""

    kinds: tuple[ObjectKind, ...]


TABLE = Ref((ObjectKind.TABLE, ObjectKind.TRAIN_TEST_PAIR, ObjectKind.PREDICTION_TABLE))
PAIR = Ref((ObjectKind.TRAIN_TEST_PAIR, ObjectKind.TABLE))
TARGET = Ref((ObjectKind.COLUMN, ObjectKind.TABLE))
MODEL = Ref((ObjectKind.MODEL,))
ANY_DATA = Ref(
    (
        ObjectKind.TABLE,
        ObjectKind.TRAIN_TEST_PAIR,
        ObjectKind.PREDICTION_TABLE,
        ObjectKind.COLUMN,
        ObjectKind.FEATURE_TARGET_SPLIT,
        ObjectKind.METRICS_REPORT,
    )
)


@dataclass(frozen=True)
class ModelSettings:
    defaults: Mapping[str, Any] = field(default_factory=dict)
    grid: Mapping[str, list[Any]] = field(default_factory=dict)


@dataclass(frozen=True)
class ToolEnvironment:
    """Trial context injected into tools that declare an `env` parameter; never exposed to the agent."""

    seed: int = 0
    id_column: str | None = None
    test_ids: pd.Series | None = None
    models: Mapping[str, ModelSettings] = field(default_factory=dict)


@dataclass(frozen=True)
class NamedOutput:
    """An artifact written under a conventional name; `suffix` names it `<output>_<suffix>` when an output is given."""

    name: str
    kind: ObjectKind
    value: Any
    suffix: str | None = None


@dataclass(frozen=True)
class ToolOutput:
    value: Any = None
    note: str = ""
    named: tuple[NamedOutput, ...] = ()


@dataclass(frozen=True)
class ToolFunction:
    name: str
    fn: Callable[..., Any]
    output_kind: ObjectKind | None

    @property
    def doc(self) -> str:
        return self.fn.__doc__ or ""


IMPLEMENTATIONS: dict[str, ToolFunction] = {}


def tool(output: ObjectKind | None = None) -> Callable[[F], F]:
    """Record `fn` under its own name; `output` is the kind written to the pad under the call's output name."""

    def decorator(fn: F) -> F:
        IMPLEMENTATIONS[fn.__name__] = ToolFunction(fn.__name__, fn, output)
        return fn

    return decorator


@dataclass(frozen=True)
class FeatureTargetSplit:
    X: pd.DataFrame
    y: pd.Series | None
    target_column: str
    is_train: bool


class NonNumericForMean(TypeError):
    def __init__(self, column: str, strategy: str, dtype: str):
        self.column = column
        self.strategy = strategy
        super().__init__(f"Cannot fill column {column!r} of dtype {dtype} with its {strategy}: column is not numeric")


class IncompatibleSchemas(ValueError):
    def __init__(self, column: str, left: str, right: str):
        self.column = column
        super().__init__(f"Column {column!r} has incompatible dtypes: {left} vs {right}")


class TrackingColumnMissing(KeyError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(column)

    def __str__(self) -> str:
        return f"Tracking column {self.column!r} not found; was the combined data produced by concatenate_train_test?"


class TargetMissingValues(ValueError):
    def __init__(self) -> None:
        super().__init__("Input y contains NaN.")


class NonNumericFeatures(ValueError):
    def __init__(self, columns: list[str]):
        self.columns = columns
        super().__init__(f"Features must be numeric; non-numeric columns: {columns}")


class NaNInFeatures(ValueError):
    def __init__(self, columns: list[str]):
        self.columns = columns
        super().__init__(f"Input X contains NaN in columns {columns}")


class CvTooLarge(ValueError):
    def __init__(self, cv: int, n_rows: int):
        self.cv = cv
        self.n_rows = n_rows
        super().__init__(f"cv={cv} is invalid for {n_rows} rows; need 2 <= cv <= {n_rows}")


class EmptyGrid(ValueError):
    def __init__(self, tool_name: str):
        self.tool_name = tool_name
        super().__init__(f"No tuning grid configured for {tool_name}")
