"""Vectorized evaluation of expression ASTs against a DataFrame.

Values travel as `_Vector`s: a numpy value array plus a missing mask. Comparisons against a
missing operand are false (never missing); arithmetic propagates missing and division by zero
yields missing. In a logical context a missing bool cell counts as false.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
import pandas as pd

from toolplan.expr.nodes import ARITHMETIC_OPS, COMPARISON_OPS, Binary, Column, Const, Expr, Postfix, Unary
from toolplan.table import ColumnKind, UnknownColumn, column_kind, numeric_values

logger = logging.getLogger(__name__)

ValueType = Literal["num", "bool", "str"]


class ExprTypeError(TypeError):
    """An operator was applied to operands of the wrong type."""

    def __init__(self, node: Expr, detail: str):
        self.node = node
        self.detail = detail
        super().__init__(f"{detail} in expression `{node}`")


class NonBooleanCondition(ExprTypeError):
    def __init__(self, node: Expr, found: ValueType):
        self.found = found
        super().__init__(node, f"condition must evaluate to bool, found {found}")


@dataclass(frozen=True)
class _Vector:
    values: np.ndarray
    missing: np.ndarray
    type: ValueType

    def truthy(self) -> np.ndarray:
        return self.values.astype(bool) & ~self.missing


def _column(df: pd.DataFrame, node: Column) -> _Vector:
    if node.name not in df.columns:
        raise UnknownColumn(node.name, [str(c) for c in df.columns])
    series = df[node.name]
    missing = series.isna().to_numpy(dtype=bool)
    kind = column_kind(series)
    if kind.numeric:
        return _Vector(numeric_values(series), missing, "num")
    if kind is ColumnKind.BOOL:
        values = series.astype("boolean").fillna(False).to_numpy(dtype=bool)
        return _Vector(values, missing, "bool")
    if kind is ColumnKind.DATETIME:
        raise ExprTypeError(node, f"datetime column {node.name!r} is not supported")
    values = np.array(["" if m else str(v) for v, m in zip(series.tolist(), missing)], dtype=object)
    return _Vector(values, missing, "str")


def _const(n_rows: int, value: int | float | str | bool) -> _Vector:
    missing = np.zeros(n_rows, dtype=bool)
    if isinstance(value, bool):
        return _Vector(np.full(n_rows, value, dtype=bool), missing, "bool")
    if isinstance(value, str):
        return _Vector(np.full(n_rows, value, dtype=object), missing, "str")
    return _Vector(np.full(n_rows, float(value), dtype="float64"), missing, "num")


def _require(node: Expr, vector: _Vector, expected: ValueType, role: str) -> None:
    if vector.type != expected:
        raise ExprTypeError(node, f"{role} must be {expected}, found {vector.type}")


def _arithmetic(node: Binary, left: _Vector, right: _Vector) -> _Vector:
    _require(node, left, "num", f"left operand of '{node.op}'")
    _require(node, right, "num", f"right operand of '{node.op}'")
    missing = left.missing | right.missing
    with np.errstate(divide="ignore", invalid="ignore"):
        match node.op:
            case "+":
                values = left.values + right.values
            case "-":
                values = left.values - right.values
            case "*":
                values = left.values * right.values
            case _:
                zero = right.values == 0
                missing = missing | zero
                values = np.divide(left.values, np.where(zero, 1.0, right.values))
    values = np.where(missing, np.nan, values)
    return _Vector(values, missing, "num")


def _comparison(node: Binary, left: _Vector, right: _Vector) -> _Vector:
    if left.type != right.type:
        raise ExprTypeError(node, f"cannot compare {left.type} with {right.type}")
    if left.type == "bool" and node.op not in {"==", "!="}:
        raise ExprTypeError(node, f"operator '{node.op}' is not defined for bool")
    absent = left.missing | right.missing
    # placeholders keep object comparisons well-defined on missing cells
    lhs = np.where(absent, right.values, left.values) if left.type == "str" else left.values
    rhs = right.values
    match node.op:
        case ">":
            result = lhs > rhs
        case ">=":
            result = lhs >= rhs
        case "<":
            result = lhs < rhs
        case "<=":
            result = lhs <= rhs
        case "==":
            result = lhs == rhs
        case _:
            result = lhs != rhs
    values = np.asarray(result, dtype=bool) & ~absent
    return _Vector(values, np.zeros(len(values), dtype=bool), "bool")


def _logical(node: Binary, left: _Vector, right: _Vector) -> _Vector:
    _require(node, left, "bool", f"left operand of '{node.op}'")
    _require(node, right, "bool", f"right operand of '{node.op}'")
    if node.op == "and":
        values = left.truthy() & right.truthy()
    else:
        values = left.truthy() | right.truthy()
    return _Vector(values, np.zeros(len(values), dtype=bool), "bool")


def _eval(expr: Expr, df: pd.DataFrame) -> _Vector:
    match expr:
        case Column():
            return _column(df, expr)
        case Const(value):
            return _const(len(df), value)
        case Unary("not", operand):
            inner = _eval(operand, df)
            _require(expr, inner, "bool", "operand of 'not'")
            return _Vector(~inner.truthy(), np.zeros(len(inner.values), dtype=bool), "bool")
        case Unary(_, operand):
            inner = _eval(operand, df)
            _require(expr, inner, "num", "operand of unary '-'")
            return _Vector(-inner.values, inner.missing, "num")
        case Postfix(op, operand):
            inner = _eval(operand, df)
            values = inner.missing.copy() if op == "isna" else ~inner.missing
            return _Vector(values, np.zeros(len(values), dtype=bool), "bool")
        case Binary(op, left, right):
            lhs = _eval(left, df)
            rhs = _eval(right, df)
            if op in ARITHMETIC_OPS:
                return _arithmetic(expr, lhs, rhs)
            if op in COMPARISON_OPS:
                return _comparison(expr, lhs, rhs)
            return _logical(expr, lhs, rhs)
    raise TypeError(f"Not an expression node: {expr!r}")


def infer_type(expr: Expr, df: pd.DataFrame) -> ValueType:
    """Type-check `expr` against the columns of `df` without keeping the result."""
    return _eval(expr, df.head(0)).type


def eval_mask(expr: Expr, df: pd.DataFrame) -> pd.Series:
    """Row mask where `expr` holds; a missing operand makes the row false."""
    result = _eval(expr, df)
    if result.type != "bool":
        raise NonBooleanCondition(expr, result.type)
    return pd.Series(result.truthy(), index=df.index, dtype=bool)


def eval_numeric(expr: Expr, df: pd.DataFrame) -> pd.Series:
    """Float column computed from `expr`, missing where any operand was missing."""
    result = _eval(expr, df)
    _require(expr, result, "num", "expression")
    values = pd.array(result.values, dtype="Float64")
    values[result.missing] = pd.NA
    logger.debug("Evaluated %s over %d rows (%d missing)", expr, len(df), int(result.missing.sum()))
    return pd.Series(values, index=df.index)
