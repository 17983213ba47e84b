from __future__ import annotations

import random
from typing import Any

import numpy as np
import pandas as pd
import pytest

from toolplan.expr import (
    Binary,
    Column,
    Const,
    Expr,
    ExprParseError,
    ExprTypeError,
    NonBooleanCondition,
    Postfix,
    Unary,
    columns_of,
    eval_mask,
    eval_numeric,
    infer_type,
    parse,
    pretty,
)
from toolplan.table import UnknownColumn

ROWS = 40


def _frame(seed: int) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    a = pd.array(rng.integers(-3, 6, size=ROWS).astype(float), dtype="Float64")
    b = pd.array(rng.integers(-2, 4, size=ROWS).astype(float) / 2, dtype="Float64")
    flag = pd.array(rng.random(ROWS) < 0.5, dtype="boolean")
    s = pd.array(rng.choice(["x", "y", "z"], size=ROWS), dtype="string")
    a[rng.random(ROWS) < 0.15] = pd.NA
    b[rng.random(ROWS) < 0.15] = pd.NA
    flag[rng.random(ROWS) < 0.15] = pd.NA
    s[rng.random(ROWS) < 0.15] = pd.NA
    return pd.DataFrame({"a": a, "b": b, "flag": flag, "s": s})


def _gen(rng: random.Random, kind: str, depth: int) -> Expr:
    leaf = depth <= 0 or rng.random() < 0.25
    if kind == "num":
        if leaf:
            return rng.choice([Column("a"), Column("b"), Const(rng.randint(0, 5)), Const(rng.choice([0.5, 2.5]))])
        if rng.random() < 0.15:
            return Unary("-", _gen(rng, "num", depth - 1))
        return Binary(rng.choice(["+", "-", "*", "/"]), _gen(rng, "num", depth - 1), _gen(rng, "num", depth - 1))
    if kind == "str":
        return rng.choice([Column("s"), Const(rng.choice(["x", "y", "z"]))])
    if leaf:
        return rng.choice([Column("flag"), Const(True), Const(False)])
    choice = rng.random()
    if choice < 0.3:
        return Binary(rng.choice(["and", "or"]), _gen(rng, "bool", depth - 1), _gen(rng, "bool", depth - 1))
    if choice < 0.4:
        return Unary("not", _gen(rng, "bool", depth - 1))
    if choice < 0.55:
        return Postfix(rng.choice(["notna", "isna"]), _gen(rng, rng.choice(["num", "str", "bool"]), depth - 1))
    operand = rng.choice(["num", "num", "str", "bool"])
    ops = ["==", "!="] if operand == "bool" else [">", ">=", "<", "<=", "==", "!="]
    return Binary(rng.choice(ops), _gen(rng, operand, depth - 1), _gen(rng, operand, depth - 1))


def _cell(value: Any) -> Any:
    return None if value is pd.NA or (isinstance(value, float) and np.isnan(value)) else value


def _scalar(expr: Expr, row: dict[str, Any]) -> Any:
    """Row-at-a-time reference semantics; None is a missing value."""
    match expr:
        case Column(name):
            return _cell(row[name])
        case Const(value):
            return value
        case Unary("not", operand):
            return not bool(_scalar(operand, row))
        case Unary(_, operand):
            value = _scalar(operand, row)
            return None if value is None else -value
        case Postfix(op, operand):
            missing = _scalar(operand, row) is None
            return missing if op == "isna" else not missing
        case Binary(op, left, right):
            lhs, rhs = _scalar(left, row), _scalar(right, row)
            if op == "and":
                return bool(lhs) and bool(rhs)
            if op == "or":
                return bool(lhs) or bool(rhs)
            if op in {"+", "-", "*", "/"}:
                if lhs is None or rhs is None or (op == "/" and rhs == 0):
                    return None
                return {"+": lhs + rhs, "-": lhs - rhs, "*": lhs * rhs, "/": lhs / rhs if rhs else None}[op]
            if lhs is None or rhs is None:
                return False
            return {
                ">": lambda: lhs > rhs,
                ">=": lambda: lhs >= rhs,
                "<": lambda: lhs < rhs,
                "<=": lambda: lhs <= rhs,
                "==": lambda: lhs == rhs,
                "!=": lambda: lhs != rhs,
            }[op]()
    raise AssertionError(expr)


@pytest.mark.parametrize("seed", range(50))
def test_masks_match_scalar_interpreter(seed: int) -> None:
    rng = random.Random(seed)
    df = _frame(seed)
    rows = df.to_dict("records")
    for _ in range(10):
        expr = _gen(rng, "bool", rng.randint(1, 5))
        expected = [bool(_scalar(expr, row)) for row in rows]
        assert eval_mask(expr, df).tolist() == expected, pretty(expr)
        assert parse(pretty(expr)) == expr


@pytest.mark.parametrize("seed", range(10))
def test_numeric_results_match_scalar_interpreter(seed: int) -> None:
    rng = random.Random(1000 + seed)
    df = _frame(seed)
    rows = df.to_dict("records")
    for _ in range(10):
        expr = _gen(rng, "num", rng.randint(0, 4))
        result = eval_numeric(expr, df)
        for got, row in zip(result.tolist(), rows):
            want = _scalar(expr, row)
            if want is None:
                assert got is pd.NA
            else:
                assert got == pytest.approx(want, abs=1e-12)


def test_boolean_conjunction_fixture() -> None:
    expr = parse("col1 > 0 and col2 < 100")
    assert expr == Binary("and", Binary(">", Column("col1"), Const(0)), Binary("<", Column("col2"), Const(100)))
    df = pd.DataFrame(
        {
            "col1": pd.array([1, 0, 5, None], dtype="Int64"),
            "col2": pd.array([50, 50, 150, 10], dtype="Int64"),
        }
    )
    assert eval_mask(expr, df).tolist() == [True, False, False, False]


def test_notna_fixture() -> None:
    expr = parse("Transported.notna()")
    assert expr == Postfix("notna", Column("Transported"))
    df = pd.DataFrame({"Transported": pd.array([True, None, False], dtype="boolean")})
    assert eval_mask(expr, df).tolist() == [True, False, True]


def test_precedence_and_associativity() -> None:
    assert parse("1 + 2 * 3") == Binary("+", Const(1), Binary("*", Const(2), Const(3)))
    assert parse("a - b - c") == Binary("-", Binary("-", Column("a"), Column("b")), Column("c"))
    assert parse("not a > 1 or b") == Binary(
        "or", Unary("not", Binary(">", Column("a"), Const(1))), Column("b")
    )
    assert parse("-x.isna()") == Unary("-", Postfix("isna", Column("x")))


def test_quoted_names_and_strings() -> None:
    expr = parse("`Home Planet` == 'Earth' and `and` != \"x\\\"y\"")
    assert columns_of(expr) == ["Home Planet", "and"]
    assert parse(pretty(expr)) == expr


@pytest.mark.parametrize(
    ("source", "position"),
    [
        ("a >", 3),
        ("a > > 1", 4),
        ("(a", 2),
        ("a.size()", 2),
        ("é > $", 5),
        ("a > 1 < 2", 6),
    ],
)
def test_parse_errors_report_byte_offsets(source: str, position: int) -> None:
    with pytest.raises(ExprParseError) as info:
        parse(source)
    assert info.value.position == position


def test_type_errors() -> None:
    df = pd.DataFrame({"n": [1.0, 2.0], "s": pd.array(["a", "b"], dtype="string")})
    with pytest.raises(ExprTypeError, match="cannot compare num with str"):
        eval_mask(parse("n > s"), df)
    with pytest.raises(NonBooleanCondition):
        eval_mask(parse("n + 1"), df)
    with pytest.raises(ExprTypeError, match="left operand of 'and' must be bool"):
        infer_type(parse("n and n > 1"), df)
    with pytest.raises(UnknownColumn):
        eval_mask(parse("missing > 1"), df)


def test_division_by_zero_is_missing() -> None:
    df = pd.DataFrame({"a": [1.0, 2.0], "b": [0.0, 4.0]})
    result = eval_numeric(parse("a / b"), df)
    assert result.iloc[0] is pd.NA
    assert result.iloc[1] == 0.5
