"""Canonical rendering of expression ASTs; `parse(pretty(e)) == e` for parser-produced trees."""

from __future__ import annotations

import re

from toolplan.expr.nodes import Binary, Column, Const, Expr, Postfix, Unary

_NAME_RE = re.compile(r"^[^\W\d]\w*$")
_RESERVED = frozenset({"and", "or", "not", "True", "False", "true", "false"})

_OR, _AND, _NOT, _CMP, _ADD, _MUL, _NEG, _POSTFIX, _ATOM = range(1, 10)

_BINARY_LEVEL = {
    "or": _OR,
    "and": _AND,
    ">": _CMP,
    ">=": _CMP,
    "<": _CMP,
    "<=": _CMP,
    "==": _CMP,
    "!=": _CMP,
    "+": _ADD,
    "-": _ADD,
    "*": _MUL,
    "/": _MUL,
}


def _level(expr: Expr) -> int:
    match expr:
        case Binary(op, _, _):
            return _BINARY_LEVEL[op]
        case Unary("not", _):
            return _NOT
        case Unary(_, _):
            return _NEG
        case Postfix():
            return _POSTFIX
        case _:
            return _ATOM


def _wrap(expr: Expr, min_level: int) -> str:
    text = pretty(expr)
    return f"({text})" if _level(expr) < min_level else text


def _column(name: str) -> str:
    if _NAME_RE.match(name) and name not in _RESERVED and "`" not in name:
        return name
    return f"`{name}`"


def _const(value: int | float | str | bool) -> str:
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    return repr(value)


def pretty(expr: Expr) -> str:
    match expr:
        case Column(name):
            return _column(name)
        case Const(value):
            return _const(value)
        case Unary("not", operand):
            return f"not {_wrap(operand, _NOT)}"
        case Unary(_, operand):
            return f"-{_wrap(operand, _NEG)}"
        case Postfix(op, operand):
            return f"{_wrap(operand, _POSTFIX)}.{op}()"
        case Binary(op, left, right):
            level = _BINARY_LEVEL[op]
            # comparisons do not chain, so both sides sit strictly above
            left_min = level + 1 if level == _CMP else level
            return f"{_wrap(left, left_min)} {op} {_wrap(right, level + 1)}"
    raise TypeError(f"Not an expression node: {expr!r}")
