"""AST for the condition/feature expression language."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TypeAlias

ARITHMETIC_OPS = frozenset({"+", "-", "*", "/"})
COMPARISON_OPS = frozenset({">", ">=", "<", "<=", "==", "!="})
LOGICAL_OPS = frozenset({"and", "or"})
POSTFIX_OPS = frozenset({"notna", "isna"})


@dataclass(frozen=True)
class Column:
    name: str

    def __str__(self) -> str:
        from toolplan.expr.printer import pretty

        return pretty(self)


@dataclass(frozen=True)
class Const:
    """Numeric, string or bool literal. Numeric literals produced by the parser are non-negative."""

    value: int | float | str | bool

    def __str__(self) -> str:
        from toolplan.expr.printer import pretty

        return pretty(self)


@dataclass(frozen=True)
class Unary:
    op: str  # "not" | "-"
    operand: Expr

    def __str__(self) -> str:
        from toolplan.expr.printer import pretty

        return pretty(self)


@dataclass(frozen=True)
class Binary:
    op: str
    left: Expr
    right: Expr

    def __str__(self) -> str:
        from toolplan.expr.printer import pretty

        return pretty(self)


@dataclass(frozen=True)
class Postfix:
    op: str  # "notna" | "isna"
    operand: Expr

    def __str__(self) -> str:
        from toolplan.expr.printer import pretty

        return pretty(self)


Expr: TypeAlias = Column | Const | Unary | Binary | Postfix


def columns_of(expr: Expr) -> list[str]:
    """Referenced column names in first-appearance order."""
    seen: dict[str, None] = {}

    def walk(node: Expr) -> None:
        match node:
            case Column(name):
                seen.setdefault(name, None)
            case Const():
                pass
            case Unary(_, operand) | Postfix(_, operand):
                walk(operand)
            case Binary(_, left, right):
                walk(left)
                walk(right)

    walk(expr)
    return list(seen)
