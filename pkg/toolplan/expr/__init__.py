"""Restricted boolean/arithmetic expression language used by the filter and feature tools."""

from toolplan.expr.evaluate import ExprTypeError as ExprTypeError
from toolplan.expr.evaluate import NonBooleanCondition as NonBooleanCondition
from toolplan.expr.evaluate import eval_mask as eval_mask
from toolplan.expr.evaluate import eval_numeric as eval_numeric
from toolplan.expr.evaluate import infer_type as infer_type
from toolplan.expr.nodes import Binary as Binary
from toolplan.expr.nodes import Column as Column
from toolplan.expr.nodes import Const as Const
from toolplan.expr.nodes import Expr as Expr
from toolplan.expr.nodes import Postfix as Postfix
from toolplan.expr.nodes import Unary as Unary
from toolplan.expr.nodes import columns_of as columns_of
from toolplan.expr.parser import ExprParseError as ExprParseError
from toolplan.expr.parser import parse as parse
from toolplan.expr.printer import pretty as pretty

__all__ = [
    "Binary",
    "Column",
    "Const",
    "Expr",
    "ExprParseError",
    "ExprTypeError",
    "NonBooleanCondition",
    "Postfix",
    "Unary",
    "columns_of",
    "eval_mask",
    "eval_numeric",
    "infer_type",
    "parse",
    "pretty",
]
