"""Recursive-descent parser for the expression language.

Precedence, loosest first: ``or`` < ``and`` < ``not`` < comparison < additive < multiplicative
< unary minus < postfix ``.notna()``/``.isna()``. Comparisons do not chain.
"""

from __future__ import annotations

from dataclasses import dataclass

from toolplan.expr.nodes import Binary, Column, Const, Expr, Postfix, Unary

KEYWORDS = frozenset({"and", "or", "not", "True", "False", "true", "false"})


class ExprParseError(ValueError):
    """Raised when an expression cannot be parsed. `position` is a byte offset into the source."""

    def __init__(self, source: str, index: int, expected: frozenset[str], found: str):
        self.source = source
        self.position = len(source[:index].encode("utf-8"))
        self.expected = expected
        self.found = found
        super().__init__(
            f"at byte offset {self.position}: expected {' or '.join(sorted(expected))}, found {found}"
        )


@dataclass(frozen=True)
class _Token:
    kind: str  # "number" | "string" | "name" | "op" | "eos"
    text: str
    value: int | float | str | None
    index: int

    def describe(self) -> str:
        if self.kind == "eos":
            return "end of input"
        return repr(self.text)


class _Input:
    EOS = "\0"

    def __init__(self, text: str):
        self.text = text
        self.index = 0
        self.current = _Input.EOS if not text else text[0]

    def next(self) -> None:
        self.index += 1
        self.current = _Input.EOS if self.index >= len(self.text) else self.text[self.index]

    def peek(self) -> str:
        return _Input.EOS if self.index + 1 >= len(self.text) else self.text[self.index + 1]


_TWO_CHAR_OPS = frozenset({">=", "<=", "==", "!="})
_ONE_CHAR_OPS = frozenset({"+", "-", "*", "/", ">", "<", "(", ")", "."})


def _is_name_start(ch: str) -> bool:
    return ch != _Input.EOS and (ch.isalpha() or ch == "_")


def _is_name_char(ch: str) -> bool:
    return ch != _Input.EOS and (ch.isalnum() or ch == "_")


def _tokenize(source: str) -> list[_Token]:
    input = _Input(source)
    tokens: list[_Token] = []
    while True:
        while input.current != _Input.EOS and input.current.isspace():
            input.next()
        start = input.index
        c = input.current
        if c == _Input.EOS:
            tokens.append(_Token("eos", "", None, start))
            return tokens
        if c.isdigit():
            tokens.append(_scan_number(input, source))
        elif c in {'"', "'"}:
            tokens.append(_scan_string(input, source, quote=c))
        elif c == "`":
            tokens.append(_scan_quoted_name(input, source))
        elif _is_name_start(c):
            while _is_name_char(input.current):
                input.next()
            text = source[start : input.index]
            tokens.append(_Token("name", text, text, start))
        elif c + input.peek() in _TWO_CHAR_OPS:
            input.next()
            input.next()
            tokens.append(_Token("op", source[start : input.index], None, start))
        elif c in _ONE_CHAR_OPS:
            input.next()
            tokens.append(_Token("op", c, None, start))
        else:
            raise ExprParseError(source, start, frozenset({"an operand", "an operator"}), repr(c))


def _scan_digits(input: _Input, source: str) -> None:
    if not input.current.isdigit():
        raise ExprParseError(source, input.index, frozenset({"a digit"}), repr(input.current))
    while input.current != _Input.EOS and input.current.isdigit():
        input.next()


def _scan_number(input: _Input, source: str) -> _Token:
    start = input.index
    is_float = False
    _scan_digits(input, source)
    if input.current == "." and input.peek().isdigit():
        is_float = True
        input.next()
        _scan_digits(input, source)
    if input.current in {"e", "E"}:
        is_float = True
        input.next()
        if input.current in {"+", "-"}:
            input.next()
        _scan_digits(input, source)
    text = source[start : input.index]
    return _Token("number", text, float(text) if is_float else int(text), start)


def _scan_string(input: _Input, source: str, quote: str) -> _Token:
    start = input.index
    input.next()
    chars: list[str] = []
    while input.current != quote:
        if input.current == _Input.EOS:
            raise ExprParseError(source, input.index, frozenset({repr(quote)}), "end of input")
        if input.current == "\\":
            input.next()
            if input.current == _Input.EOS:
                raise ExprParseError(source, input.index, frozenset({"an escaped character"}), "end of input")
        chars.append(input.current)
        input.next()
    input.next()
    return _Token("string", source[start : input.index], "".join(chars), start)


def _scan_quoted_name(input: _Input, source: str) -> _Token:
    start = input.index
    input.next()
    while input.current != "`":
        if input.current == _Input.EOS:
            raise ExprParseError(source, input.index, frozenset({"'`'"}), "end of input")
        input.next()
    name = source[start + 1 : input.index]
    input.next()
    if not name:
        raise ExprParseError(source, start, frozenset({"a column name"}), "'``'")
    return _Token("quoted_name", source[start : input.index], name, start)


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        token = self.tokens[self.pos]
        if token.kind != "eos":
            self.pos += 1
        return token

    def at_op(self, *ops: str) -> bool:
        return self.current.kind == "op" and self.current.text in ops

    def at_keyword(self, word: str) -> bool:
        return self.current.kind == "name" and self.current.text == word

    def fail(self, *expected: str) -> ExprParseError:
        return ExprParseError(self.source, self.current.index, frozenset(expected), self.current.describe())

    def expect_op(self, op: str) -> None:
        if not self.at_op(op):
            raise self.fail(repr(op))
        self.advance()

    def parse(self) -> Expr:
        expr = self.parse_or()
        if self.current.kind != "eos":
            raise self.fail("end of input", "an operator")
        return expr

    def parse_or(self) -> Expr:
        left = self.parse_and()
        while self.at_keyword("or"):
            self.advance()
            left = Binary("or", left, self.parse_and())
        return left

    def parse_and(self) -> Expr:
        left = self.parse_not()
        while self.at_keyword("and"):
            self.advance()
            left = Binary("and", left, self.parse_not())
        return left

    def parse_not(self) -> Expr:
        if self.at_keyword("not"):
            self.advance()
            return Unary("not", self.parse_not())
        return self.parse_comparison()

    def parse_comparison(self) -> Expr:
        left = self.parse_additive()
        if self.at_op(">", ">=", "<", "<=", "==", "!="):
            op = self.advance().text
            return Binary(op, left, self.parse_additive())
        return left

    def parse_additive(self) -> Expr:
        left = self.parse_multiplicative()
        while self.at_op("+", "-"):
            op = self.advance().text
            left = Binary(op, left, self.parse_multiplicative())
        return left

    def parse_multiplicative(self) -> Expr:
        left = self.parse_unary()
        while self.at_op("*", "/"):
            op = self.advance().text
            left = Binary(op, left, self.parse_unary())
        return left

    def parse_unary(self) -> Expr:
        if self.at_op("-"):
            self.advance()
            return Unary("-", self.parse_unary())
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        expr = self.parse_primary()
        while self.at_op("."):
            self.advance()
            token = self.current
            if token.kind != "name" or token.text not in {"notna", "isna"}:
                raise self.fail("'notna'", "'isna'")
            self.advance()
            self.expect_op("(")
            self.expect_op(")")
            expr = Postfix(token.text, expr)
        return expr

    def parse_primary(self) -> Expr:
        token = self.current
        if token.kind == "number" or token.kind == "string":
            self.advance()
            assert token.value is not None
            return Const(token.value)
        if token.kind == "quoted_name":
            self.advance()
            return Column(str(token.value))
        if token.kind == "name":
            if token.text in {"True", "true"}:
                self.advance()
                return Const(True)
            if token.text in {"False", "false"}:
                self.advance()
                return Const(False)
            if token.text not in KEYWORDS:
                self.advance()
                return Column(token.text)
        if self.at_op("("):
            self.advance()
            inner = self.parse_or()
            self.expect_op(")")
            return inner
        raise self.fail("a column", "a literal", "'('", "'-'", "'not'")


def parse(source: str) -> Expr:
    """Parse `source`, consuming all of it."""
    return _Parser(source).parse()
