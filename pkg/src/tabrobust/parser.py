"""Textual constraint language: tokenizer, parser, and formatter.

One constraint per line, `#` comments. Grammar:

    constraint := relation | "if" relation "then" relation
    relation   := expr ("=="|"<="|"<"|">="|">") expr
    expr       := term (("+"|"-") term)*
    term       := factor (("*"|"/") factor)*
    factor     := atom ("^" atom)?
    atom       := number | feature | "log(" expr ")" | "abs(" expr ")"
                | "min(" expr {"," expr} ")" | "max(" expr {"," expr} ")"
                | "(" expr ")"

Numbers may carry a leading minus at atom position. Feature references
are either a declared column name or the canonical F<k> form; both
resolve to integer indices at parse time. `format_constraint` prints
the canonical form, and parse(format(c)) reproduces the tree.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Union

from .data import DatasetSchema
from .expressions import (
    Abs,
    Add,
    And,
    Constant,
    Constraint,
    ConstraintSet,
    Feature,
    Implies,
    Log,
    Max,
    Min,
    Mul,
    NumExpr,
    Or,
    Pow,
    Relation,
    SafeDiv,
    Sub,
)


class ConstraintParseError(ValueError):
    """Syntax or resolution error, carrying 1-based line/column."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>==|<=|>=|<|>|\+|-|\*|/|\^|\(|\)|,)
    """,
    re.VERBOSE,
)

_KEYWORDS = {"if", "then", "log", "abs", "min", "max"}
_FUNCTIONS = {"log": Log, "abs": Abs}


class _Token:
    __slots__ = ("kind", "text", "column")

    def __init__(self, kind: str, text: str, column: int):
        self.kind = kind
        self.text = text
        self.column = column


def _tokenize(text: str, line: int) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ConstraintParseError(
                f"unexpected character {text[pos]!r}", line, pos + 1
            )
        if m.lastgroup != "ws":
            kind = m.lastgroup
            if kind == "name" and m.group() in _KEYWORDS:
                kind = "keyword"
            tokens.append(_Token(kind, m.group(), m.start() + 1))
        pos = m.end()
    tokens.append(_Token("end", "", len(text) + 1))
    return tokens


_MAX_DEPTH = 200


class _Parser:
    def __init__(self, tokens: list[_Token], schema: DatasetSchema, line: int):
        self.tokens = tokens
        self.pos = 0
        self.schema = schema
        self.line = line
        self.depth = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def error(self, message: str) -> ConstraintParseError:
        return ConstraintParseError(message, self.line, self.current.column)

    def advance(self) -> _Token:
        tok = self.current
        self.pos += 1
        return tok

    def expect(self, kind: str, text: Union[str, None] = None) -> _Token:
        tok = self.current
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            got = tok.text if tok.text else "end of input"
            raise self.error(f"expected {want!r}, found {got!r}")
        return self.advance()

    def parse_constraint(self) -> Constraint:
        if self.current.kind == "keyword" and self.current.text == "if":
            self.advance()
            guard = self.parse_relation()
            self.expect("keyword", "then")
            body = self.parse_relation()
            if guard.op == "==":
                raise self.error("equality guards are not supported in implications")
            c: Constraint = Implies(guard, body)
        else:
            c = self.parse_relation()
        if self.current.kind != "end":
            raise self.error(f"unexpected trailing input {self.current.text!r}")
        return c

    def parse_relation(self) -> Relation:
        left = self.parse_expr()
        tok = self.current
        if tok.kind != "op" or tok.text not in ("==", "<=", "<", ">=", ">"):
            got = tok.text if tok.text else "end of input"
            raise self.error(f"expected a relational operator, found {got!r}")
        self.advance()
        right = self.parse_expr()
        return Relation(tok.text, left, right)

    def parse_expr(self) -> NumExpr:
        self.depth += 1
        if self.depth > _MAX_DEPTH:
            raise self.error("expression nested too deeply")
        try:
            node = self.parse_term()
            while self.current.kind == "op" and self.current.text in ("+", "-"):
                op = self.advance().text
                rhs = self.parse_term()
                node = Add(node, rhs) if op == "+" else Sub(node, rhs)
            return node
        finally:
            self.depth -= 1

    def parse_term(self) -> NumExpr:
        node = self.parse_factor()
        while self.current.kind == "op" and self.current.text in ("*", "/"):
            op = self.advance().text
            rhs = self.parse_factor()
            node = Mul(node, rhs) if op == "*" else SafeDiv(node, rhs)
        return node

    def parse_factor(self) -> NumExpr:
        base = self.parse_atom()
        if self.current.kind == "op" and self.current.text == "^":
            self.advance()
            exponent = self.parse_atom()
            return Pow(base, exponent)
        return base

    def parse_atom(self) -> NumExpr:
        tok = self.current
        if tok.kind == "op" and tok.text == "-":
            # Signed literal; no general unary negation in the grammar.
            self.advance()
            num = self.expect("number")
            return Constant(-float(num.text))
        if tok.kind == "number":
            self.advance()
            return Constant(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect("op", ")")
            return node
        if tok.kind == "keyword" and tok.text in _FUNCTIONS:
            self.advance()
            self.expect("op", "(")
            node = self.parse_expr()
            self.expect("op", ")")
            return _FUNCTIONS[tok.text](node)
        if tok.kind == "keyword" and tok.text in ("min", "max"):
            self.advance()
            self.expect("op", "(")
            args = [self.parse_expr()]
            while self.current.kind == "op" and self.current.text == ",":
                self.advance()
                args.append(self.parse_expr())
            self.expect("op", ")")
            return Min(tuple(args)) if tok.text == "min" else Max(tuple(args))
        if tok.kind == "name":
            self.advance()
            try:
                idx = self.schema.resolve(tok.text)
            except KeyError:
                raise ConstraintParseError(
                    f"unknown feature name {tok.text!r}", self.line, tok.column
                ) from None
            return Feature(idx)
        got = tok.text if tok.text else "end of input"
        raise self.error(f"expected a value, found {got!r}")


def parse_constraint(
    text: str, schema: DatasetSchema, line: int = 1
) -> Constraint:
    """Parse a single constraint line against a schema."""
    tokens = _tokenize(text, line)
    return _Parser(tokens, schema, line).parse_constraint()


def parse_expression(text: str, schema: DatasetSchema, line: int = 1) -> NumExpr:
    """Parse a bare numeric expression (no relational operator)."""
    parser = _Parser(_tokenize(text, line), schema, line)
    node = parser.parse_expr()
    if parser.current.kind != "end":
        raise parser.error(f"unexpected trailing input {parser.current.text!r}")
    return node


def load_constraints(
    path: Union[str, Path], schema: DatasetSchema
) -> ConstraintSet:
    """Read a constraint file: one constraint per line, `#` comments."""
    cs = ConstraintSet()
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cs.add(parse_constraint(line, schema, line=lineno), source=line)
    return cs


def save_constraints(cs: ConstraintSet, path: Union[str, Path]) -> None:
    lines = [format_constraint(c) for c in cs]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


# Binding strengths for the precedence-aware printer.
_PREC_ADD = 1
_PREC_MUL = 2
_PREC_POW = 3
_PREC_ATOM = 4


def _format_expr(expr: NumExpr) -> tuple[str, int]:
    """Render an expression, returning (text, precedence of its root)."""
    if isinstance(expr, Constant):
        text = repr(float(expr.value))
        return text, _PREC_ATOM
    if isinstance(expr, Feature):
        return f"F{expr.index}", _PREC_ATOM
    if isinstance(expr, (Add, Sub)):
        op = "+" if isinstance(expr, Add) else "-"
        left = _wrap(expr.left, _PREC_ADD)
        right = _wrap(expr.right, _PREC_ADD, right_side=True)
        return f"{left} {op} {right}", _PREC_ADD
    if isinstance(expr, (Mul, SafeDiv)):
        op = "*" if isinstance(expr, Mul) else "/"
        left = _wrap(expr.left, _PREC_MUL)
        right = _wrap(expr.right, _PREC_MUL, right_side=True)
        return f"{left} {op} {right}", _PREC_MUL
    if isinstance(expr, Pow):
        # Grammar allows only atoms on both sides of ^.
        base = _wrap(expr.base, _PREC_ATOM)
        exponent = _wrap(expr.exponent, _PREC_ATOM)
        return f"{base} ^ {exponent}", _PREC_POW
    if isinstance(expr, Log):
        return f"log({_format_expr(expr.arg)[0]})", _PREC_ATOM
    if isinstance(expr, Abs):
        return f"abs({_format_expr(expr.arg)[0]})", _PREC_ATOM
    if isinstance(expr, (Min, Max)):
        name = "min" if isinstance(expr, Min) else "max"
        inner = ", ".join(_format_expr(a)[0] for a in expr.args)
        return f"{name}({inner})", _PREC_ATOM
    raise TypeError(f"unknown expression node {type(expr).__name__}")


def _wrap(expr: NumExpr, parent_prec: int, right_side: bool = False) -> str:
    text, prec = _format_expr(expr)
    if prec < parent_prec or (right_side and prec == parent_prec):
        return f"({text})"
    return text


def format_expression(expr: NumExpr) -> str:
    return _format_expr(expr)[0]


def format_constraint(c: Constraint) -> str:
    """Render a constraint in the textual grammar (canonical F<k> names).

    And/Or nodes have no textual form and raise ValueError.
    """
    if isinstance(c, Relation):
        return f"{format_expression(c.left)} {c.op} {format_expression(c.right)}"
    if isinstance(c, Implies):
        if not isinstance(c.body, Relation):
            raise ValueError("only relation bodies can be formatted in if/then")
        return f"if {format_constraint(c.guard)} then {format_constraint(c.body)}"
    if isinstance(c, (And, Or)):
        raise ValueError(
            "And/Or constraints have no textual form; store them as separate lines"
        )
    raise TypeError(f"unknown constraint node {type(c).__name__}")
