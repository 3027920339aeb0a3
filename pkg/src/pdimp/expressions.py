"""Formula-defined prediction surfaces, e.g. ``10*sin(pi*x1*x2) + 5*x5``.

A small recursive-descent parser compiles the text to an expression tree
over feature names; evaluation is vectorized over dataset columns. These
oracle models make it possible to test the estimators against surfaces
whose partial dependence is known exactly.

Precedence, loosest to tightest: ``+ -``, ``* /``, unary ``-``, ``^``
(right-associative, so ``2^3^2 == 512`` and ``-2^2 == -4``).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, FeatureSchema
from .errors import ExpressionError
from .models import PredictionModel

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None or match.lastgroup is None:
            at = pos + len(text[pos:]) - len(text[pos:].lstrip())
            if at >= len(text):
                break
            raise ExpressionError(f"unexpected character {text[at]!r} at position {at}", position=at)
        kind = match.lastgroup
        tokens.append((kind, match.group(kind), match.start(kind)))
        pos = match.end()
    return tokens


class _Parser:
    def __init__(self, text: str, variables: set[str]):
        self.text = text
        self.tokens = _tokenize(text)
        self.variables = variables
        self.index = 0

    def peek(self):
        return self.tokens[self.index] if self.index < len(self.tokens) else (None, None, len(self.text))

    def advance(self):
        token = self.peek()
        self.index += 1
        return token

    def expect_op(self, symbol: str):
        kind, value, pos = self.peek()
        if kind != "op" or value != symbol:
            raise ExpressionError(f"expected {symbol!r} at position {pos}", position=pos)
        self.advance()

    def parse(self):
        node = self.expr()
        kind, value, pos = self.peek()
        if kind is not None:
            raise ExpressionError(f"unexpected {value!r} at position {pos}", position=pos)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                node = BinOp(value, node, self.term())
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                node = BinOp(value, node, self.factor())
            else:
                return node

    def factor(self):
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self):
        node = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            return BinOp("^", node, self.factor())
        return node

    def atom(self):
        kind, value, pos = self.advance()
        if kind == "num":
            return Num(float(value))
        if kind == "name":
            next_kind, next_value, _ = self.peek()
            if next_kind == "op" and next_value == "(":
                return self.call(value, pos)
            if value == "pi":
                return Num(math.pi)
            if value not in self.variables:
                raise ExpressionError(
                    f"unknown variable {value!r} at position {pos}", position=pos
                )
            return Var(value)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        shown = "end of input" if kind is None else repr(value)
        raise ExpressionError(f"expected a value, got {shown} at position {pos}", position=pos)

    def call(self, name: str, pos: int):
        if name not in FUNCTIONS:
            raise ExpressionError(f"unknown function {name!r} at position {pos}", position=pos)
        self.expect_op("(")
        args = [self.expr()]
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value == ",":
                self.advance()
                args.append(self.expr())
            else:
                break
        self.expect_op(")")
        if len(args) != 1:
            raise ExpressionError(
                f"function {name!r} takes 1 argument, got {len(args)} at position {pos}",
                position=pos,
            )
        return Call(name, args[0])


def _evaluate(node, columns: dict[str, np.ndarray]):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return columns[node.name]
    if isinstance(node, Neg):
        return -_evaluate(node.operand, columns)
    if isinstance(node, Call):
        return FUNCTIONS[node.fn](_evaluate(node.arg, columns))
    lhs = _evaluate(node.lhs, columns)
    rhs = _evaluate(node.rhs, columns)
    if node.op == "+":
        return lhs + rhs
    if node.op == "-":
        return lhs - rhs
    if node.op == "*":
        return lhs * rhs
    if node.op == "/":
        return lhs / rhs
    return np.power(lhs, rhs)


def _referenced(node, out: set[str]):
    if isinstance(node, Var):
        out.add(node.name)
    elif isinstance(node, Neg):
        _referenced(node.operand, out)
    elif isinstance(node, Call):
        _referenced(node.arg, out)
    elif isinstance(node, BinOp):
        _referenced(node.lhs, out)
        _referenced(node.rhs, out)


class ExpressionModel(PredictionModel):
    """A prediction function given in closed form over a feature schema.

    The model is bound to the full schema it was parsed against, so a
    formula that ignores some features still scores datasets that carry
    them (and those features get a perfectly flat partial dependence).
    """

    def __init__(self, source: str, tree, schema: Sequence[FeatureSchema]):
        self._feature_schema = tuple(schema)
        self.source = source
        self.tree = tree
        self.variables = set()
        _referenced(tree, self.variables)

    def _predict_checked(self, batch: Dataset) -> np.ndarray:
        columns = {name: batch.column(name) for name in self.variables}
        with np.errstate(all="ignore"):
            result = _evaluate(self.tree, columns)
        return np.broadcast_to(np.asarray(result, dtype=np.float64), (batch.n_rows,)).copy()


def parse_expression(text: str, schema: Sequence[FeatureSchema]) -> ExpressionModel:
    """Compile formula text against a schema. Variables must name continuous features."""
    if not text.strip():
        raise ExpressionError("empty expression", position=0)
    continuous = {f.name for f in schema if f.is_continuous}
    tree = _Parser(text, continuous).parse()
    return ExpressionModel(text, tree, schema)
