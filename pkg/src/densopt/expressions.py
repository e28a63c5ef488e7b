"""Tiny arithmetic expression language for config files.

Supports +, -, *, /, ^ (power, right-associative), parentheses, the
functions sin, cos, exp, the constant pi, and the problem variables t and
x (1D) or x1, x2 (2D).  Expressions compile to closures over numpy arrays;
nothing is ever eval()'d.
"""

from __future__ import annotations

import re
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = ["ExpressionError", "Expression", "compile_expression"]

_FUNCTIONS: dict[str, Callable] = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTANTS: dict[str, float] = {"pi": float(np.pi)}

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


class ExpressionError(ValueError):
    """Malformed expression; message carries the offending position."""


class _Tokenizer:
    def __init__(self, src: str):
        self.src = src
        self.pos = 0
        self.current = None
        self.advance()

    def advance(self):
        while self.pos < len(self.src) and self.src[self.pos].isspace():
            self.pos += 1
        if self.pos >= len(self.src):
            self.current = ("end", "")
            return
        m = _TOKEN_RE.match(self.src, self.pos)
        if not m or m.start() != self.pos:
            raise ExpressionError(
                f"unexpected character {self.src[self.pos]!r} at position {self.pos}"
            )
        self.pos = m.end()
        if m.group("number") is not None:
            self.current = ("number", float(m.group("number")))
        elif m.group("name") is not None:
            self.current = ("name", m.group("name"))
        else:
            self.current = ("op", m.group("op"))

    def expect_op(self, op: str):
        if self.current != ("op", op):
            raise ExpressionError(
                f"expected {op!r} near position {self.pos} in {self.src!r}"
            )
        self.advance()


class _Parser:
    """Recursive descent with standard precedence: +,- < *,/ < unary - < ^."""

    def __init__(self, src: str, variables: Sequence[str]):
        self.tok = _Tokenizer(src)
        self.variables = set(variables)

    def parse(self):
        node = self._sum()
        if self.tok.current != ("end", ""):
            raise ExpressionError(
                f"trailing input at position {self.tok.pos} in {self.tok.src!r}"
            )
        return node

    def _sum(self):
        node = self._product()
        while self.tok.current in (("op", "+"), ("op", "-")):
            op = self.tok.current[1]
            self.tok.advance()
            rhs = self._product()
            node = (np.add if op == "+" else np.subtract, node, rhs)
        return node

    def _product(self):
        node = self._unary()
        while self.tok.current in (("op", "*"), ("op", "/")):
            op = self.tok.current[1]
            self.tok.advance()
            rhs = self._unary()
            node = (np.multiply if op == "*" else np.divide, node, rhs)
        return node

    def _unary(self):
        if self.tok.current == ("op", "-"):
            self.tok.advance()
            return (np.negative, self._unary())
        if self.tok.current == ("op", "+"):
            self.tok.advance()
            return self._unary()
        return self._power()

    def _power(self):
        base = self._atom()
        if self.tok.current == ("op", "^"):
            self.tok.advance()
            return (np.power, base, self._unary())
        return base

    def _atom(self):
        kind, value = self.tok.current
        if kind == "number":
            self.tok.advance()
            return ("const", value)
        if kind == "name":
            self.tok.advance()
            if value in _FUNCTIONS:
                self.tok.expect_op("(")
                arg = self._sum()
                self.tok.expect_op(")")
                return (_FUNCTIONS[value], arg)
            if value in _CONSTANTS:
                return ("const", _CONSTANTS[value])
            if value in self.variables:
                return ("var", value)
            raise ExpressionError(
                f"unknown name {value!r}; variables here are "
                f"{sorted(self.variables)} plus pi, sin, cos, exp"
            )
        if self.tok.current == ("op", "("):
            self.tok.advance()
            node = self._sum()
            self.tok.expect_op(")")
            return node
        raise ExpressionError(
            f"unexpected token {value!r} at position {self.tok.pos} in {self.tok.src!r}"
        )


def _evaluate(node, env: Mapping[str, object]):
    tag = node[0]
    if tag == "const":
        return node[1]
    if tag == "var":
        return env[node[1]]
    if len(node) == 2:
        return tag(_evaluate(node[1], env))
    return tag(_evaluate(node[1], env), _evaluate(node[2], env))


class Expression:
    """Compiled expression; call with a variable environment."""

    def __init__(self, source: str, variables: tuple[str, ...], node):
        self.source = source
        self.variables = variables
        self._node = node

    def __call__(self, env: Mapping[str, object]):
        return _evaluate(self._node, env)

    def __repr__(self):
        return f"Expression({self.source!r})"


def compile_expression(src: str, variables: Sequence[str] = ("x", "t")) -> Expression:
    """Parse src into a reusable evaluator over the named variables."""
    if not isinstance(src, str) or not src.strip():
        raise ExpressionError("expression must be a non-empty string")
    node = _Parser(src, variables).parse()
    return Expression(src, tuple(variables), node)
