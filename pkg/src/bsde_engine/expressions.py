"""Tiny arithmetic expression language for config-defined drivers and claims.

Grammar (precedence low to high):

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := unary ("^" factor)?          right-associative power
    unary  := "-" unary | atom
    atom   := NUMBER | NAME | FUNC "(" expr ("," expr)* ")" | "(" expr ")"

Functions: exp, log, max, min, ind (indicator of a strictly positive
argument).  Variables are restricted to a caller-supplied set, so a driver
expression cannot silently reference a claim variable and vice versa.
Evaluation is numpy-vectorised.
"""

from __future__ import annotations

import re
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError

__all__ = ["Expression", "compile_expression"]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)

_FUNCTIONS = {
    "exp": (1, np.exp),
    "log": (1, np.log),
    "max": (2, np.maximum),
    "min": (2, np.minimum),
    "ind": (1, lambda x: np.where(np.asarray(x) > 0, 1.0, 0.0)),
}


def _tokenize(src: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            raise ValidationError(f"bad character in expression at offset {pos}: {src[pos:]!r}")
        if m.lastgroup:
            tokens.append((m.lastgroup, m.group(m.lastgroup)))
        pos = m.end()
    tokens.append(("end", ""))
    return tokens


class _Parser:
    def __init__(self, src: str, variables: Sequence[str]):
        self.src = src
        self.tokens = _tokenize(src)
        self.pos = 0
        self.variables = set(variables)

    def peek(self) -> tuple[str, str]:
        return self.tokens[self.pos]

    def take(self, kind: str, value: str | None = None) -> str:
        k, v = self.tokens[self.pos]
        if k != kind or (value is not None and v != value):
            raise ValidationError(
                f"expected {value or kind} at token {self.pos} in {self.src!r}, got {v!r}"
            )
        self.pos += 1
        return v

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ValidationError(f"trailing input in expression {self.src!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            op = self.take("op")
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            op = self.take("op")
            node = (op, node, self.factor())
        return node

    def factor(self):
        node = self.unary()
        if self.peek() == ("op", "^"):
            self.take("op")
            node = ("^", node, self.factor())
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take("op")
            return ("neg", self.unary())
        return self.atom()

    def atom(self):
        kind, value = self.peek()
        if kind == "num":
            self.take("num")
            return ("const", float(value))
        if kind == "name":
            self.take("name")
            if self.peek() == ("op", "("):
                if value not in _FUNCTIONS:
                    raise ValidationError(f"unknown function {value!r} in {self.src!r}")
                arity, _ = _FUNCTIONS[value]
                self.take("op", "(")
                args = [self.expr()]
                while self.peek() == ("op", ","):
                    self.take("op", ",")
                    args.append(self.expr())
                self.take("op", ")")
                if len(args) != arity:
                    raise ValidationError(
                        f"{value} takes {arity} argument(s), got {len(args)}"
                    )
                return ("call", value, args)
            if value not in self.variables:
                raise ValidationError(
                    f"unknown variable {value!r}; allowed: {sorted(self.variables)}"
                )
            return ("var", value)
        if (kind, value) == ("op", "("):
            self.take("op", "(")
            node = self.expr()
            self.take("op", ")")
            return node
        raise ValidationError(f"unexpected token {value!r} in {self.src!r}")


def _eval(node, env):
    tag = node[0]
    if tag == "const":
        return node[1]
    if tag == "var":
        return env[node[1]]
    if tag == "neg":
        return -_eval(node[1], env)
    if tag == "call":
        _, fn = _FUNCTIONS[node[1]]
        return fn(*[_eval(a, env) for a in node[2]])
    a = _eval(node[1], env)
    b = _eval(node[2], env)
    if tag == "+":
        return a + b
    if tag == "-":
        return a - b
    if tag == "*":
        return a * b
    if tag == "/":
        return a / b
    if tag == "^":
        return np.power(a, b)
    raise AssertionError(f"unhandled node {tag}")


def _collect_vars(node, acc: set) -> None:
    tag = node[0]
    if tag == "var":
        acc.add(node[1])
    elif tag == "neg":
        _collect_vars(node[1], acc)
    elif tag == "call":
        for a in node[2]:
            _collect_vars(a, acc)
    elif tag in ("+", "-", "*", "/", "^"):
        _collect_vars(node[1], acc)
        _collect_vars(node[2], acc)


@dataclass(frozen=True)
class Expression:
    """Compiled expression over a fixed variable set."""

    source: str
    variables: tuple[str, ...]
    used_variables: tuple[str, ...]
    _ast: tuple = field(repr=False)

    def __call__(self, **env):
        missing = set(self.variables) - env.keys()
        if missing:
            raise ValidationError(f"expression {self.source!r} missing {sorted(missing)}")
        return _eval(self._ast, env)


def compile_expression(source: str, variables: Sequence[str]) -> Expression:
    """Parse source against the allowed variable names."""
    if not isinstance(source, str) or not source.strip():
        raise ValidationError("expression must be a non-empty string")
    ast = _Parser(source, variables).parse()
    used: set[str] = set()
    _collect_vars(ast, used)
    return Expression(
        source=source,
        variables=tuple(variables),
        used_variables=tuple(sorted(used)),
        _ast=ast,
    )
