"""
Tiny expression language for maps and scalar fields.

Grammar (see docs/grammar.md for the full EBNF)::

    map    = "(" expr "," expr "," expr ")"
    expr   = term { ("+" | "-") term }
    term   = unary { ("*" | "/") unary }
    unary  = ("-" | "+") unary | power
    power  = atom [ ("^" | "**") ["-"] integer ]
    atom   = number | name | func "(" expr ")" | "(" expr ")"

There are no conditionals, so every tree has a symbolic derivative.
Evaluation is vectorized: variables are bound to numpy arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ArityError, ParseError, UnknownIdentifierError

FUNCTIONS = ("sin", "cos", "exp", "tanh")
MAP_VARIABLES = ("x", "y", "z")


class Node:
    prec = 5

    def diff(self, var: str) -> "Node":
        raise NotImplementedError

    def evaluate(self, env: dict):
        raise NotImplementedError

    def variables(self) -> set:
        return set()

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Num(Node):
    value: float

    def diff(self, var):
        return ZERO

    def evaluate(self, env):
        return self.value


@dataclass(frozen=True)
class Var(Node):
    name: str

    def diff(self, var):
        return ONE if var == self.name else ZERO

    def evaluate(self, env):
        return env[self.name]

    def variables(self):
        return {self.name}


@dataclass(frozen=True)
class Neg(Node):
    arg: Node
    prec = 3

    def diff(self, var):
        return neg(self.arg.diff(var))

    def evaluate(self, env):
        return -self.arg.evaluate(env)

    def variables(self):
        return self.arg.variables()


@dataclass(frozen=True)
class Binary(Node):
    left: Node
    right: Node
    symbol = "?"

    def variables(self):
        return self.left.variables() | self.right.variables()


class Add(Binary):
    symbol, prec = "+", 1

    def diff(self, var):
        return add(self.left.diff(var), self.right.diff(var))

    def evaluate(self, env):
        return self.left.evaluate(env) + self.right.evaluate(env)


class Sub(Binary):
    symbol, prec = "-", 1

    def diff(self, var):
        return sub(self.left.diff(var), self.right.diff(var))

    def evaluate(self, env):
        return self.left.evaluate(env) - self.right.evaluate(env)


class Mul(Binary):
    symbol, prec = "*", 2

    def diff(self, var):
        a, b = self.left, self.right
        return add(mul(a.diff(var), b), mul(a, b.diff(var)))

    def evaluate(self, env):
        return self.left.evaluate(env) * self.right.evaluate(env)


class Div(Binary):
    symbol, prec = "/", 2

    def diff(self, var):
        a, b = self.left, self.right
        num = sub(mul(a.diff(var), b), mul(a, b.diff(var)))
        return div(num, power(b, 2))

    def evaluate(self, env):
        return self.left.evaluate(env) / self.right.evaluate(env)


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: int
    prec = 4

    def diff(self, var):
        n = self.exponent
        return mul(mul(Num(float(n)), power(self.base, n - 1)), self.base.diff(var))

    def evaluate(self, env):
        b = self.base.evaluate(env)
        if self.exponent < 0:
            return 1.0 / b ** (-self.exponent)
        return b**self.exponent

    def variables(self):
        return self.base.variables()


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node

    def diff(self, var):
        u, du = self.arg, self.arg.diff(var)
        if self.func == "sin":
            outer = Call("cos", u)
        elif self.func == "cos":
            outer = neg(Call("sin", u))
        elif self.func == "exp":
            outer = self
        elif self.func == "tanh":
            outer = sub(ONE, power(self, 2))
        else:  # pragma: no cover - guarded by the parser
            raise ValueError(self.func)
        return mul(outer, du)

    def evaluate(self, env):
        return getattr(np, self.func)(self.arg.evaluate(env))

    def variables(self):
        return self.arg.variables()


ZERO = Num(0.0)
ONE = Num(1.0)


def _is_num(node, value=None):
    return isinstance(node, Num) and (value is None or node.value == value)


# Simplifying constructors; used by differentiation so derivative trees stay small.
def neg(a):
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a, b):
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return Add(a, b)


def sub(a, b):
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a, -1.0):
        return neg(b)
    if _is_num(b, -1.0):
        return neg(a)
    return Mul(a, b)


def div(a, b):
    if _is_num(a, 0.0):
        return ZERO
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b) and b.value != 0.0:
        return Num(a.value / b.value)
    return Div(a, b)


def power(a, n):
    if n == 0:
        return ONE
    if n == 1:
        return a
    if _is_num(a) and not (a.value == 0.0 and n < 0):
        return Num(a.value**n)
    return Pow(a, n)


# ---------------------------------------------------------------- printing


def format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def to_source(node: Node) -> str:
    """Print with the minimal parentheses that parse back to the same tree."""
    if isinstance(node, Num):
        text = format_number(node.value)
        return f"({text})" if node.value < 0 else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    if isinstance(node, Neg):
        inner = to_source(node.arg)
        if node.arg.prec < Neg.prec:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Pow):
        base = to_source(node.base)
        if node.base.prec <= Pow.prec:
            base = f"({base})"
        return f"{base}^{node.exponent}"
    if isinstance(node, Binary):
        left, right = to_source(node.left), to_source(node.right)
        if node.left.prec < node.prec:
            left = f"({left})"
        if node.right.prec <= node.prec:
            right = f"({right})"
        return f"{left} {node.symbol} {right}"
    raise TypeError(node)


# ----------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if not m or m.end() == pos:
            bad = pos + (len(source[pos:]) - len(source[pos:].lstrip()))
            raise ParseError(f"unexpected character {source[bad]!r}", bad, source)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, variables):
        self.source = source
        self.variables = tuple(variables)
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def _error(self, message, tok=None):
        tok = tok or self.tok
        return ParseError(message, tok[2], self.source)

    def accept(self, text):
        if self.tok[0] == "op" and self.tok[1] == text:
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            found = self.tok[1] or "end of input"
            raise self._error(f"expected {text!r}, found {found!r}")

    def expr(self):
        node = self.term()
        while True:
            if self.accept("+"):
                node = Add(node, self.term())
            elif self.accept("-"):
                node = Sub(node, self.term())
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            if self.accept("*"):
                node = Mul(node, self.unary())
            elif self.accept("/"):
                node = Div(node, self.unary())
            else:
                return node

    def unary(self):
        if self.accept("-"):
            return Neg(self.unary())
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.accept("^") or self.accept("**"):
            sign = -1 if self.accept("-") else 1
            kind, text, pos = self.tok
            if kind != "num" or not re.fullmatch(r"\d+", text):
                raise self._error("exponent must be an integer constant")
            self.i += 1
            return Pow(base, sign * int(text))
        return base

    def atom(self):
        kind, text, pos = self.tok
        if kind == "num":
            self.i += 1
            return Num(float(text))
        if kind == "name":
            self.i += 1
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text not in self.variables:
                raise UnknownIdentifierError(text, pos, self.source)
            return Var(text)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        found = text or "end of input"
        raise self._error(f"unexpected token {found!r}")

    def finish(self):
        if self.tok[0] != "end":
            raise self._error(f"unexpected trailing input {self.tok[1]!r}")


def parse_expr(source: str, variables=MAP_VARIABLES) -> Node:
    """Parse a single scalar expression over ``variables``."""
    p = _Parser(source, variables)
    node = p.expr()
    p.finish()
    return node


@dataclass(frozen=True)
class MapExpr:
    """Three component expressions of a map R^3 -> R^3."""

    components: tuple
    variables: tuple = MAP_VARIABLES

    def __post_init__(self):
        if len(self.components) != 3:
            raise ArityError(f"map needs exactly 3 components, got {len(self.components)}")

    def __str__(self):
        return "(" + ", ".join(to_source(c) for c in self.components) + ")"

    def partials(self):
        """3x3 nested tuple of derivative trees, rows = components, cols = x, y, z."""
        return tuple(tuple(c.diff(v) for v in MAP_VARIABLES) for c in self.components)


def parse_map(source: str, variables=MAP_VARIABLES) -> MapExpr:
    p = _Parser(source, variables)
    start = p.tok
    p.expect("(")
    comps = [p.expr()]
    while p.accept(","):
        comps.append(p.expr())
    if p.tok[0] == "end":
        raise ArityError(f"unterminated map; expected ')' after {len(comps)} component(s)",
                         p.tok[2], source)
    p.expect(")")
    p.finish()
    if len(comps) != 3:
        raise ArityError(f"map needs exactly 3 components, got {len(comps)}", start[2], source)
    return MapExpr(tuple(comps), tuple(variables))


def evaluate(node: Node, env: dict, shape) -> np.ndarray:
    """Evaluate and broadcast constants to ``shape``."""
    value = node.evaluate(env)
    return np.broadcast_to(np.asarray(value, dtype=float), shape).copy()
