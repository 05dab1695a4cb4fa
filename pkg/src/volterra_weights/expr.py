"""Closed-form scalar functions of ``x`` on (0, inf).

Expressions are small immutable trees built either by :func:`parse` or
programmatically through the arithmetic operators. They evaluate on numpy
arrays and differentiate symbolically, so derivatives of any order stay exact.

    >>> e = parse("x^2*log(x)")
    >>> float(evaluate(differentiate(e, 1), 1.0))
    1.0
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np

MAX_NODES = 10_000

# Domain validation samples, see validate().
_CHECK_POINTS = np.logspace(-8, 8, 64)


class ExpressionError(ValueError):
    """Base class for anything wrong with an expression."""


class ParseError(ExpressionError):
    def __init__(self, message: str, source: str, position: int):
        self.source = source
        self.position = position
        super().__init__(f"{message} at position {position} in {source!r}")


class DomainError(ExpressionError):
    """The expression (or the evaluation point) leaves (0, inf)."""


class EvaluationError(ExpressionError):
    """Overflow or NaN while evaluating."""


class ExpressionTooLarge(ExpressionError):
    pass


class Expression:
    """Base node. Subclasses are frozen dataclasses."""

    def __call__(self, x):
        with np.errstate(all="ignore"):
            return self._eval(np.asarray(x, dtype=float))

    def _eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _diff(self) -> Expression:
        raise NotImplementedError

    def children(self) -> tuple[Expression, ...]:
        return ()

    @cached_property
    def size(self) -> int:
        return 1 + sum(c.size for c in self.children())

    @property
    def is_constant(self) -> bool:
        return isinstance(self, Const)

    def depends_on_x(self) -> bool:
        if isinstance(self, Var):
            return True
        return any(c.depends_on_x() for c in self.children())

    # arithmetic goes through the folding constructors below
    def __add__(self, other):
        return add(self, as_expression(other))

    def __radd__(self, other):
        return add(as_expression(other), self)

    def __sub__(self, other):
        return sub(self, as_expression(other))

    def __rsub__(self, other):
        return sub(as_expression(other), self)

    def __mul__(self, other):
        return mul(self, as_expression(other))

    def __rmul__(self, other):
        return mul(as_expression(other), self)

    def __truediv__(self, other):
        return div(self, as_expression(other))

    def __rtruediv__(self, other):
        return div(as_expression(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, float(p))


@dataclass(frozen=True, eq=True)
class Const(Expression):
    value: float

    def _eval(self, x):
        return np.full(np.shape(x), self.value)

    def _diff(self):
        return ZERO

    def __str__(self):
        v = self.value
        if v == int(v) and abs(v) < 1e15:
            s = str(int(v))
        else:
            s = repr(v)
        return f"({s})" if v < 0 else s


@dataclass(frozen=True, eq=True)
class Var(Expression):
    def _eval(self, x):
        return x

    def _diff(self):
        return ONE

    def __str__(self):
        return "x"


@dataclass(frozen=True, eq=True)
class Add(Expression):
    left: Expression
    right: Expression

    def children(self):
        return (self.left, self.right)

    def _eval(self, x):
        return self.left._eval(x) + self.right._eval(x)

    def _diff(self):
        return add(self.left._diff(), self.right._diff())

    def __str__(self):
        return f"({self.left} + {self.right})"


@dataclass(frozen=True, eq=True)
class Sub(Expression):
    left: Expression
    right: Expression

    def children(self):
        return (self.left, self.right)

    def _eval(self, x):
        return self.left._eval(x) - self.right._eval(x)

    def _diff(self):
        return sub(self.left._diff(), self.right._diff())

    def __str__(self):
        return f"({self.left} - {self.right})"


@dataclass(frozen=True, eq=True)
class Mul(Expression):
    left: Expression
    right: Expression

    def children(self):
        return (self.left, self.right)

    def _eval(self, x):
        return self.left._eval(x) * self.right._eval(x)

    def _diff(self):
        a, b = self.left, self.right
        return add(mul(a._diff(), b), mul(a, b._diff()))

    def __str__(self):
        return f"{self.left}*{self.right}"


@dataclass(frozen=True, eq=True)
class Div(Expression):
    left: Expression
    right: Expression

    def children(self):
        return (self.left, self.right)

    def _eval(self, x):
        return self.left._eval(x) / self.right._eval(x)

    def _diff(self):
        a, b = self.left, self.right
        inv = reciprocal(b)
        if not isinstance(inv, Div):
            # powers and exponentials invert in closed form; the product
            # rule then grows the tree far slower than the quotient rule
            return add(mul(a._diff(), inv), mul(a, inv._diff()))
        num = sub(mul(a._diff(), b), mul(a, b._diff()))
        return div(num, power(b, 2.0))

    def __str__(self):
        return f"{self.left}/({self.right})"


@dataclass(frozen=True, eq=True)
class Neg(Expression):
    arg: Expression

    def children(self):
        return (self.arg,)

    def _eval(self, x):
        return -self.arg._eval(x)

    def _diff(self):
        return neg(self.arg._diff())

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True, eq=True)
class Pow(Expression):
    """``base ^ exponent`` with a real constant exponent."""

    base: Expression
    exponent: float

    def children(self):
        return (self.base,)

    def _eval(self, x):
        return np.power(self.base._eval(x), self.exponent)

    def _diff(self):
        p = self.exponent
        return mul(mul(Const(p), power(self.base, p - 1.0)), self.base._diff())

    def __str__(self):
        p = self.exponent
        ps = str(int(p)) if p == int(p) and abs(p) < 1e15 else repr(p)
        base = str(self.base)
        if isinstance(self.base, (Mul, Div, Pow)):
            base = f"({base})"
        return f"{base}^({ps})" if p < 0 or "e" in ps or "." in ps else f"{base}^{ps}"


@dataclass(frozen=True, eq=True)
class Exp(Expression):
    arg: Expression

    def children(self):
        return (self.arg,)

    def _eval(self, x):
        return np.exp(self.arg._eval(x))

    def _diff(self):
        return mul(self, self.arg._diff())

    def __str__(self):
        return f"exp({_strip(self.arg)})"


@dataclass(frozen=True, eq=True)
class Log(Expression):
    arg: Expression

    def children(self):
        return (self.arg,)

    def _eval(self, x):
        return np.log(self.arg._eval(x))

    def _diff(self):
        return div(self.arg._diff(), self.arg)

    def __str__(self):
        return f"log({_strip(self.arg)})"


def _strip(e: Expression) -> str:
    s = str(e)
    if s.startswith("(") and s.endswith(")") and _balanced(s[1:-1]):
        return s[1:-1]
    return s


def _balanced(s: str) -> bool:
    depth = 0
    for ch in s:
        depth += ch == "("
        depth -= ch == ")"
        if depth < 0:
            return False
    return depth == 0


ZERO = Const(0.0)
ONE = Const(1.0)
X = Var()

ExpressionLike = Union[Expression, str, int, float]


# Folding constructors. Only exact rewrites: constant arithmetic and the
# 0/1 identities, so values change by at most one rounding.

def add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    if isinstance(b, Neg):
        return sub(a, b.arg)
    return Add(a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if b == ZERO:
        return a
    if a == ZERO:
        return neg(b)
    return Sub(a, b)


def mul(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    if a == Const(-1.0):
        return neg(b)
    if b == Const(-1.0):
        return neg(a)
    return Mul(a, b)


def div(a: Expression, b: Expression) -> Expression:
    if b == ZERO:
        raise DomainError("division by the constant 0")
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value / b.value)
    if a == ZERO:
        return ZERO
    if b == ONE:
        return a
    return Div(a, b)


def neg(a: Expression) -> Expression:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(base: Expression, p: float) -> Expression:
    p = float(p)
    if p == 0.0:
        return ONE
    if p == 1.0:
        return base
    if isinstance(base, Const):
        with np.errstate(all="ignore"):
            return Const(float(np.power(base.value, p)))
    if isinstance(base, Pow) and p == int(p):
        return Pow(base.base, base.exponent * p)
    return Pow(base, p)


def exp(a: Expression) -> Expression:
    if isinstance(a, Const):
        return Const(math.exp(a.value))
    return Exp(a)


def log(a: Expression) -> Expression:
    if isinstance(a, Const):
        if a.value <= 0:
            raise DomainError(f"log of non-positive constant {a.value}")
        return Const(math.log(a.value))
    return Log(a)


def reciprocal(e: Expression) -> Expression:
    """1/e, pushing the inversion into powers and products."""
    if isinstance(e, Pow):
        return power(e.base, -e.exponent)
    if isinstance(e, Mul):
        return mul(reciprocal(e.left), reciprocal(e.right))
    if isinstance(e, Div):
        return div(e.right, e.left)
    if isinstance(e, Var):
        return Pow(X, -1.0)
    if isinstance(e, Exp):
        return exp(neg(e.arg))
    return div(ONE, e)


def as_expression(obj: ExpressionLike) -> Expression:
    if isinstance(obj, Expression):
        return obj
    if isinstance(obj, str):
        return parse(obj)
    if isinstance(obj, (int, float, np.floating, np.integer)):
        return Const(float(obj))
    raise TypeError(f"cannot make an expression from {type(obj).__name__}")


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)
_FUNCS = {"exp": exp, "log": log}


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(source):
            if source[pos:].strip() == "":
                break
            m = _TOKEN.match(source, pos)
            if not m or m.end() == pos:
                start = pos + len(source[pos:]) - len(source[pos:].lstrip())
                raise ParseError(f"unexpected character {source[start]!r}", source, start)
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("end", "", len(self.source))

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.take()
        if text != value:
            what = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {what}", self.source, pos)

    def parse(self) -> Expression:
        if not self.tokens:
            raise ParseError("empty expression", self.source, 0)
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", self.source, pos)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            _, op, pos = self.take()
            rhs = self.unary()
            if op == "*":
                e = mul(e, rhs)
            else:
                try:
                    e = div(e, rhs)
                except DomainError as exc:
                    raise ParseError(str(exc), self.source, pos) from None
        return e

    def unary(self):
        if self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            e = self.unary()
            return neg(e) if op == "-" else e
        return self.pow()

    def pow(self):
        base = self.atom()
        if self.peek()[1] == "^":
            _, _, pos = self.take()
            # right-associative: the exponent may itself contain ^
            exponent = self.unary()
            if not isinstance(exponent, Const):
                raise ParseError("exponent must be a real constant", self.source, pos)
            return power(base, exponent.value)
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if text == "x":
                return X
            if text in _FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                try:
                    return _FUNCS[text](arg)
                except DomainError as exc:
                    raise ParseError(str(exc), self.source, pos) from None
            raise ParseError(f"unknown identifier {text!r}", self.source, pos)
        if text == "(":
            e = self.expr()
            self.expect(")")
            return e
        what = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {what}", self.source, pos)


def parse(source: str) -> Expression:
    """Parse expression text and validate it on (0, inf).

    Raises ParseError on malformed input and DomainError when a denominator,
    log argument or fractional-power base is detectably invalid.
    """
    e = _Parser(source).parse()
    validate(e)
    return e


def validate(e: Expression) -> None:
    """Reject expressions whose evaluation is undefined somewhere on (0, inf).

    Checked by sampling 64 log-spaced points in [1e-8, 1e8]. A denominator
    that hits 0 or changes sign there is rejected, as is a log argument <= 0
    and a negative base under a fractional power. Overflow to +-inf alone is
    not a domain error.
    """
    for node in _walk(e):
        if isinstance(node, Div):
            _check_nonvanishing(node.right, f"denominator {node.right}")
        elif isinstance(node, Log):
            a = node.arg(_CHECK_POINTS)
            if np.any(a[~np.isnan(a)] <= 0) or np.all(np.isnan(a)):
                raise DomainError(f"log argument {node.arg} is not positive on (0, inf)")
        elif isinstance(node, Pow):
            b = node.base(_CHECK_POINTS)
            p = node.exponent
            if p != int(p) and np.any(b < 0):
                raise DomainError(f"negative base {node.base} under fractional power {p}")
            if p < 0:
                _check_nonvanishing(node.base, f"base {node.base} of a negative power")


_TINY = 1e-290


def _underflows(node: Expression, x_nonzero: float, x_zero: float) -> bool:
    """Whether |node| decays continuously to 0 between the two points.

    Bisects in log x; an expression that merely underflows passes through
    values near the smallest normal float before reaching exactly 0.
    """
    lo, hi = math.log(x_nonzero), math.log(x_zero)
    last = abs(float(node(x_nonzero)))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        with np.errstate(all="ignore"):
            y = abs(float(node(math.exp(mid))))
        if y == 0:
            hi = mid
        elif y > 0:
            lo, last = mid, y
        else:
            return False
        if last < _TINY:
            return True
    return last < _TINY


def _check_nonvanishing(node: Expression, what: str) -> None:
    # NaN samples come from overflow (inf - inf and the like) and are skipped.
    # Zeros running out to an end of the sample range are accepted when they
    # come from underflow (exp(-x) at x = 1e8), not from a root.
    with np.errstate(all="ignore"):
        d = node(_CHECK_POINTS)
    keep = ~np.isnan(d)
    d, xs = d[keep], _CHECK_POINTS[keep]
    nz = np.flatnonzero(d)
    if nz.size == 0:
        raise DomainError(f"{what} vanishes on (0, inf)")
    lo, hi = nz[0], nz[-1]
    bad = np.any(d[lo:hi + 1] == 0) or (np.any(d > 0) and np.any(d < 0))
    if not bad and lo > 0:
        bad = not _underflows(node, xs[lo], xs[lo - 1])
    if not bad and hi < d.size - 1:
        bad = not _underflows(node, xs[hi], xs[hi + 1])
    if bad:
        raise DomainError(f"{what} vanishes or changes sign on (0, inf)")


def _walk(e: Expression):
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(node.children())


# ---------------------------------------------------------- operations

def evaluate(e: ExpressionLike, x):
    """Value of ``e`` at ``x > 0`` (scalar or array)."""
    e = as_expression(e)
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise DomainError(f"expressions are defined for x > 0, got {x}")
    y = e(xa)
    if not np.all(np.isfinite(y)):
        raise EvaluationError(f"{e} is not finite at x = {x}")
    return float(y) if y.ndim == 0 else y


def differentiate(e: ExpressionLike, order: int = 1) -> Expression:
    if order < 0:
        raise ValueError("derivative order must be non-negative")
    e = as_expression(e)
    for _ in range(order):
        e = e._diff()
        if e.size > MAX_NODES:
            raise ExpressionTooLarge(f"derivative exceeds {MAX_NODES} nodes")
    return e


def multiply_by_power(e: ExpressionLike, k: int) -> Expression:
    """e * x^k."""
    if k < 0:
        raise ValueError("k must be non-negative")
    e = as_expression(e)
    if k == 0:
        return e
    return mul(e, power(X, float(k)))


def x_power(p: float) -> Expression:
    return power(X, float(p))
