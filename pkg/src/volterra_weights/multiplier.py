"""Pointwise multipliers between weighted Sobolev spaces on (0, inf).

For W^(l)_{2,u} with norm ||f||_{L2(0,1)} + ||f^(l) u||_2, a function phi
multiplies W^(l)_{2,u} into W^(m)_{2,v} (m <= l) iff, for k = 0..l-1,

    condition6:  ||(phi x^k)^(m) v||_2 < inf
    condition7:  sup_r ||(phi x^k)^(m) v||_{L2(r,inf)} ||x^(l-k-1) / u||_{L2(0,r)} < inf

and, when m = l, also condition8: sup |phi v / u| < inf. The link to Volterra
operators comes from differentiating phi*g for g vanishing to order l at 0:
(phi g)^(m) is a kernel-of-degree-(l-1) operator applied to g^(l).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb, factorial
from typing import Optional, Sequence

import numpy as np

from . import quadrature as quad
from .expr import (Const, Expression, ExpressionLike, as_expression, differentiate, mul,
                   multiply_by_power, reciprocal, x_power)
from .hardy import SamplingConfig, SearchConfig, doubling_constant, hardy_constant
from .operator import OperatorSpec, apply

SUP_GRID = np.logspace(-8, 8, 2000)


@dataclass(frozen=True)
class MultiplierProblem:
    phi: Expression
    u: Expression
    v: Expression
    l: int
    m: int
    delta: float = 0.0

    def __post_init__(self):
        for name in ("phi", "u", "v"):
            object.__setattr__(self, name, as_expression(getattr(self, name)))
        if self.l < 1:
            raise ValueError("l must be a positive integer")
        if not 0 <= self.m <= self.l:
            raise ValueError(f"need 0 <= m <= l, got m={self.m}, l={self.l}")

    def derivative_term(self, k: int) -> Expression:
        """(phi x^k)^(m)."""
        return differentiate(multiply_by_power(self.phi, k), self.m)


@dataclass
class ConditionValue:
    k: int
    value: float
    finite: bool


@dataclass
class MultiplierReport:
    cond6: list[ConditionValue]
    cond7: list[ConditionValue]
    cond8: Optional[ConditionValue]
    verdict: bool
    side_conditions: dict = field(default_factory=dict)

    @property
    def hypotheses_hold(self) -> bool:
        """Whether the weights satisfy the hypotheses the characterisation needs."""
        return all(self.side_conditions.values())


def condition6(p: MultiplierProblem, tol: float = 1e-9) -> list[ConditionValue]:
    out = []
    for k in range(p.l):
        g = mul(p.derivative_term(k), p.v)
        res = quad.weighted_l2_norm(g, 0.0, math.inf, tol=tol)
        out.append(ConditionValue(k, res.value, not res.diverges))
    return out


def condition7(p: MultiplierProblem, search: SearchConfig = SearchConfig(),
               tol: float = 1e-9) -> list[ConditionValue]:
    out = []
    for k in range(p.l):
        v1 = mul(p.derivative_term(k), p.v)
        j = p.l - k - 1
        u1 = mul(x_power(-j), p.u) if j else p.u
        res = hardy_constant(v1, u1, search, tol)
        out.append(ConditionValue(k, res.supremum, res.finite))
    return out


def _end_slope(x: np.ndarray, y: np.ndarray) -> float:
    if np.all(y == 0):
        return 0.0
    if np.any(y == 0):
        return -math.inf
    lx = np.log(x) - np.log(x).mean()
    ly = np.log(y)
    return float(np.dot(lx, ly - ly.mean()) / np.dot(lx, lx))


def condition8(p: MultiplierProblem, grid: np.ndarray = SUP_GRID,
               slope_threshold: float = 0.02) -> float:
    """sup |phi v / u| on a log grid, infinite if it grows at either end."""
    h = mul(mul(p.phi, p.v), reciprocal(p.u))
    with np.errstate(all="ignore"):
        y = np.abs(h(grid))
    if np.any(np.isnan(y)):
        raise quad.QuadratureError(f"{h} is undefined on the sampling grid")
    if not np.all(np.isfinite(y)):
        return math.inf
    lo = grid <= grid[0] * 10
    hi = grid >= grid[-1] / 10
    grow_lo = -_end_slope(grid[lo], y[lo])
    grow_hi = _end_slope(grid[hi], y[hi])
    if max(grow_lo, grow_hi) > slope_threshold:
        return math.inf
    return float(y.max())


def side_conditions(p: MultiplierProblem, sampling: SamplingConfig = SamplingConfig()) -> dict:
    """u^-2 in B_delta and v^-1 in L2(0, r) for all r (reported, not enforced)."""
    inv_u = reciprocal(p.u)
    report = doubling_constant(mul(inv_u, inv_u), p.delta, sampling)
    v_inv = quad.weighted_l2_norm(reciprocal(p.v), 0.0, 1.0)
    return {
        "u^-2 in B_delta": report.member,
        "v^-1 in L2(0,r)": not v_inv.diverges,
    }


def multiplier_verdict(p: MultiplierProblem, search: SearchConfig = SearchConfig(),
                       sampling: SamplingConfig = SamplingConfig(),
                       tol: float = 1e-9) -> MultiplierReport:
    c6 = condition6(p, tol)
    c7 = condition7(p, search, tol)
    c8 = None
    if p.m == p.l:
        val = condition8(p)
        c8 = ConditionValue(-1, val, math.isfinite(val))
    verdict = all(c.finite for c in c6 + c7) and (c8 is None or c8.finite)
    return MultiplierReport(c6, c7, c8, verdict, side_conditions(p, sampling))


def operator_from_multiplier(phi: ExpressionLike, l: int, m: int) -> OperatorSpec:
    """Degree l-1 kernel with a_j = C(l-1, k) (-1)^j (phi x^k)^(m) / (l-1)!, j = l-k-1."""
    if l < 1 or not 0 <= m <= l:
        raise ValueError(f"need l >= 1 and 0 <= m <= l, got l={l}, m={m}")
    phi = as_expression(phi)
    coeffs = []
    for j in range(l):
        k = l - 1 - j
        c = comb(l - 1, k) * (-1) ** j / factorial(l - 1)
        coeffs.append(mul(Const(float(c)), differentiate(multiply_by_power(phi, k), m)))
    return OperatorSpec(l - 1, tuple(coeffs))


def lemma2_sides(phi: ExpressionLike, g: ExpressionLike, l: int, m: int,
                 xs: Sequence[float], tol: float = 1e-13) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the identity for (phi g)^(m), g^(k)(0) = 0 for k < l.

    Left: symbolic derivative. Right: the finite sum with moment integrals
    int_0^x (-t)^(l-k-1) g^(l)(t) dt by quadrature, plus phi g^(l) when m = l.
    """
    if l < 1 or not 0 <= m <= l:
        raise ValueError(f"need l >= 1 and 0 <= m <= l, got l={l}, m={m}")
    phi = as_expression(phi)
    g = as_expression(g)
    xs = np.asarray(xs, dtype=float)
    lhs = differentiate(mul(phi, g), m)(xs)
    gl = differentiate(g, l)
    rhs = np.zeros_like(xs)
    if m == l:
        rhs += phi(xs) * gl(xs)
    for k in range(l):
        j = l - k - 1
        coef = differentiate(multiply_by_power(phi, k), m)
        moment = multiply_by_power(gl, j)
        for i, x in enumerate(xs):
            res = quad.integrate_finite(moment, 0.0, float(x), tol=0.0, rtol=tol)
            if res.diverges:
                raise quad.QuadratureError(f"moment of g^({l}) diverges at 0")
            rhs[i] += comb(l - 1, k) * (-1) ** j * float(coef(x)) * res.value / factorial(l - 1)
    return lhs, rhs


def lemma2_residual(phi: ExpressionLike, g: ExpressionLike, l: int, m: int,
                    xs: Sequence[float], tol: float = 1e-13) -> float:
    """max |LHS - RHS| over xs. The caller certifies g^(k)(0) = 0, k < l."""
    lhs, rhs = lemma2_sides(phi, g, l, m, xs, tol)
    return float(np.max(np.abs(lhs - rhs)))


def operator_route(phi: ExpressionLike, g: ExpressionLike, l: int, m: int, x: float,
                   tol: float = 1e-12) -> float:
    """apply(operator_from_multiplier(phi, l, m), g^(l), x) + [m = l] phi(x) g^(l)(x)."""
    phi = as_expression(phi)
    gl = differentiate(as_expression(g), l)
    value = apply(operator_from_multiplier(phi, l, m), gl, x, tol)
    if m == l:
        value += float(phi(x) * gl(x))
    return value
