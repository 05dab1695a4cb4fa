"""Adaptive quadrature on (a, b) and (a, inf) with divergence diagnosis.

The workhorse is :func:`integrate_batch`, a vectorised global-adaptive
Gauss-Kronrod (7/15) scheme that refines many independent intervals at once.
Everything else in the package (norm profiles, doubling ratios, moment
matrices) funnels through it.

Infinite integrals are recognised before any adaptive work is spent on them:
the integrand is integrated over dyadic shells towards the singular end and
the log-log slope of the shell contributions decides finite vs divergent.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .expr import Expression, ExpressionLike, as_expression

DEFAULT_TOL = 1e-9
MAX_SUBINTERVALS = 10_000
SHELLS = 40
SHELL_FIT = 10
DIVERGENCE_SLOPE = -0.05
# substitute x = s^2 at a = 0 when |f(1e-12)| exceeds this
SINGULAR_MAGNITUDE = 1e6

_EPS = np.finfo(float).eps

# Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KRONROD = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GAUSS = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod nodes (+-0.949, +-0.742, +-0.406, 0)
_GAUSS[[1, 3, 5]] = _WG[:3]
_GAUSS[[13, 11, 9]] = _WG[:3]
_GAUSS[7] = _WG[3]


class Status(str, enum.Enum):
    CONVERGED = "converged"
    DIVERGES = "diverges"
    MAX_SUBDIVISIONS = "max_subdivisions"


class QuadratureError(RuntimeError):
    """The integrand produced NaN or overflowed inside the interval."""


@dataclass(frozen=True)
class IntegralResult:
    value: float
    error_estimate: float
    status: Status
    growth_exponent: Optional[float] = None
    subintervals: int = 0

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    @property
    def diverges(self) -> bool:
        return self.status is Status.DIVERGES


Integrand = Callable[[np.ndarray], np.ndarray]


def _as_integrand(f) -> Integrand:
    if isinstance(f, (Expression, str, int, float)):
        e = as_expression(f)
        return e.__call__
    return f


def _gk15(fn: Integrand, lo: np.ndarray, hi: np.ndarray, origin=None, scale=None):
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = center[:, None] + half[:, None] * _NODES[None, :]
    with np.errstate(all="ignore"):
        if origin is None:
            fx = np.asarray(fn(x.ravel()), dtype=float).reshape(x.shape)
        else:
            xs = origin[:, None] + scale[:, None] * x
            fx = np.asarray(fn(xs.ravel()), dtype=float).reshape(x.shape) * scale[:, None]
        k = half * (fx @ _KRONROD)
        g = half * (fx @ _GAUSS)
        resabs = np.abs(half) * (np.abs(fx) @ _KRONROD)
    ok = np.all(np.isfinite(fx), axis=1)
    return k, np.abs(k - g), resabs, ok


@dataclass
class BatchResult:
    values: np.ndarray
    errors: np.ndarray
    status: np.ndarray  # 0 converged, 1 budget/roundoff exhausted, 2 non-finite
    subintervals: np.ndarray


def integrate_batch(fn: Integrand, a, b, tol: float = DEFAULT_TOL, rtol: float = 0.0,
                    limit: int = MAX_SUBINTERVALS, origin=None, scale=None) -> BatchResult:
    """Integrate ``fn`` over each finite interval (a[i], b[i]) adaptively.

    Interval i is accepted once its summed error estimate is at most
    ``max(tol, rtol*|I_i|, 50*eps*I_abs_i)``; the last term is the roundoff
    floor of the rule, below which bisection cannot make progress.

    With ``origin`` and ``scale`` the integration variable is local:
    x = origin[i] + scale[i]*t for t in (a[i], b[i]). Use this when the
    interval is short compared with its distance from 0.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.broadcast_to(np.asarray(b, dtype=float), a.shape).copy()
    n = a.size
    if origin is not None:
        origin = np.broadcast_to(np.asarray(origin, dtype=float), a.shape)
        scale = np.broadcast_to(np.asarray(scale, dtype=float), a.shape)
    owner = np.arange(n)
    lo, hi = a.copy(), b.copy()

    def rule(lo, hi, owner):
        if origin is None:
            return _gk15(fn, lo, hi)
        return _gk15(fn, lo, hi, origin[owner], scale[owner])

    val, err, absv, ok = rule(lo, hi, owner)
    status = np.zeros(n, dtype=int)
    status[~ok] = 2
    done = ~ok
    while True:
        tot = np.bincount(owner, val, minlength=n)
        tot_err = np.bincount(owner, err, minlength=n)
        tot_abs = np.bincount(owner, absv, minlength=n)
        count = np.bincount(owner, minlength=n)
        target = np.maximum(np.maximum(tol, rtol * np.abs(tot)), 50 * _EPS * tot_abs)
        active = (tot_err > target) & ~done
        over = active & (count >= limit)
        status[over] = 1
        done |= over
        active &= ~over
        if not active.any():
            break
        width_ok = (hi - lo) > 8 * _EPS * np.maximum(np.abs(lo), np.abs(hi))
        split = active[owner] & (err > (target / count)[owner]) & width_ok
        stalled = active & (np.bincount(owner, split, minlength=n) == 0)
        status[stalled] = 1
        done |= stalled
        if not split.any():
            break
        mid = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        new_owner = np.concatenate([owner[split], owner[split]])
        v2, e2, a2, ok2 = rule(new_lo, new_hi, new_owner)
        bad = np.unique(new_owner[~ok2])
        status[bad] = 2
        done[bad] = True
        keep = ~split
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        owner = np.concatenate([owner[keep], new_owner])
        val = np.concatenate([val[keep], v2])
        err = np.concatenate([err[keep], e2])
        absv = np.concatenate([absv[keep], a2])
    return BatchResult(
        values=np.bincount(owner, val, minlength=n),
        errors=np.bincount(owner, err, minlength=n),
        status=status,
        subintervals=np.bincount(owner, minlength=n),
    )


def _shell_slope(increments: np.ndarray, log_scale: np.ndarray) -> float:
    """Least-squares log-log slope of the last shells; +inf on overflow."""
    tail = np.abs(increments[-SHELL_FIT:])
    if not np.all(np.isfinite(tail)):
        return math.inf
    if np.any(tail == 0):
        return -math.inf
    y = np.log(tail)
    t = log_scale[-SHELL_FIT:]
    t = t - t.mean()
    return float(np.dot(t, y - y.mean()) / np.dot(t, t))


def tail_growth(fn: Integrand, a: float) -> float:
    """Growth exponent of the shell contributions over (a 2^(j-1), a 2^j).

    For f ~ x^p this is p + 1. A value above -0.05 signals divergence at inf.
    """
    j = np.arange(1, SHELLS + 1)
    lo = a * 2.0 ** (j - 1)
    hi = a * 2.0 ** j
    res = integrate_batch(fn, lo, hi, tol=0.0, rtol=1e-6, limit=200)
    inc = np.where(res.status == 2, np.inf, res.values)
    return _shell_slope(inc, np.log(hi))


def zero_growth(fn: Integrand, b: float) -> float:
    """Growth exponent of shell contributions over (b 2^-j, b 2^(1-j)) as j grows.

    Measured against log(1/x); for f ~ x^p it is -(p + 1). Above -0.05 the
    integral diverges at 0.
    """
    j = np.arange(1, SHELLS + 1)
    lo = b * 2.0 ** (-j)
    hi = b * 2.0 ** (1 - j)
    res = integrate_batch(fn, lo, hi, tol=0.0, rtol=1e-6, limit=200)
    inc = np.where(res.status == 2, np.inf, res.values)
    return _shell_slope(inc, -np.log(lo))


def _result(value, err, status_code, n_sub, tol_status=None) -> IntegralResult:
    if status_code == 2:
        raise QuadratureError("integrand is not finite inside the integration interval")
    status = Status.CONVERGED if status_code == 0 else Status.MAX_SUBDIVISIONS
    return IntegralResult(float(value), float(err), status, None, int(n_sub))


def _diverged(fn: Integrand, probe_point: float, growth: float) -> IntegralResult:
    with np.errstate(all="ignore"):
        sign = np.sign(fn(np.array([probe_point]))[0]) or 1.0
    return IntegralResult(float(sign * math.inf), math.inf, Status.DIVERGES, float(growth), 0)


def integrate_finite(f, a: float, b: float, tol: float = DEFAULT_TOL,
                     rtol: float = 0.0) -> IntegralResult:
    """Integral of ``f`` over (a, b), 0 <= a < b < inf.

    ``a = 0`` stands for the limit a -> 0: the integral is checked for
    divergence at the origin and, if the integrand is large there, computed
    after the substitution x = s^2.
    """
    if not (0 <= a < b < math.inf):
        raise ValueError(f"need 0 <= a < b < inf, got ({a}, {b})")
    fn = _as_integrand(f)
    if a == 0:
        growth = zero_growth(fn, b)
        if growth > DIVERGENCE_SLOPE:
            return _diverged(fn, b * 2.0 ** -SHELLS, growth)
        with np.errstate(all="ignore"):
            near_zero = abs(fn(np.array([1e-12]))[0])
        if not (near_zero <= SINGULAR_MAGNITUDE):

            def g(s, fn=fn):
                with np.errstate(all="ignore"):
                    x = s * s
                    y = fn(x) * 2.0 * s
                # s^2 underflowed to 0: the piece below the smallest float is dropped
                return np.where(x == 0, 0.0, y)

            res = integrate_batch(g, 0.0, math.sqrt(b), tol, rtol)
            return _result(res.values[0], res.errors[0], res.status[0], res.subintervals[0])
    res = integrate_batch(fn, a, b, tol, rtol)
    return _result(res.values[0], res.errors[0], res.status[0], res.subintervals[0])


def tail_integrand(fn: Integrand, a: float) -> Integrand:
    """Integrand on s in (0, 1) equal to ``fn`` over (a, inf) under x = a/s.

    This is x = a + a*t/(1-t) written in s = 1 - t, which keeps the
    singular end at s = 0 where floating point resolves it.
    """

    def g(s):
        with np.errstate(all="ignore"):
            x = a / s
            y = fn(x) * x / s
        # x beyond the float range: that piece of the tail is below resolution
        return np.where(np.isinf(x), 0.0, y)

    return g


def integrate_tail(f, a: float, tol: float = DEFAULT_TOL, rtol: float = 0.0) -> IntegralResult:
    """Integral of ``f`` over (a, inf), a > 0."""
    if not (0 < a < math.inf):
        raise ValueError(f"need 0 < a < inf, got {a}")
    fn = _as_integrand(f)
    growth = tail_growth(fn, a)
    if growth > DIVERGENCE_SLOPE:
        return _diverged(fn, a * 2.0 ** SHELLS, growth)
    res = integrate_batch(tail_integrand(fn, a), 0.0, 1.0, tol, rtol)
    return _result(res.values[0], res.errors[0], res.status[0], res.subintervals[0])


def integrate(f, a: float, b: float, tol: float = DEFAULT_TOL, rtol: float = 0.0) -> IntegralResult:
    """Integral over (a, b) for 0 <= a < b <= inf, splitting (0, inf) at 1."""
    if b == math.inf:
        if a > 0:
            return integrate_tail(f, a, tol, rtol)
        head = integrate_finite(f, 0.0, 1.0, tol / 2, rtol)
        tail = integrate_tail(f, 1.0, tol / 2, rtol)
        return _combine(head, tail)
    return integrate_finite(f, a, b, tol, rtol)


def _combine(p: IntegralResult, q: IntegralResult) -> IntegralResult:
    if p.diverges or q.diverges:
        g = p.growth_exponent if p.diverges else q.growth_exponent
        v = p.value if p.diverges else q.value
        return IntegralResult(v, math.inf, Status.DIVERGES, g, 0)
    status = Status.CONVERGED if p.converged and q.converged else Status.MAX_SUBDIVISIONS
    return IntegralResult(p.value + q.value, p.error_estimate + q.error_estimate, status,
                          None, p.subintervals + q.subintervals)


def weighted_l2_norm(g: ExpressionLike, a: float, b: float, tol: float = DEFAULT_TOL,
                     rtol: float = 0.0) -> IntegralResult:
    """L2 norm of ``g`` over (a, b); ``b`` may be inf and ``a`` may be 0."""
    if not a < b:
        raise ValueError(f"need a < b, got ({a}, {b})")
    fn = _as_integrand(g)

    def sq(x):
        y = fn(x)
        return y * y

    res = integrate(sq, a, b, tol, rtol)
    return sqrt_result(res)


def sqrt_result(res: IntegralResult) -> IntegralResult:
    if res.diverges:
        return IntegralResult(math.inf, math.inf, res.status, res.growth_exponent, 0)
    value = math.sqrt(max(res.value, 0.0))
    # first-order propagation through the square root
    err = res.error_estimate / (2 * value) if value > 0 else math.sqrt(res.error_estimate)
    return IntegralResult(value, err, res.status, None, res.subintervals)
