"""Weighted Hardy criterion, the s_k functionals and the doubling class B_delta.

For weights ``v1`` and ``u1`` the Hardy inequality

    || v1(x) * int_0^x f ||_2 <= C || u1 f ||_2

holds iff ``sup_r F(r) < inf`` with ``F(r) = ||v1||_{L2(r,inf)} ||1/u1||_{L2(0,r)}``.
``s_k`` is this supremum for ``v1 = a_k v`` and ``u1 = x^-k u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import quadrature as quad
from .expr import ExpressionLike, as_expression, mul, reciprocal, x_power

GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class SearchConfig:
    r_min: float = 1e-6
    r_max: float = 1e6
    n_r: int = 200
    golden_iterations: int = 40
    slope_threshold: float = 0.02


@dataclass(frozen=True)
class SamplingConfig:
    center_min: float = 1e-6
    center_max: float = 1e6
    n_centers: int = 60
    length_min: float = 1e-8
    length_max: float = 1e6
    n_lengths: int = 60
    edge: float = 1e-12
    cap: float = 1e6


@dataclass
class HardyResult:
    """Profile of F(r) on the search grid and its supremum.

    ``boundary_slopes`` are log-log growth rates of F towards r -> 0 and
    r -> inf (positive means F grows as r leaves the grid).
    """

    profile: list[tuple[float, float]]
    supremum: float
    argmax_r: Optional[float]
    verdict: str
    boundary_slopes: tuple[float, float]
    reason: str = ""

    @property
    def finite(self) -> bool:
        return self.verdict == "finite"


@dataclass
class DoublingReport:
    constant_estimate: float
    delta: float
    member: bool
    worst_interval: tuple[float, float]
    evidence: list[tuple[float, float, float]] = field(default_factory=list)
    skipped: int = 0


def _squared(e):
    def f(x):
        y = e(x)
        return y * y

    return f


def _factor_tol(tol: float) -> float:
    # relative accuracy per squared factor; F = sqrt(head * tail)
    return tol / 10


def hardy_profile(v1: ExpressionLike, u1: ExpressionLike, r: float, tol: float = 1e-9) -> float:
    """F(r) = ||v1||_{L2(r,inf)} * ||1/u1||_{L2(0,r)}; inf if either factor diverges."""
    v1 = as_expression(v1)
    w = reciprocal(as_expression(u1))
    rt = _factor_tol(tol)
    tail = quad.integrate_tail(_squared(v1), r, tol=0.0, rtol=rt)
    head = quad.integrate_finite(_squared(w), 0.0, r, tol=0.0, rtol=rt)
    if tail.diverges or head.diverges:
        return math.inf
    return math.sqrt(tail.value * head.value)


def _end_slope(logr: np.ndarray, F: np.ndarray) -> float:
    """d log F / d log r by least squares; zeros mean decay, slope -inf."""
    if np.all(F == 0):
        return 0.0
    if np.any(F == 0):
        return -math.inf
    y = np.log(F)
    t = logr - logr.mean()
    return float(np.dot(t, y - y.mean()) / np.dot(t, t))


def hardy_constant(v1: ExpressionLike, u1: ExpressionLike, search: SearchConfig = SearchConfig(),
                   tol: float = 1e-9) -> HardyResult:
    """Supremum over r > 0 of the Hardy profile F(r).

    ``tol`` is a relative accuracy target for F. The supremum is searched on
    a log grid, refined by golden section around the best grid point, and
    declared infinite if F grows at either end of the grid faster than
    ``search.slope_threshold`` in log-log terms.
    """
    v1 = as_expression(v1)
    w = reciprocal(as_expression(u1))
    tail_f = _squared(v1)
    head_f = _squared(w)
    rt = _factor_tol(tol)
    r = np.logspace(math.log10(search.r_min), math.log10(search.r_max), search.n_r)

    head0 = quad.integrate_finite(head_f, 0.0, r[0], tol=0.0, rtol=rt)
    tail_end = quad.integrate_tail(tail_f, r[-1], tol=0.0, rtol=rt)
    if head0.diverges or tail_end.diverges:
        which = "||1/u1||_L2(0,r)" if head0.diverges else "||v1||_L2(r,inf)"
        profile = [(float(ri), math.inf) for ri in r]
        return HardyResult(profile, math.inf, None, "infinite", (math.inf, math.inf),
                           reason=f"{which} diverges for every r")

    head_seg = quad.integrate_batch(head_f, r[:-1], r[1:], tol=0.0, rtol=rt)
    tail_seg = quad.integrate_batch(tail_f, r[:-1], r[1:], tol=0.0, rtol=rt)
    if np.any(head_seg.status == 2) or np.any(tail_seg.status == 2):
        raise quad.QuadratureError("weight is not finite on the search grid")
    head = head0.value + np.concatenate([[0.0], np.cumsum(head_seg.values)])
    tail = tail_end.value + np.concatenate([np.cumsum(tail_seg.values[::-1])[::-1], [0.0]])
    F = np.sqrt(head * tail)
    profile = [(float(ri), float(fi)) for ri, fi in zip(r, F)]

    logr = np.log(r)
    lo_mask = r <= r[0] * 10
    hi_mask = r >= r[-1] / 10
    slopes = (-_end_slope(logr[lo_mask], F[lo_mask]), _end_slope(logr[hi_mask], F[hi_mask]))
    if max(slopes) > search.slope_threshold:
        side = "r -> 0" if slopes[0] > search.slope_threshold else "r -> inf"
        return HardyResult(profile, math.inf, None, "infinite", slopes,
                           reason=f"F grows as {side}")

    i = int(np.argmax(F))
    best_r, best_F = float(r[i]), float(F[i])
    if best_F > 0:
        lo_i, hi_i = max(i - 1, 0), min(i + 1, len(r) - 1)
        # F(s) on the bracket, anchored to cumulative sums at its ends
        h_lo, t_hi = head[lo_i], tail[hi_i]
        r_lo, r_hi = r[lo_i], r[hi_i]

        def F_at(s):
            if s <= r_lo or s >= r_hi:
                return float(F[lo_i] if s <= r_lo else F[hi_i])
            res = quad.integrate_batch(head_f, [r_lo], [s], tol=0.0, rtol=rt)
            rest = quad.integrate_batch(tail_f, [s], [r_hi], tol=0.0, rtol=rt)
            return math.sqrt((h_lo + res.values[0]) * (t_hi + rest.values[0]))

        a, b = math.log(r_lo), math.log(r_hi)
        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        fc, fd = F_at(math.exp(c)), F_at(math.exp(d))
        for _ in range(search.golden_iterations):
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - GOLDEN * (b - a)
                fc = F_at(math.exp(c))
            else:
                a, c, fc = c, d, fd
                d = a + GOLDEN * (b - a)
                fd = F_at(math.exp(d))
        s, fs = (c, fc) if fc >= fd else (d, fd)
        if fs > best_F:
            best_r, best_F = math.exp(s), fs
    return HardyResult(profile, best_F, best_r, "finite", slopes)


def s_k(u: ExpressionLike, v: ExpressionLike, a_k: ExpressionLike, k: int,
        search: SearchConfig = SearchConfig(), tol: float = 1e-9) -> HardyResult:
    """s_k = sup_r ||a_k v||_{L2(r,inf)} * ||x^k / u||_{L2(0,r)}."""
    v1, u1 = hardy_weights(u, v, a_k, k)
    return hardy_constant(v1, u1, search, tol)


def hardy_weights(u: ExpressionLike, v: ExpressionLike, a_k: ExpressionLike, k: int):
    """The substitution f1 = x^k f, u1 = x^-k u, v1 = a_k v."""
    if k < 0:
        raise ValueError("k must be non-negative")
    v1 = mul(as_expression(a_k), as_expression(v))
    u1 = mul(x_power(-k), as_expression(u)) if k else as_expression(u)
    return v1, u1


# ------------------------------------------------------------ doubling

def doubling_constant(w: ExpressionLike, delta: float = 0.0,
                      sampling: SamplingConfig = SamplingConfig()) -> DoublingReport:
    """Estimate the doubling constant of ``w`` over intervals of length >= delta.

    Samples intervals (c - L/2, c + L/2) inside (0, inf) on a log grid of
    centers c and lengths L, plus the family (edge, h) touching the origin,
    and compares the integral over each with the integral over the
    concentric interval of half the length. Intervals where either integral
    overflows are skipped and counted.
    """
    w = as_expression(w)
    if delta < 0:
        raise ValueError("delta must be non-negative")
    s = sampling
    centers = np.logspace(math.log10(s.center_min), math.log10(s.center_max), s.n_centers)
    length_lo = max(delta, s.length_min)
    if length_lo > s.length_max:
        raise ValueError(f"delta = {delta} exceeds the largest sampled length {s.length_max}")
    lengths = np.logspace(math.log10(length_lo), math.log10(s.length_max), s.n_lengths)

    C, L = np.meshgrid(centers, lengths, indexing="ij")
    inside = L / 2 < C
    rows = np.broadcast_to(np.arange(centers.size)[:, None], C.shape)
    family = np.concatenate([rows[inside], np.full(lengths.size, -1)])
    n_in = int(inside.sum())
    # centered intervals in local coordinates x = c + L*t, so that short
    # intervals far from 0 keep their exact length; the edge family
    # (edge, edge + h) in plain coordinates, which resolves the origin
    origin = np.concatenate([C[inside], np.zeros(lengths.size)])
    scale = np.concatenate([L[inside], np.ones(lengths.size)])
    full_lo = np.concatenate([np.full(n_in, -0.5), np.full(lengths.size, s.edge)])
    full_hi = np.concatenate([np.full(n_in, 0.5), s.edge + lengths])
    half_lo = np.concatenate([np.full(n_in, -0.25), s.edge + lengths / 4])
    half_hi = np.concatenate([np.full(n_in, 0.25), s.edge + 3 * lengths / 4])
    centre = np.concatenate([C[inside], s.edge + lengths / 2])
    length = np.concatenate([L[inside], lengths])

    full = quad.integrate_batch(w, full_lo, full_hi, tol=0.0, rtol=1e-12,
                                origin=origin, scale=scale)
    half = quad.integrate_batch(w, half_lo, half_hi, tol=0.0, rtol=1e-12,
                                origin=origin, scale=scale)
    good = (full.status != 2) & (half.status != 2) & np.isfinite(full.values) \
        & np.isfinite(half.values) & (full.values > 0)
    with np.errstate(all="ignore"):
        ratio = np.where(half.values > 0, full.values / half.values, math.inf)
    ratio = np.where(good, ratio, np.nan)
    skipped = int(np.sum(~good))
    if not np.any(good):
        raise quad.QuadratureError("every sampled doubling integral overflowed or underflowed")

    k = int(np.nanargmax(ratio))
    estimate = float(np.nanmax(ratio))
    worst = (float(centre[k]), float(length[k]))

    # evidence: ratios along the worst interval's family, by increasing length
    fam = family == family[k]
    order = np.argsort(length[fam])
    evidence = [(float(c), float(h), float(q))
                for c, h, q in zip(centre[fam][order], length[fam][order], ratio[fam][order])
                if np.isfinite(q)]

    growing = _edge_family_grows(ratio[-lengths.size:], lengths)
    member = estimate <= s.cap and not growing
    return DoublingReport(max(estimate, 1.0), delta, member, worst, evidence, skipped)


def _edge_family_grows(ratio: np.ndarray, lengths: np.ndarray) -> bool:
    """Strictly increasing positive log-log slopes over the last decade of lengths."""
    ok = np.isfinite(ratio)
    q, h = ratio[ok], lengths[ok]
    if q.size < 3:
        return False
    last = h >= h[-1] / 10
    q, h = q[last], h[last]
    if q.size < 3:
        return False
    slopes = np.diff(np.log(q)) / np.diff(np.log(h))
    return bool(np.all(slopes > 1e-3) and np.all(np.diff(slopes) > 0))
