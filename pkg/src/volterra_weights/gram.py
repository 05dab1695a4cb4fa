"""Gram matrices of the system x^k / u on (0, r) and their non-degeneracy.

The moment matrix G[i][j] = int_0^r x^(i+j) u(x)^-2 dx is the Gram matrix of
the functions x^k u^-1 chi_(0,r), k = 0..m. Two dimensionless quantities
measure how far it is from degenerate:

* the volume ratio rho = sqrt(det R), R the correlation-normalised G, i.e.
  the volume of the parallelepiped spanned by the unit edges;
* sin(theta), the sine of the angle between the first edge u^-1 chi_r and
  the span of the remaining edges.

Both are computed from a Cholesky factor of R, never from cofactors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import quadrature as quad
from .expr import ExpressionLike, as_expression, reciprocal

MAX_DEGREE = 8


class DivergentMoment(ArithmeticError):
    """A moment integral diverges at the origin (u^-2 not locally integrable)."""


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class MomentMatrix:
    r: float
    m: int
    entries: np.ndarray

    @property
    def correlation(self) -> np.ndarray:
        d = np.sqrt(np.diag(self.entries))
        return self.entries / np.outer(d, d)

    @property
    def determinant(self) -> float:
        return float(np.prod(np.diag(self.entries)) * _cholesky(self.correlation)[1] ** 2)


@dataclass
class GramProfile:
    """(r, rho, sin theta, det G) samples plus the uniform lower bound estimate."""

    samples: list[tuple[float, float, float, float]]
    inf_ratio: float
    suggested_r0: float

    @property
    def rho(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])

    @property
    def sin_theta(self) -> np.ndarray:
        return np.array([s[2] for s in self.samples])


def _check_degree(m: int) -> None:
    if not 0 <= m <= MAX_DEGREE:
        raise ValueError(f"degree m must be in 0..{MAX_DEGREE}, got {m}")


def _weight(u: ExpressionLike):
    w = reciprocal(as_expression(u))

    def inv_sq(x):
        y = w(x)
        return y * y

    return inv_sq


def _power_moment(f, n: int):
    if n == 0:
        return f
    return lambda x: f(x) * x**n


def _assemble(moments, m: int) -> np.ndarray:
    idx = np.add.outer(np.arange(m + 1), np.arange(m + 1))
    return np.asarray(moments)[idx]


def moment_matrix(u: ExpressionLike, r: float, m: int, tol: float = 1e-13) -> MomentMatrix:
    """G[i][j] = int_0^r x^(i+j) / u^2, one quadrature per distinct i + j.

    ``tol`` is relative. Raises DivergentMoment if u^-2 is not integrable at 0.
    """
    _check_degree(m)
    if not r > 0:
        raise ValueError("r must be positive")
    f = _weight(u)
    moments = []
    for n in range(2 * m + 1):
        res = quad.integrate_finite(_power_moment(f, n), 0.0, r, tol=0.0, rtol=tol)
        if res.diverges:
            raise DivergentMoment(f"int_0^r x^{n} u^-2 dx diverges at 0 "
                                  f"(growth exponent {res.growth_exponent:.3g})")
        moments.append(res.value)
    return MomentMatrix(float(r), m, _assemble(moments, m))


def _cholesky(R: np.ndarray):
    try:
        L = np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("Gram matrix is not numerically positive definite") from None
    return L, float(np.prod(np.diag(L)))


def volume_ratio(G: MomentMatrix | np.ndarray) -> float:
    """rho = sqrt(det R) in (0, 1]; equals 1 iff the edges are orthogonal."""
    entries = G.entries if isinstance(G, MomentMatrix) else np.asarray(G, dtype=float)
    if entries.shape[0] == 1:
        if not entries[0, 0] > 0:
            raise NotPositiveDefinite("Gram matrix is not numerically positive definite")
        return 1.0
    d = np.sqrt(np.diag(entries))
    _, rho = _cholesky(entries / np.outer(d, d))
    return rho


def subspace_angle(G: MomentMatrix | np.ndarray) -> float:
    """sin theta = sqrt(det G / (G[0][0] det G[1:, 1:])).

    Computed as the last Cholesky diagonal of R with index 0 moved last,
    which is exactly the normalised distance from the first edge to the span
    of the others.
    """
    entries = G.entries if isinstance(G, MomentMatrix) else np.asarray(G, dtype=float)
    if entries.shape[0] < 2:
        raise ValueError("the angle needs at least two edges (m >= 1)")
    d = np.sqrt(np.diag(entries))
    R = entries / np.outer(d, d)
    perm = np.r_[1:R.shape[0], 0]
    L, _ = _cholesky(R[np.ix_(perm, perm)])
    return float(L[-1, -1])


def lemma1_scan(u: ExpressionLike, m: int, r_range: tuple[float, float] = (1e-3, 1e3),
                n_samples: int = 25, tol: float = 1e-13) -> GramProfile:
    """rho(r) and sin theta(r) on a log grid of r.

    Moments are accumulated segment by segment from the smallest r, so the
    whole scan costs one head integral per moment plus one batch.

    ``suggested_r0`` is the smallest sampled r from which rho never drops
    below 0.9 times its running minimum up to that r (0 if the first sample
    qualifies); ``inf_ratio`` is the least rho sampled from there on.
    """
    _check_degree(m)
    r_lo, r_hi = r_range
    if not 0 < r_lo < r_hi:
        raise ValueError("r_range must satisfy 0 < r_min < r_max")
    if n_samples < 2:
        raise ValueError("need at least two samples")
    r = np.logspace(math.log10(r_lo), math.log10(r_hi), n_samples)
    f = _weight(u)
    cols = []
    for n in range(2 * m + 1):
        g = _power_moment(f, n)
        head = quad.integrate_finite(g, 0.0, r[0], tol=0.0, rtol=tol)
        if head.diverges:
            raise DivergentMoment(f"int_0^r x^{n} u^-2 dx diverges at 0")
        seg = quad.integrate_batch(g, r[:-1], r[1:], tol=0.0, rtol=tol)
        if np.any(seg.status == 2):
            raise quad.QuadratureError("u^-2 is not finite on the scan range")
        cols.append(head.value + np.concatenate([[0.0], np.cumsum(seg.values)]))
    moments = np.stack(cols, axis=1)

    samples = []
    for i, ri in enumerate(r):
        G = MomentMatrix(float(ri), m, _assemble(moments[i], m))
        rho = volume_ratio(G)
        sin_t = subspace_angle(G) if m >= 1 else 1.0
        samples.append((float(ri), rho, sin_t, G.determinant))

    rho = np.array([s[1] for s in samples])
    running = np.minimum.accumulate(rho)
    start = len(rho) - 1
    for i in range(len(rho)):
        if np.all(rho[i:] >= 0.9 * running[i]):
            start = i
            break
    r0 = 0.0 if start == 0 else float(r[start])
    return GramProfile(samples, float(rho[start:].min()), r0)
