"""Volterra operators with kernels A(x, t) = sum_k a_k(x) t^k.

The operator (Af)(x) = int_0^x A(x, t) f(t) dt is studied as a map from
L2 with weight u to L2 with weight v. With g = u f this is plain L2
boundedness of the kernel v(x) A(x, t) / u(t), which is what
:func:`discretize` turns into a matrix on a truncated grid.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import quadrature as quad
from .expr import ZERO, Expression, ExpressionLike, as_expression, multiply_by_power, mul
from .hardy import HardyResult, SearchConfig, s_k

POWER_ITERATIONS = 10_000


@dataclass(frozen=True)
class OperatorSpec:
    m: int
    coeffs: tuple[Expression, ...]

    def __post_init__(self):
        coeffs = tuple(as_expression(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if self.m < 0:
            raise ValueError("kernel degree m must be non-negative")
        if len(coeffs) != self.m + 1:
            raise ValueError(f"degree {self.m} needs {self.m + 1} coefficients, got {len(coeffs)}")

    @classmethod
    def from_coeffs(cls, coeffs: Sequence[ExpressionLike]) -> OperatorSpec:
        return cls(len(coeffs) - 1, tuple(coeffs))

    def component(self, k: int) -> OperatorSpec:
        """The single-term operator a_k(x) int_0^x t^k f(t) dt."""
        return OperatorSpec(self.m, tuple(c if j == k else ZERO for j, c in enumerate(self.coeffs)))

    def kernel(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        return sum(a(x) * t**k for k, a in enumerate(self.coeffs))


@dataclass(frozen=True)
class GridSpec:
    """Truncation of (0, inf) to (x_max * 10^-decades, x_max] (log) or (0, x_max] (linear)."""

    x_max: float
    n: int
    spacing: str = "log"
    decades: float = 6.0

    def __post_init__(self):
        if self.n < 16:
            raise ValueError(f"grid needs n >= 16 nodes, got {self.n}")
        if not self.x_max > 0:
            raise ValueError("x_max must be positive")
        if self.spacing not in ("log", "linear"):
            raise ValueError(f"spacing must be 'log' or 'linear', got {self.spacing!r}")

    @property
    def x_min(self) -> float:
        return self.x_max * 10.0 ** -self.decades if self.spacing == "log" else 0.0

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Midpoint nodes and weights (midpoints in log coordinates for log spacing)."""
        cells = np.arange(self.n) + 0.5
        if self.spacing == "linear":
            h = self.x_max / self.n
            return cells * h, np.full(self.n, h)
        lo, hi = math.log(self.x_min), math.log(self.x_max)
        h = (hi - lo) / self.n
        x = np.exp(lo + cells * h)
        return x, x * h


# X in {1e2, 1e3, 1e4}; the log span widens with X (10, 15, 20 decades)
DEFAULT_LADDER = (
    GridSpec(1e2, 512, "log", 10.0),
    GridSpec(1e3, 1024, "log", 15.0),
    GridSpec(1e4, 2048, "log", 20.0),
)


@dataclass
class NormEstimate:
    value: float
    grid: Optional[GridSpec]
    converged: bool
    iterations: int
    levels: list[tuple[GridSpec, float]] = field(default_factory=list)


@dataclass
class SplittingReport:
    s_values: list[HardyResult]
    sum_s: float
    whole_norm: NormEstimate
    component_norms: list[NormEstimate]
    sandwich_upper_ok: Optional[bool]
    divergence_profile: list[tuple[float, float]]
    divergence_slope: Optional[float] = None
    lower_ratio: Optional[float] = None
    side_conditions: Optional[dict[int, bool]] = None

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.sum_s)


def apply(spec: OperatorSpec, f: ExpressionLike, x: float, tol: float = 1e-9) -> float:
    """(Af)(x) = sum_k a_k(x) int_0^x t^k f(t) dt."""
    if not x > 0:
        raise ValueError("x must be positive")
    f = as_expression(f)
    total = 0.0
    for k, a in enumerate(spec.coeffs):
        if a == ZERO:
            continue
        res = quad.integrate_finite(multiply_by_power(f, k), 0.0, x, tol=tol / (spec.m + 1))
        if res.diverges:
            raise quad.QuadratureError(f"moment int_0^x t^{k} f(t) dt diverges")
        total += float(a(x)) * res.value
    return total


def _weights_at(e: Expression, x: np.ndarray, name: str) -> np.ndarray:
    y = e(x)
    if not np.all(np.isfinite(y)) or np.any(y == 0):
        raise quad.QuadratureError(f"weight {name} = {e} is zero or not finite on the grid")
    return y


def discretize(spec: OperatorSpec, u: ExpressionLike, v: ExpressionLike, grid: GridSpec) -> np.ndarray:
    """Matrix of the truncated operator L2_u(0, X) -> L2_v(0, X).

    M[i, j] = sqrt(w_i) v(x_i) A(x_i, x_j) / u(x_j) sqrt(w_j) for j < i, half
    that on the diagonal, 0 above it. Its largest singular value approximates
    the norm of the truncated operator.
    """
    x, w = grid.nodes()
    sw = np.sqrt(w)
    vx = _weights_at(as_expression(v), x, "v")
    ux = _weights_at(as_expression(u), x, "u")
    M = np.zeros((grid.n, grid.n))
    for k, a in enumerate(spec.coeffs):
        if a == ZERO:
            continue
        left = sw * vx * a(x)
        right = sw * x**k / ux
        M += np.outer(left, right)
    if not np.all(np.isfinite(M)):
        raise quad.QuadratureError("kernel is not finite on the grid")
    M = np.tril(M, -1) + np.diag(0.5 * np.diag(M))
    return M


def norm_estimate(M: np.ndarray, rtol: float = 1e-6, max_iter: int = POWER_ITERATIONS,
                  grid: Optional[GridSpec] = None) -> NormEstimate:
    """Largest singular value of M by power iteration on M^T M from the all-ones vector."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    vec = np.ones(M.shape[1]) / math.sqrt(M.shape[1])
    sigma_old = 0.0
    for it in range(1, max_iter + 1):
        y = M @ vec
        sigma = float(np.linalg.norm(y))
        if sigma == 0.0:
            return NormEstimate(0.0, grid, True, it)
        z = M.T @ y
        vec = z / np.linalg.norm(z)
        if abs(sigma - sigma_old) <= rtol * sigma:
            return NormEstimate(sigma, grid, True, it)
        sigma_old = sigma
    return NormEstimate(sigma, grid, False, max_iter)


def ladder_norm(spec: OperatorSpec, u: ExpressionLike, v: ExpressionLike,
                grids: Sequence[GridSpec] = DEFAULT_LADDER, rtol: float = 1e-6,
                ladder_rtol: float = 0.02) -> NormEstimate:
    """Norm estimates along a refinement ladder; the last level is the value.

    ``converged`` requires the power iteration to converge on every level and
    the last two levels to agree within ``ladder_rtol``.
    """
    levels = []
    iterations = 0
    all_converged = True
    for g in grids:
        est = norm_estimate(discretize(spec, u, v, g), rtol, grid=g)
        levels.append((g, est.value))
        iterations += est.iterations
        all_converged &= est.converged
    value = levels[-1][1]
    agree = len(levels) >= 2 and abs(levels[-1][1] - levels[-2][1]) <= ladder_rtol * value
    return NormEstimate(value, grids[-1], bool(all_converged and agree), iterations, levels)


def loglog_slope(points: Sequence[tuple[float, float]]) -> float:
    x = np.log([p[0] for p in points])
    y = np.log([p[1] for p in points])
    x = x - x.mean()
    return float(np.dot(x, y - y.mean()) / np.dot(x, x))


def side_condition(spec: OperatorSpec, v: ExpressionLike) -> dict[int, bool]:
    """a_k v in L2(0, r) for every r, k = 0..m-1 (only the origin can fail)."""
    v = as_expression(v)
    out = {}
    for k in range(spec.m):
        res = quad.weighted_l2_norm(mul(spec.coeffs[k], v), 0.0, 1.0)
        out[k] = not res.diverges
    return out


def splitting_report(spec: OperatorSpec, u: ExpressionLike, v: ExpressionLike,
                     search: SearchConfig = SearchConfig(),
                     grids: Sequence[GridSpec] = DEFAULT_LADDER, tol: float = 1e-9,
                     rtol: float = 1e-6, ladder_rtol: float = 0.02, delta: float = 0.0,
                     workers: int = 1) -> SplittingReport:
    """All s_k, whole and per-component norm ladders, and the bound checks.

    The upper bound ||A|| <= 2 sum s_k follows from the triangle inequality
    and ||A_k|| <= 2 s_k for each Hardy-type component.
    """
    u = as_expression(u)
    v = as_expression(v)
    s_vals = [s_k(u, v, a, k, search, tol) for k, a in enumerate(spec.coeffs)]
    sum_s = sum(r.supremum for r in s_vals)

    jobs = [spec] + [spec.component(k) for k in range(spec.m + 1)]

    def run(sp):
        return ladder_norm(sp, u, v, grids, rtol, ladder_rtol)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            norms = list(pool.map(run, jobs))
    else:
        norms = [run(sp) for sp in jobs]
    whole, components = norms[0], norms[1:]

    report = SplittingReport(s_vals, sum_s, whole, components, None, [])
    if math.isfinite(sum_s):
        report.sandwich_upper_ok = whole.value <= 2 * sum_s * (1 + ladder_rtol)
        if sum_s > 0:
            report.lower_ratio = whole.value / sum_s
    else:
        report.divergence_profile = [(g.x_max, val) for g, val in whole.levels]
        if len(report.divergence_profile) >= 2:
            report.divergence_slope = loglog_slope(report.divergence_profile)
    if delta > 0:
        report.side_conditions = side_condition(spec, v)
    return report
