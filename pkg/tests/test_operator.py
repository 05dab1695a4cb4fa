import math

import numpy as np
import pytest

from volterra_weights.expr import ZERO
from volterra_weights.operator import (DEFAULT_LADDER, GridSpec, OperatorSpec, apply, discretize,
                                       ladder_norm, loglog_slope, norm_estimate, splitting_report)

HARDY = OperatorSpec.from_coeffs(["x^(-1)"])
CORPUS_M1 = OperatorSpec.from_coeffs(["x^(-1)", "x^(-2)"])
UNBOUNDED = OperatorSpec.from_coeffs(["1"])


@pytest.fixture(scope="module")
def corpus_report():
    return splitting_report(CORPUS_M1, "1", "1")


@pytest.fixture(scope="module")
def unbounded_report():
    return splitting_report(UNBOUNDED, "1", "1")


def test_spec_validation():
    with pytest.raises(ValueError):
        OperatorSpec(1, ("1",))
    with pytest.raises(ValueError):
        OperatorSpec(-1, ())
    spec = OperatorSpec(1, ("1", "x"))
    assert spec.component(0).coeffs[1] == ZERO


def test_apply_examples():
    np.testing.assert_allclose(apply(UNBOUNDED, "1", 3.0), 3.0, rtol=1e-12)
    np.testing.assert_allclose(apply(HARDY, "1", 5.0), 1.0, rtol=1e-12)
    np.testing.assert_allclose(apply(CORPUS_M1, "1", 2.0), 1.5, rtol=1e-12)


def test_apply_requires_positive_point():
    with pytest.raises(ValueError):
        apply(HARDY, "1", 0.0)


def test_kernel_one_gives_quadrature_weights():
    M = discretize(UNBOUNDED, "1", "1", GridSpec(1.0, 16, "linear"))
    h = 1 / 16
    expected = np.tril(np.full((16, 16), h), -1) + np.diag(np.full(16, h / 2))
    np.testing.assert_allclose(M, expected, rtol=1e-15)


def test_small_grid_rejected():
    with pytest.raises(ValueError):
        GridSpec(1.0, 8)


@pytest.mark.parametrize("grid", [GridSpec(10.0, 64), GridSpec(1e3, 256, "log", 9.0),
                                  GridSpec(1.0, 128, "linear")])
def test_discrete_hardy_below_two(grid):
    sigma = np.linalg.norm(discretize(HARDY, "1", "1", grid), 2)
    assert sigma < 2.0


def test_power_iteration():
    np.testing.assert_allclose(norm_estimate(np.eye(2)).value, 1.0, rtol=1e-12)
    est = norm_estimate(np.diag([3.0, 1.0]))
    assert est.converged
    np.testing.assert_allclose(est.value, 3.0, rtol=1e-6)
    M = np.random.default_rng(0).normal(size=(40, 30))
    np.testing.assert_allclose(norm_estimate(M, rtol=1e-12).value, np.linalg.norm(M, 2), rtol=1e-6)


def test_hardy_operator_norm():
    est = norm_estimate(discretize(HARDY, "1", "1", GridSpec(1e4, 2048, "log", 20.0)))
    assert abs(est.value - 2.0) <= 0.04


def test_hardy_ladder():
    est = ladder_norm(HARDY, "1", "1")
    assert est.converged
    assert abs(est.value - 2.0) <= 0.04
    values = [v for _, v in est.levels]
    steps = np.abs(np.diff(values))
    assert np.all(np.diff(steps) < 0)


def test_corpus_report(corpus_report):
    rep = corpus_report
    np.testing.assert_allclose([s.supremum for s in rep.s_values], [1.0, 1 / 3], atol=1e-6)
    assert rep.whole_norm.converged
    assert max(s.supremum for s in rep.s_values) <= rep.whole_norm.value <= 8 / 3
    assert rep.sandwich_upper_ok


def test_component_sandwich(corpus_report):
    for s, comp in zip(corpus_report.s_values, corpus_report.component_norms):
        assert comp.converged
        assert 0.95 * s.supremum <= comp.value <= 2 * s.supremum * 1.05


def test_triangle_inequality(corpus_report):
    total = sum(c.value for c in corpus_report.component_norms)
    assert corpus_report.whole_norm.value <= total * (1 + 1e-6)


def test_ladder_stabilises_on_corpus(corpus_report):
    for est in [corpus_report.whole_norm] + corpus_report.component_norms:
        steps = np.abs(np.diff([v for _, v in est.levels]))
        assert np.all(np.diff(steps) < 0)


def test_divergent_component(unbounded_report):
    rep = unbounded_report
    assert not rep.bounded
    assert rep.sandwich_upper_ok is None
    assert not rep.whole_norm.converged
    assert rep.divergence_slope >= 0.1
    np.testing.assert_allclose(rep.divergence_slope, 1.0, atol=0.05)


def test_splitting_agrees_with_convergence(corpus_report, unbounded_report):
    for rep in (corpus_report, unbounded_report):
        assert rep.whole_norm.converged == rep.bounded


def test_side_conditions_with_delta():
    rep = splitting_report(OperatorSpec.from_coeffs(["x^(-1)", "x^(-2)"]), "1", "1",
                           grids=DEFAULT_LADDER[:2], delta=1.0)
    # a_0 v = 1/x is not square integrable at the origin
    assert rep.side_conditions == {0: False}


def test_threads_give_identical_report():
    one = splitting_report(HARDY, "1", "1", grids=DEFAULT_LADDER[:2])
    two = splitting_report(HARDY, "1", "1", grids=DEFAULT_LADDER[:2], workers=2)
    assert one.whole_norm.value == two.whole_norm.value
    assert [c.value for c in one.component_norms] == [c.value for c in two.component_norms]


@pytest.mark.parametrize("grid", [GridSpec(1.0, 64, "linear"), GridSpec(1.0, 256, "linear"),
                                  GridSpec(4.0, 128, "log", 8.0)])
def test_discrete_image_matches_apply(grid):
    spec = OperatorSpec.from_coeffs(["1", "x"])
    f = lambda t: 1 + 2 * t - t**2
    x, w = grid.nodes()
    M = discretize(spec, "1", "1", grid)
    image = M @ (np.sqrt(w) * f(x)) / np.sqrt(w)
    exact = np.array([apply(spec, "1 + 2*x - x^2", xi, tol=1e-13) for xi in x])
    # midpoint rule with the half cell at the moving endpoint is second order
    h = grid.x_max / grid.n if grid.spacing == "linear" else math.log(10) * grid.decades / grid.n
    np.testing.assert_allclose(image, exact, atol=10 * h**2 * np.abs(exact).max())


def test_loglog_slope():
    assert loglog_slope([(1, 1), (10, 100), (100, 1e4)]) == pytest.approx(2.0)
