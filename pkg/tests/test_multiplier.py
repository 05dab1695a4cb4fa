import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volterra_weights.expr import ZERO, mul, parse
from volterra_weights.hardy import SearchConfig, hardy_constant
from volterra_weights.multiplier import (MultiplierProblem, condition6, condition7, condition8,
                                         lemma2_residual, lemma2_sides, multiplier_verdict,
                                         operator_from_multiplier, operator_route)

COARSE = SearchConfig(n_r=60, golden_iterations=30)


def problem(phi, l, m, u="1", v="1"):
    return MultiplierProblem(parse(phi), parse(u), parse(v), l, m)


def test_problem_validation():
    with pytest.raises(ValueError):
        problem("1", 1, 2)
    with pytest.raises(ValueError):
        problem("1", 0, 0)


def test_condition6_examples():
    assert [c.value for c in condition6(problem("1", 1, 1))] == [0.0]
    c = condition6(problem("x", 1, 1))[0]
    assert not c.finite and c.value == math.inf
    np.testing.assert_allclose(condition6(problem("exp(-x)", 1, 0))[0].value, 1 / math.sqrt(2),
                               atol=1e-9)


def test_condition7_examples():
    assert [c.value for c in condition7(problem("1", 1, 1))] == [0.0]
    c = condition7(problem("log(x)", 1, 1))[0]
    assert c.finite
    assert abs(c.value - 1.0) < 1e-6
    assert [c.value for c in condition7(problem("1", 2, 2))] == [0.0, 0.0]


def test_condition7_uses_hardy_path():
    p = problem("log(x)", 1, 1)
    c = condition7(p, COARSE)[0]
    assert c.value == hardy_constant(mul(p.derivative_term(0), p.v), p.u, COARSE).supremum
    np.testing.assert_allclose(c.value, hardy_constant("x^(-1)", "1", COARSE).supremum, rtol=1e-14)


def test_condition8_examples():
    assert condition8(problem("1", 1, 1)) == 1.0
    assert condition8(problem("x", 1, 1)) == math.inf
    np.testing.assert_allclose(condition8(problem("x", 1, 1, u="x")), 1.0)


def test_verdict_examples():
    rep = multiplier_verdict(problem("1", 1, 1))
    assert rep.verdict
    assert rep.cond8.value == 1.0
    rep = multiplier_verdict(problem("x", 1, 1))
    assert not rep.verdict
    assert rep.cond8.value == math.inf
    rep = multiplier_verdict(problem("exp(-x)", 1, 1))
    assert rep.verdict
    assert abs(rep.cond6[0].value - 1 / math.sqrt(2)) < 1e-6
    np.testing.assert_allclose(rep.cond8.value, 1.0, rtol=1e-6)


def test_side_conditions_are_reported():
    rep = multiplier_verdict(problem("exp(-x)", 1, 1, v="x"))
    assert rep.side_conditions["u^-2 in B_delta"]
    assert not rep.side_conditions["v^-1 in L2(0,r)"]
    assert not rep.hypotheses_hold


def test_zero_multiplier():
    rep = multiplier_verdict(problem("0", 2, 2, u="x^(-0.2)", v="exp(-x)"))
    assert rep.verdict
    assert all(c.value == 0.0 for c in rep.cond6 + rep.cond7)
    assert rep.cond8.value == 0.0


@given(st.floats(0.01, 100.0), st.sampled_from([("exp(-x)", 1, 1), ("x*exp(-x)", 2, 1),
                                                ("log(x)", 1, 1), ("x", 1, 1)]))
@settings(max_examples=12)
def test_scaling_v(lam, case):
    phi, l, m = case
    p = problem(phi, l, m)
    q = MultiplierProblem(p.phi, p.u, mul(parse(repr(lam)), p.v), l, m)
    a, b = multiplier_verdict(p, COARSE), multiplier_verdict(q, COARSE)
    assert a.verdict == b.verdict
    for ca, cb in zip(a.cond6 + a.cond7 + [a.cond8], b.cond6 + b.cond7 + [b.cond8]):
        if ca is None:
            continue
        assert ca.finite == cb.finite
        if ca.finite:
            np.testing.assert_allclose(cb.value, lam * ca.value, rtol=1e-9, atol=1e-300)


@pytest.mark.parametrize("phi", ["1", "exp(-x)", "x*exp(-x)", "(1+x)^(-1)", "x^2*exp(-2*x)", "x"])
@pytest.mark.parametrize("l", [1, 2])
def test_condition6_implies_condition7(phi, l):
    # m = l, u = v with (1 + x^(l-1)) / u square integrable on (0, inf)
    u = f"(1+x)^{l + 1}"
    p = problem(phi, l, l, u=u, v=u)
    for c6, c7 in zip(condition6(p), condition7(p, COARSE)):
        assert not (c6.finite and not c7.finite)


def test_operator_from_multiplier_examples():
    spec = operator_from_multiplier("1", 1, 1)
    assert spec.m == 0 and spec.coeffs[0] == ZERO
    spec = operator_from_multiplier("log(x)", 1, 1)
    np.testing.assert_allclose(spec.coeffs[0](np.array([0.5, 2.0])), [2.0, 0.5])
    spec = operator_from_multiplier("x", 2, 2)
    np.testing.assert_allclose(spec.coeffs[0](3.0), 2.0)
    assert spec.coeffs[1] == ZERO


def test_product_identity_examples():
    assert lemma2_residual("x^2", "x^2", 1, 1, [1.0, 2.0]) <= 1e-9
    assert lemma2_residual("1", "x^2", 2, 2, [0.5, 1.0, 3.0]) <= 1e-9
    assert lemma2_residual("x", "x^3", 2, 1, [0.5, 1.0, 3.0]) <= 1e-8


def test_product_identity_brute_force():
    # l=2, m=1, phi=x, g=x^3: LHS 4x^3, RHS sum over k of C(1,k) (x^(1+k))' int_0^x (-t)^(1-k) 6t dt
    x = np.array([0.5, 1.0, 3.0])
    rhs = 1 * 1 * (-2 * x**3) + 1 * (2 * x) * (3 * x**2)
    lhs, computed = lemma2_sides("x", "x^3", 2, 1, x)
    np.testing.assert_allclose(lhs, 4 * x**3, rtol=1e-14)
    np.testing.assert_allclose(computed, rhs, rtol=1e-10)


@pytest.mark.parametrize("phi, g, l, m", [
    ("x*exp(-x)", "x^3*exp(-x)", 3, 3),
    ("x^2 + 1", "x^2*(1+x)^(-1)", 2, 1),
    ("exp(-2*x)", "x^4", 4, 2),
    ("log(x+1)", "x*exp(x^0.5)", 1, 0),
])
def test_operator_route_matches_symbolic_derivative(phi, g, l, m):
    from volterra_weights.expr import differentiate
    xs = np.logspace(-1, 1, 20)
    exact = differentiate(mul(parse(phi), parse(g)), m)(xs)
    routed = np.array([operator_route(phi, g, l, m, x) for x in xs])
    np.testing.assert_allclose(routed, exact, rtol=0, atol=1e-7 * max(1.0, np.abs(exact).max()))
