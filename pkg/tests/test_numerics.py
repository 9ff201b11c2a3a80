import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from predalloc.numerics import (BracketedFunction, BracketError, ConcaveConstraint, ConvexProgram, DomainError,
                                LinearBlock, Status, check_gradient, exp_integral_e1, find_root,
                                log_upper_incomplete_gamma, minimize_convex, upper_incomplete_gamma)


# -- special functions -----------------------------------------------------------

@pytest.mark.parametrize("x, expected", [(1.0, 0.21938393439552), (0.5, 0.55977359477616)])
def test_e1_reference_values(x, expected):
    assert exp_integral_e1(x) == pytest.approx(expected, rel=1e-10)


def test_upper_gamma_half_at_one():
    # Gamma(1/2, 1) = sqrt(pi) * erfc(1)
    assert upper_incomplete_gamma(0.5, 1.0) == pytest.approx(math.sqrt(math.pi) * math.erfc(1.0), rel=1e-12)
    assert upper_incomplete_gamma(0.5, 1.0) == pytest.approx(0.27880558528, rel=1e-9)


@pytest.mark.parametrize("x", [1e-6, 0.01, 0.3, 1.0, 4.0, 20.0, 60.0])
def test_e1_matches_quadrature(x):
    q, _ = integrate.quad(lambda t: math.exp(-t) / t, x, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    assert exp_integral_e1(x) == pytest.approx(q, rel=1e-9)


@pytest.mark.parametrize("s", [0.05, 0.3, 0.5, 0.9, 1.0])
@pytest.mark.parametrize("x", [0.0, 1e-4, 0.5, 3.0, 25.0])
def test_upper_gamma_matches_quadrature(s, x):
    q, _ = integrate.quad(lambda t: t ** (s - 1) * math.exp(-t), x, np.inf, epsabs=0, epsrel=1e-12, limit=400)
    assert upper_incomplete_gamma(s, x) == pytest.approx(q, rel=1e-8)


def test_upper_gamma_at_s_one_is_exponential():
    x = np.linspace(0, 30, 31)
    np.testing.assert_allclose(upper_incomplete_gamma(1.0, x), np.exp(-x), rtol=1e-13)


def test_log_upper_gamma_tail_is_finite_and_continuous():
    s = 0.5
    xs = np.array([600.0, 700.0, 740.0, 800.0])
    vals = log_upper_incomplete_gamma(s, xs)
    assert np.all(np.isfinite(vals))
    # leading asymptotics (s-1) ln x - x
    np.testing.assert_allclose(vals, (s - 1) * np.log(xs) - xs, atol=2e-3)
    assert log_upper_incomplete_gamma(s, 2.0) == pytest.approx(math.log(upper_incomplete_gamma(s, 2.0)), rel=1e-13)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan])
def test_e1_domain(bad):
    with pytest.raises(DomainError):
        exp_integral_e1(bad)


def test_upper_gamma_domain():
    with pytest.raises(DomainError):
        upper_incomplete_gamma(1.5, 1.0)
    with pytest.raises(DomainError):
        upper_incomplete_gamma(0.5, -1.0)


@given(st.floats(1e-3, 50.0))
@settings(max_examples=50, deadline=None)
def test_e1_bracketed_by_classic_bounds(x):
    # 0.5 e^-x ln(1 + 2/x) < E1(x) < e^-x ln(1 + 1/x)
    e1 = exp_integral_e1(x)
    assert 0.5 * math.exp(-x) * math.log1p(2 / x) <= e1 * (1 + 1e-12)
    assert e1 <= math.exp(-x) * math.log1p(1 / x) * (1 + 1e-12)


# -- roots and gradient checks ---------------------------------------------------

def test_find_root_cubic():
    f = BracketedFunction(lambda x: x**3 - 2.0, 0.0, 2.0)
    assert find_root(f) == pytest.approx(2 ** (1 / 3), abs=1e-12)


def test_find_root_requires_sign_change():
    with pytest.raises(BracketError):
        find_root(BracketedFunction(lambda x: x**2 + 1, -1.0, 1.0))
    with pytest.raises(BracketError):
        BracketedFunction(lambda x: x, 1.0, 1.0)


def test_check_gradient_flags_wrong_gradient():
    assert check_gradient(lambda x: x**2, lambda x: 2 * x, 1.5) < 1e-8
    # gradient off by a factor 2 -> relative error 0.5
    assert check_gradient(lambda x: x**2, lambda x: x, 2.0) == pytest.approx(0.5, rel=1e-6)


def test_check_gradient_multivariate():
    f = lambda v: v[0] ** 2 * v[1] + math.sin(v[1])
    g = lambda v: np.array([2 * v[0] * v[1], v[0] ** 2 + math.cos(v[1])])
    assert check_gradient(f, g, np.array([0.7, -1.3])) < 1e-7


# -- barrier solver ----------------------------------------------------------------

def _disc(radius=1.0):
    return ConcaveConstraint(lambda x: radius**2 - x @ x, lambda x: -2 * x, lambda x: -2 * np.eye(x.size))


def test_linear_objective_over_disc():
    c = np.array([1.0, 1.0])
    res = minimize_convex(ConvexProgram(2, c, [_disc()]))
    assert res.status is Status.OPTIMAL
    np.testing.assert_allclose(res.point, -np.ones(2) / math.sqrt(2), atol=1e-6)
    assert res.objective == pytest.approx(-math.sqrt(2), rel=1e-8)


def test_linear_program_matches_vertex():
    # min -x - 2y  s.t. x + y <= 4, x <= 3, y <= 3, x, y >= 0  -> (1, 3), value -7
    A = np.array([[-1.0, -1.0], [-1.0, 0.0], [0.0, -1.0]])
    b = np.array([4.0, 3.0, 3.0])
    res = minimize_convex(ConvexProgram(2, [-1.0, -2.0], [LinearBlock(A, b)], box_lower=np.zeros(2)))
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(-7.0, abs=1e-7)
    np.testing.assert_allclose(res.point, [1.0, 3.0], atol=1e-6)


def test_perspective_constraint_against_grid():
    # min P + K  s.t.  K log(1 + P/K) >= 1 ; jointly concave perspective of log(1+p)
    def val(v):
        return v[1] * math.log1p(v[0] / v[1]) - 1.0

    def grad(v):
        p, k = v
        r = p / k
        return np.array([1 / (1 + r), math.log1p(r) - r / (1 + r)])

    def hess(v):
        p, k = v
        d2 = -1 / (1 + p / k) ** 2
        return d2 / k * np.array([[1, -p / k], [-p / k, (p / k) ** 2]])

    res = minimize_convex(ConvexProgram(2, [1.0, 1.0], [ConcaveConstraint(val, grad, hess)], box_lower=np.zeros(2)))
    assert res.status is Status.OPTIMAL
    # independent oracle: for each K the smallest P is K (e^{1/K} - 1); minimise over a fine grid
    k = np.linspace(0.05, 5, 200001)
    best = np.min(k * np.expm1(1 / k) + k)
    assert res.objective == pytest.approx(best, rel=1e-6)


def test_infeasible_program_is_reported():
    lin = LinearBlock(np.array([[1.0], [-1.0]]), np.array([-2.0, 1.0]))  # x >= 2 and x <= 1
    res = minimize_convex(ConvexProgram(1, [1.0], [lin]))
    assert res.status is Status.INFEASIBLE


def test_infeasible_start_is_repaired():
    # start far outside the disc; phase I must find an interior point
    res = minimize_convex(ConvexProgram(2, [0.0, 1.0], [_disc(0.5)], start=np.array([10.0, -7.0])))
    assert res.status is Status.OPTIMAL
    np.testing.assert_allclose(res.point, [0.0, -0.5], atol=1e-6)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 4.0))
@settings(max_examples=25, deadline=None)
def test_disc_optimum_property(a, b, r):
    c = np.array([a, b])
    if np.linalg.norm(c) < 1e-3:
        return
    res = minimize_convex(ConvexProgram(2, c, [_disc(r)]))
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(-r * np.linalg.norm(c), rel=1e-7, abs=1e-9)
