import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heishardy.heis_core import horizontal_gradient, lam_matrix
from heishardy.quadrature import (
    Box, QuadratureError, QuadratureSpec, axis_rule, bump_profile, gradient_decomposition, integrate, integrate_many,
    make_bump, make_separable,
)

UNIT = Box(np.zeros(3), np.ones(3))


def test_constant_and_quadratic():
    one = integrate(lambda P: np.ones(len(P)), UNIT, QuadratureSpec())
    assert abs(one.value - 1.0) < 1e-14
    sq = integrate(lambda P: P[:, 0] ** 2, UNIT, QuadratureSpec())
    assert abs(sq.value - 1 / 3) < 1e-14


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.data())
def test_gauss_exact_up_to_degree(order, data):
    deg = data.draw(st.integers(0, 2 * order - 1))
    lo = data.draw(st.floats(-2, 1))
    hi = lo + data.draw(st.floats(0.1, 2))
    x, w = axis_rule(lo, hi, order)
    exact = (hi ** (deg + 1) - lo ** (deg + 1)) / (deg + 1)
    assert math.isclose(float(w @ x ** deg), exact, rel_tol=1e-11, abs_tol=1e-11)


def test_log_axis_and_breaks():
    x, w = axis_rule(1e-3, 1e3, 32, log=True)
    assert abs(w @ (1 / x) - math.log(1e6)) < 1e-12
    x, w = axis_rule(-1, 1, 8, breaks=[0.0])
    assert abs(w @ np.abs(x) - 1.0) < 1e-14


def test_bump_values():
    u = make_bump([0.0, 0.0, 1.0], 0.5)
    assert u(np.array([0.0, 0.0, 1.0])) == math.exp(-1)
    assert u(np.array([0.5, 0.0, 1.0])) == 0.0
    assert u(np.array([0.0, 0.0, 0.5])) == 0.0
    with pytest.raises(ValueError):
        make_bump([0.0, 0.0], 0.5)
    with pytest.raises(ValueError):
        bump_profile([0.0], -1.0)


def test_bump_mass_against_monte_carlo():
    u = make_bump([0.0, 0.0, 0.0], 1.0)
    box = Box(-np.ones(3), np.ones(3))
    gauss = integrate(u, box, QuadratureSpec(order=48))
    mc = integrate(u, box, QuadratureSpec("mc", samples=10 ** 7, seed=1))
    assert abs(gauss.value - mc.value) < 3 * mc.error


def test_mc_error_rate():
    f = lambda P: np.sin(3 * P[:, 0]) + P[:, 1] * P[:, 2]
    Ns = [10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6]
    errs = [integrate(f, UNIT, QuadratureSpec("mc", samples=N, seed=2)).error for N in Ns]
    slope = np.polyfit(np.log(Ns), np.log(errs), 1)[0]
    assert abs(slope + 0.5) < 0.1


def test_bump_gradient_matches_finite_differences():
    prof = bump_profile([0.1, -0.2, 0.3], [0.8, 0.6, 1.0], smoothness=1.5)
    rng = np.random.default_rng(3)
    Z = prof.lo + (prof.hi - prof.lo) * (0.25 + 0.5 * rng.random((20, 3)))
    h = 1e-6
    G = prof.gradient(Z)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (prof.value(Z + e) - prof.value(Z - e)) / (2 * h)
        assert np.max(np.abs(fd - G[:, k])) < 1e-6


def test_separable_t_derivative():
    w = bump_profile([1.0], [0.5])
    phi = bump_profile([0.0, 0.0], [1.0, 1.0])
    u = make_separable(w, phi)
    rng = np.random.default_rng(4)
    P = np.column_stack([rng.uniform(-0.7, 0.7, (50, 2)), rng.uniform(0.6, 1.4, 50)])
    want = w.gradient(P[:, 2:])[:, 0] * phi.value(P[:, :2])
    assert np.max(np.abs(u.grad(P)[:, 2] - want)) < 1e-10


def test_gradient_decomposition_sums_to_norm():
    w = bump_profile([1.0], [0.5])
    phi = bump_profile([0.2, -0.1], [1.0, 0.8])
    u = make_separable(w, phi)
    rng = np.random.default_rng(5)
    P = np.column_stack([rng.uniform(-0.6, 0.8, (50, 2)), rng.uniform(0.6, 1.4, 50)])
    total = sum(gradient_decomposition(phi, w, P))
    gh = np.array([horizontal_gradient(u, p) for p in P])
    assert np.max(np.abs(total - np.sum(gh ** 2, axis=-1))) < 1e-8


def test_lam_properties():
    L = lam_matrix(2)
    assert np.array_equal(L @ L, -np.eye(4))
    assert np.array_equal(L @ np.array([1.0, 2, 3, 4]), [3, 4, -1, -2])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_raises():
    with pytest.raises(QuadratureError):
        integrate(lambda P: 1 / (P[:, 0] - P[:, 0]), UNIT, QuadratureSpec(order=4))
    with pytest.raises(QuadratureError):
        integrate(lambda P: np.log(P[:, 0] - 0.5), UNIT, QuadratureSpec("mc", samples=2000))


def test_worker_count_does_not_change_results():
    u = make_bump([0.5, 0.5, 0.5], 0.5)
    f = lambda P: np.stack([u(P), u(P) ** 2], axis=-1)
    for spec in (QuadratureSpec(order=48), QuadratureSpec("mc", samples=300_000, seed=6)):
        a = integrate_many(f, UNIT, spec, workers=1)
        b = integrate_many(f, UNIT, spec, workers=4)
        assert [v.value for v in a] == pytest.approx([v.value for v in b], rel=1e-13, abs=0)


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec("simpson")
    with pytest.raises(ValueError):
        QuadratureSpec(order=1)
    with pytest.raises(ValueError):
        QuadratureSpec("mc", samples=10)
    with pytest.raises(ValueError):
        Box([0.0, 1.0], [1.0, 1.0])
