import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from heishardy.domains import HalfSpace, WeightSpec, cube, random_polytope
from heishardy.hardy import (
    SupportError, boundary_sign_terms, c_alpha, evaluate_quotient, evaluate_quotient_l2, interface_bracket,
    jensen_split, optimal_alpha, polytope_interface_audit, sharp_constant, superadditivity_gap,
    verify_translation_reduction,
)
from heishardy.heis_core import ScalarField
from heishardy.quadrature import QuadratureSpec, make_bump

E_T = HalfSpace.from_normal([0, 0, 1], 0.0)
positive = st.floats(0, 10, allow_nan=False)


def test_sharp_constant_examples():
    assert sharp_constant(2) == 0.25
    assert sharp_constant(3) == pytest.approx(8 / 27, rel=1e-15)
    vals = [sharp_constant(p) for p in (2, 3, 5, 10, 100, 1e4)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1 / math.e and abs(vals[-1] - 1 / math.e) < 1e-4
    with pytest.raises(ValueError):
        sharp_constant(1.5)


def test_c_alpha_examples():
    assert c_alpha(-0.5, 2) == 0.25
    assert c_alpha(0.0, 3.0) == 0.0
    assert optimal_alpha(2) == (-0.5, 0.25)


@pytest.mark.parametrize("p", [2.0, 2.5, 3.0, 4.0, 7.0])
def test_optimal_alpha_matches_grid(p):
    grid = np.linspace(-1, 0, 200_001)
    vals = c_alpha(grid, p)
    i = int(np.argmax(vals))
    # refine the grid optimum with a local parabola
    a0, (ym, y0, yp) = grid[i], vals[i - 1:i + 2]
    h = grid[1] - grid[0]
    a_grid = a0 + 0.5 * h * (ym - yp) / (ym - 2 * y0 + yp)
    a, C = optimal_alpha(p)
    assert abs(a - a_grid) < 1e-8
    assert C >= vals.max() - 1e-15
    assert C == pytest.approx(sharp_constant(p), rel=1e-14)


def test_superadditivity_examples():
    assert superadditivity_gap([3.0, 4.0], 2) == pytest.approx(0.0, abs=1e-12)
    assert superadditivity_gap([1.0, 1.0], 4) == pytest.approx(2.0, rel=1e-15)
    assert superadditivity_gap([0.0, 0.0], 3) == 0.0


@settings(max_examples=300, deadline=None)
@given(arrays(float, st.integers(1, 6), elements=st.floats(-10, 10)), st.floats(2, 8))
def test_superadditivity_nonnegative(v, p):
    scale = max(1.0, float(np.sum(v * v)) ** (p / 2))
    assert superadditivity_gap(v, p) >= -1e-12 * scale


def test_jensen_examples():
    x = np.array([1.0, 2.0, 3.0])
    bound, c = jensen_split(x, x, 2.0)
    assert bound == pytest.approx(36.0)
    bound, c = jensen_split(x, np.ones(3), 1.0)
    assert np.allclose(c, 1.0) and bound == pytest.approx(6.0)
    with pytest.raises(ValueError):
        jensen_split(x, np.zeros(3), 2.0)
    with pytest.raises(ValueError):
        jensen_split(-x, x, 2.0)
    with pytest.raises(ValueError):
        jensen_split(x, x, 0.5)


@settings(max_examples=300, deadline=None)
@given(arrays(float, 3, elements=positive), arrays(float, 3, elements=st.floats(1e-3, 10)), st.floats(1, 4))
def test_jensen_bound_dominates(x, a, alpha):
    bound, c = jensen_split(x, a, alpha)
    assert bound >= np.sum(x) ** alpha * (1 - 1e-12) - 1e-12
    # weights satisfy sum_i c_i^{1/(1-alpha)} = 1 when alpha > 1
    if alpha > 1.01:
        assert np.isclose(np.sum(c ** (1 / (1 - alpha))), 1.0, rtol=1e-8)


def test_boundary_terms_examples():
    assert boundary_sign_terms(2.0, 0.0, 2) == 4.0
    assert boundary_sign_terms(1.5, 1.5, 3) == 0.0
    with pytest.raises(ValueError):
        boundary_sign_terms(-1.0, 1.0, 2)
    with pytest.raises(ValueError):
        boundary_sign_terms(1.0, 1.0, 1.5)


@settings(max_examples=300, deadline=None)
@given(positive, positive, st.floats(2, 6))
def test_boundary_terms_nonnegative(A, B, p):
    direct = A ** p - A ** (p - 1) * B - B ** (p - 1) * A + B ** p
    fact = boundary_sign_terms(A, B, p)
    assert fact >= -1e-12
    assert math.isclose(fact, direct, rel_tol=1e-9, abs_tol=1e-9 * max(1.0, A, B) ** p)


@settings(max_examples=300, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(2, 6))
def test_interface_bracket_nonnegative(ak, al, p):
    assert interface_bracket(ak, al, p) >= -1e-9 * max(1.0, abs(ak), abs(al)) ** p


# ---------------------------------------------------------------- quotients

def test_quotient_above_quarter_on_upper_halfspace():
    rep = evaluate_quotient(make_bump([0.3, -0.2, 0.8], 0.3), E_T)
    assert rep.passed and rep.quotient > 0.25
    assert rep.constant == 0.25 and rep.label == "theorem"


def test_quotient_on_cube():
    rep = evaluate_quotient(make_bump([0.5, 0.5, 0.5], 0.4), cube(1), quad=QuadratureSpec(samples=200_000))
    assert rep.passed and rep.quotient > 0.25
    assert rep.quad["cells"]["method"] == "mc"


def test_quotient_scale_invariant():
    u = make_bump([0.3, -0.2, 0.8], 0.3)
    v = ScalarField(lambda P: 3.7 * u(P), 1, u.support, lambda P: 3.7 * u.grad(P))
    for p in (2.0, 3.0):
        a = evaluate_quotient(u, E_T, WeightSpec(p)).quotient
        b = evaluate_quotient(v, E_T, WeightSpec(p)).quotient
        assert abs(a - b) / a < 1e-12


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_quotient_dilation_invariant(p):
    c, r, lam = np.array([0.3, -0.2, 0.8]), 0.3, 1.7
    u = make_bump(c, r)
    # u o delta_{1/lam} is again a bump, centred at delta_lam c with radii (lam r, lam r, lam^2 r)
    v = make_bump(c * [lam, lam, lam ** 2], [lam * r, lam * r, lam ** 2 * r])
    a = evaluate_quotient(u, E_T, WeightSpec(p)).quotient
    b = evaluate_quotient(v, E_T, WeightSpec(p)).quotient
    assert abs(a - b) / a < 1e-10


def test_vertical_plane_quotient_invariant_under_t_shift():
    hs = HalfSpace.from_normal([1, 0, 0], 0.0)
    a = evaluate_quotient(make_bump([0.6, 0.1, 0.0], 0.4), hs).quotient
    b = evaluate_quotient(make_bump([0.6, 0.1, 2.5], 0.4), hs).quotient
    assert abs(a - b) / a < 1e-10


def test_generic_path_matches_l2_path():
    rng = np.random.default_rng(0)
    for _ in range(3):
        nu = rng.normal(size=3)
        hs = HalfSpace.from_normal(nu, 0.0)
        c = rng.normal(size=3)
        c += (0.7 - hs.signed_distance(c)) * hs.normal
        u = make_bump(c, 0.3)
        a = evaluate_quotient(u, hs, WeightSpec(2.0)).quotient
        b = evaluate_quotient_l2(u, hs).quotient
        assert abs(a - b) / b < 1e-10


def test_support_must_clear_boundary():
    with pytest.raises(SupportError):
        evaluate_quotient(make_bump([0.0, 0.0, 0.2], 0.3), E_T)
    with pytest.raises(SupportError):
        evaluate_quotient(ScalarField(lambda P: P[:, 0], 1), E_T)
    with pytest.raises(SupportError):
        evaluate_quotient(make_bump([0.0, 0.0, 0.3005], 0.3), E_T)


def test_report_json_is_sorted():
    rep = evaluate_quotient(make_bump([0.0, 0.0, 1.0], 0.5), E_T, WeightSpec(3.0, "l2"))
    d = rep.to_dict()
    assert rep.label == "conjecture" and "conjecture" in d["aggregation"]
    assert rep.to_json() == evaluate_quotient(make_bump([0.0, 0.0, 1.0], 0.5), E_T, WeightSpec(3.0, "l2")).to_json()
    assert list(json.loads(rep.to_json())) == sorted(d)


# ------------------------------------------------------- translation reduction

def test_translation_trivial_for_horizontal_plane():
    resid, direct, moved = verify_translation_reduction(E_T, make_bump([0.2, 0.1, 1.0], 0.4),
                                                        QuadratureSpec(order=24))
    assert resid == 0.0


def test_translation_reduction_tilted_plane():
    hs = HalfSpace.from_normal([0, 1, 1], 0.0)
    resid, _, _ = verify_translation_reduction(hs, make_bump([0.3, 0.2, 0.9], 0.3))
    assert resid < 1e-6


def test_translation_reduction_random_planes():
    rng = np.random.default_rng(1)
    for _ in range(10):
        nu = rng.normal(size=3)
        nu[2] = math.copysign(max(abs(nu[2]), 0.3), nu[2])
        hs = HalfSpace.from_normal(nu, rng.normal())
        c = rng.uniform(-1, 1, 3)
        c += (0.7 - hs.signed_distance(c)) * hs.normal
        resid, direct, moved = verify_translation_reduction(hs, make_bump(c, 0.3))
        assert resid < 1e-5
        assert direct.quotient > 0.25


def test_translation_rejects_vertical_plane():
    with pytest.raises(ValueError):
        verify_translation_reduction(HalfSpace.from_normal([1, 0, 0], 0.0), make_bump([1.0, 0, 0], 0.3))


# ----------------------------------------------------------- interface audit

def test_cube_interface_audit():
    audit = polytope_interface_audit(cube(1), p=2.0, points=10_000, seed=0)
    assert audit.negatives == 0
    assert audit.total_samples >= 10_000
    assert audit.consistency < 1e-12
    # adjacent faces meet at right angles; opposite faces never share an interface
    assert all(abs(r.angle - math.pi / 2) < 1e-12 for r in audit.interfaces)
    assert all(math.sqrt(1 - math.cos(r.angle)) == pytest.approx(1.0) for r in audit.interfaces)
    assert len(audit.interfaces) == 12


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_random_polytope_audit(p):
    audit = polytope_interface_audit(random_polytope(1, 6, seed=3), p=p, points=4000, seed=1)
    assert audit.negatives == 0 and audit.total_samples > 0
    assert audit.consistency < 1e-10
