import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from heishardy.heis_core import DimensionError, dilate, group_compose
from heishardy.metrics import (
    AffineSet, HorizontalPath, SolverConfig, bilipschitz_scan, cc_distance, cc_distance_to_set,
    hyperplane_set, integrate_path, kaplan_distance, kaplan_gauge, path_length, path_states, reduced_distance,
    scan_pairs, vertical_line,
)

points = arrays(float, 3, elements=st.floats(-5, 5, allow_nan=False))


def test_gauge_examples():
    assert kaplan_gauge(np.array([1.0, 0, 0])) == 1.0
    assert np.isclose(kaplan_gauge(np.array([0, 0, 1.0])), math.sqrt(2), rtol=0, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(points, st.floats(0.05, 20))
def test_gauge_homogeneity(p, lam):
    assert np.isclose(kaplan_gauge(dilate(lam, p)), lam * kaplan_gauge(p), rtol=1e-10, atol=1e-300)


def test_kaplan_distance_examples():
    p = np.array([0.3, -1.0, 2.0])
    assert kaplan_distance(p, p) == 0.0
    assert kaplan_distance([1, 0, 0], [0, 0, 0]) == 1.0
    with pytest.raises(DimensionError):
        kaplan_distance(np.zeros(3), np.zeros(5))


@settings(max_examples=200, deadline=None)
@given(points, points, points)
def test_kaplan_left_invariant_and_symmetric(g, p, q):
    d = kaplan_distance(p, q)
    assert np.isclose(kaplan_distance(group_compose(g, p), group_compose(g, q)), d, rtol=1e-9, atol=1e-6)
    assert np.isclose(kaplan_distance(q, p), d, rtol=1e-12, atol=1e-12)


def test_path_length_examples():
    assert path_length(HorizontalPath(np.zeros((4, 2)), np.zeros(3))) == 0.0
    assert path_length(HorizontalPath([[3.0, 4.0]], np.zeros(3))) == 5.0


def test_path_length_midpoint_refinement():
    # control (1 + s, s^2) sampled at segment midpoints: midpoint-rule error O(M^-2)
    exact, _ = quad(lambda s: math.hypot(1 + s, s * s), 0, 1, epsabs=1e-13, epsrel=1e-13)
    errs = []
    for M in (8, 16, 32, 64):
        s = (np.arange(M) + 0.5) / M
        U = np.stack([1 + s, s * s], axis=1)
        errs.append(abs(path_length(HorizontalPath(U, np.zeros(3))) - exact))
    for a, b in zip(errs, errs[1:]):
        assert 3.5 < a / b < 4.5


def test_integrate_path_examples():
    assert np.array_equal(integrate_path(HorizontalPath([[1.0, 0.0]], np.zeros(3))), [1, 0, 0])
    end = integrate_path(HorizontalPath(np.tile([0.7, -1.3], (5, 1)), np.zeros(3)))
    assert np.allclose(end, [0.7, -1.3, 0.0], atol=1e-15)


def test_square_loop_area():
    # +x, +y, -x, -y: counter-clockwise square of side 1/4, area 1/16
    U = np.array([[1.0, 0], [0, 1.0], [-1.0, 0], [0, -1.0]])
    end = integrate_path(HorizontalPath(U, np.zeros(3)))
    assert np.allclose(end, [0, 0, -4 * (1 / 16)], atol=1e-15)
    # consistent with [X, Y] = -4 d/dt: the loop moves t by -4 x area


def test_path_states_match_endpoint():
    rng = np.random.default_rng(0)
    path = HorizontalPath(rng.normal(size=(9, 4)), rng.normal(size=5))
    assert np.allclose(path_states(path)[-1], integrate_path(path))


def test_path_reversal_returns_to_start():
    rng = np.random.default_rng(1)
    for n in (1, 2):
        path = HorizontalPath(rng.normal(size=(12, 2 * n)), rng.normal(size=2 * n + 1))
        assert np.allclose(integrate_path(path.reversed()), path.start, atol=1e-12)


def test_refinement_keeps_curve():
    rng = np.random.default_rng(2)
    path = HorizontalPath(rng.normal(size=(6, 2)), rng.normal(size=3))
    fine = path.refined()
    assert np.allclose(integrate_path(fine), integrate_path(path), atol=1e-13)
    assert np.isclose(path_length(fine), path_length(path))


def test_cc_straight_segment():
    res = cc_distance(np.zeros(3), [3.0, 4.0, 0.0])
    assert res.converged
    assert abs(res.distance - 5.0) < 1e-3
    assert res.distance == pytest.approx(path_length(res.path))
    assert np.allclose(res.endpoint, [3, 4, 0], atol=1e-5)


def test_cc_no_start_beats_straight_line():
    # every multistart is an upper bound; none may undercut the projection bound |(x, y)|
    for seed in range(3):
        res = cc_distance(np.zeros(3), [3.0, 4.0, 0.0], SolverConfig(seed=seed))
        assert res.distance > 5.0 - 1e-3


def test_cc_zero_distance():
    p = np.array([0.2, -0.4, 1.0])
    assert cc_distance(p, p).distance == 0.0


def test_cc_vertical_point_matches_isoperimetry():
    # shortest horizontal curve to (0, 0, 1) is a circle of area 1/4: length sqrt(pi)
    res = cc_distance(np.zeros(3), [0.0, 0.0, 1.0])
    assert res.converged
    assert math.sqrt(math.pi) - 1e-6 < res.distance < math.sqrt(math.pi) + 2e-3


def test_cc_monotone_under_refinement():
    res = cc_distance(np.zeros(3), [0.5, 0.0, 0.7])
    lengths = [L for _, L in res.history]
    assert all(b <= a + 1e-9 for a, b in zip(lengths, lengths[1:]))


def test_cc_bounded_by_planar_distance():
    rng = np.random.default_rng(3)
    for _ in range(3):
        xy = rng.uniform(-2, 2, 2)
        res = cc_distance(np.zeros(3), [xy[0], xy[1], 0.0])
        assert res.distance <= np.hypot(*xy) + 1e-6
        assert abs(res.distance - np.hypot(*xy)) < 1e-3


def test_cc_left_invariance():
    rng = np.random.default_rng(4)
    p, q, g = rng.uniform(-1, 1, (3, 3))
    a = cc_distance(p, q).distance
    b = cc_distance(group_compose(g, p), group_compose(g, q)).distance
    assert abs(a - b) < 2e-3


def test_cc_in_h2():
    res = cc_distance(np.zeros(5), [1.0, 0.0, 0.0, 0.0, 0.0])
    assert abs(res.distance - 1.0) < 1e-3


def test_set_target_empty_is_infinite():
    S = AffineSet([[1.0, 0, 0], [1.0, 0, 0]], [0.0, 1.0])
    res = cc_distance_to_set(np.zeros(3), S)
    assert math.isinf(res.distance) and not res.converged


def test_set_target_dimension_checked():
    with pytest.raises(DimensionError):
        cc_distance_to_set(np.zeros(3), hyperplane_set(np.ones(5), 0.0))


def test_reduced_distance_on_boundary_is_zero():
    p = np.array([0.3, 0.2, 0.5])
    nu = np.array([0.0, 0.6, 0.8])
    assert reduced_distance(p, nu, float(nu @ p)).distance == 0.0


def test_reduced_distance_to_vertical_plane():
    p = np.array([1.7, 0.4, -0.3])
    res = reduced_distance(p, [1.0, 0.0, 0.0], 0.5)
    assert abs(res.distance - 1.2) < 1e-3


def test_reduced_distance_dominates_free_target():
    p = np.array([0.4, 0.8, 1.0])
    nu = np.array([0.3, 0.2, 1.0]) / np.linalg.norm([0.3, 0.2, 1.0])
    red = reduced_distance(p, nu, 0.2).distance
    free = cc_distance_to_set(p, hyperplane_set(nu, 0.2)).distance
    assert red >= free - 1e-6


def test_vertical_line_distance_is_planar():
    res = cc_distance_to_set(np.array([1.0, 2.0, 3.0]), vertical_line(-1.0, 0.5))
    assert abs(res.distance - np.hypot(2.0, 1.5)) < 1e-3


def test_scan_examples():
    res = scan_pairs([(np.zeros(3), np.zeros(3)), (np.zeros(3), np.array([3.0, 4.0, 0.0]))])
    assert res.degenerate == 1
    assert res.ratios.size == 1 and abs(res.ratios[0] - 1.0) < 1e-3
    lo, hi = bilipschitz_scan(8, seed=5)
    assert 0 < lo <= hi < math.inf
    with pytest.raises(ValueError):
        bilipschitz_scan(0)


def test_solver_config_file(tmp_path):
    f = tmp_path / "solver.cfg"
    f.write_text("# solver\nsegments = 8\ngap_tol = 1e-2  # looser\nmultistarts=2\nseed = 7\n")
    cfg = SolverConfig.from_file(f)
    assert (cfg.segments, cfg.gap_tol, cfg.multistarts, cfg.seed) == (8, 1e-2, 2, 7)
    f.write_text("bogus = 1\n")
    with pytest.raises(ValueError, match="bogus"):
        SolverConfig.from_file(f)


def test_solver_deterministic():
    q = np.array([0.3, -0.2, 0.4])
    a = cc_distance(np.zeros(3), q)
    b = cc_distance(np.zeros(3), q)
    assert a.distance == b.distance
    assert np.array_equal(a.path.controls, b.path.controls)
