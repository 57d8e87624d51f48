"""Distances on H^n: Kaplan gauge, Carnot-Caratheodory distance, reduced distance.

The CC distance is computed by direct transcription: piecewise-constant
controls on a uniform mesh of [0, 1], with the state advanced exactly per
segment, and the endpoint constraint enforced with an augmented Lagrangian
whose inner problems are solved by L-BFGS-B.
"""
from __future__ import annotations

import configparser
import logging
import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .heis_core import DimensionError, as_point, dim_of, group_compose, split

log = logging.getLogger(__name__)


def kaplan_gauge(p):
    """((|x|^2+|y|^2)^2 + 4t^2)^(1/4)."""
    x, y, t = split(np.asarray(p, dtype=float))
    r2 = np.sum(x * x, axis=-1) + np.sum(y * y, axis=-1)
    return (r2 * r2 + 4.0 * t * t) ** 0.25


def kaplan_distance(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape[-1] != q.shape[-1]:
        raise DimensionError("points live in different H^n")
    return kaplan_gauge(group_compose(-q, p))


@dataclass(frozen=True, eq=False)
class HorizontalPath:
    """Piecewise-constant controls on a uniform partition of [0, 1].

    ``controls`` has shape ``(M, 2n)``; row j holds (a_j, b_j).
    """

    controls: np.ndarray
    start: np.ndarray

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.controls, dtype=float))
        s = as_point(self.start)
        if U.shape[0] < 1 or U.shape[1] != 2 * dim_of(s):
            raise ValueError(f"controls of shape {U.shape} do not match start in H^{dim_of(s)}")
        object.__setattr__(self, "controls", U)
        object.__setattr__(self, "start", s)

    @property
    def segments(self) -> int:
        return self.controls.shape[0]

    @property
    def n(self) -> int:
        return dim_of(self.start)

    def reversed(self) -> "HorizontalPath":
        """The same curve traversed backwards, starting at this path's endpoint."""
        return HorizontalPath(-self.controls[::-1], integrate_path(self))

    def refined(self) -> "HorizontalPath":
        """Split every segment in two; the traced curve is unchanged."""
        return HorizontalPath(np.repeat(self.controls, 2, axis=0), self.start)


def path_length(path: HorizontalPath) -> float:
    return float(np.sum(np.linalg.norm(path.controls, axis=1)) / path.segments)


def path_states(path: HorizontalPath) -> np.ndarray:
    """Points at the mesh nodes tau_j = j/M, shape (M+1, 2n+1)."""
    M, n = path.segments, path.n
    h = 1.0 / M
    steps = np.zeros((M, 2 * n + 1))
    steps[:, :2 * n] = h * path.controls
    out = np.empty((M + 1, 2 * n + 1))
    out[0] = path.start
    for j in range(M):
        # each segment is right multiplication by (h a_j, h b_j, 0)
        out[j + 1] = group_compose(out[j], steps[j])
    return out


def _endpoint_and_jac(U, start, want_jac=True):
    M, m = U.shape
    n = m // 2
    h = 1.0 / M
    a, b = U[:, :n], U[:, n:]
    x0, y0, t0 = start[:n], start[n:2 * n], start[2 * n]
    ca = np.cumsum(a, axis=0)
    cb = np.cumsum(b, axis=0)
    X = x0 + h * np.vstack([np.zeros(n), ca[:-1]])
    Y = y0 + h * np.vstack([np.zeros(n), cb[:-1]])
    t = t0 + 2.0 * h * np.sum(a * Y - b * X)
    end = np.concatenate([x0 + h * ca[-1], y0 + h * cb[-1], [t]])
    if not want_jac:
        return end, None
    a_after = ca[-1] - ca
    b_after = cb[-1] - cb
    J = np.zeros((2 * n + 1, M, m))
    idx = np.arange(n)
    J[idx, :, idx] = h
    J[n + idx, :, n + idx] = h
    J[2 * n, :, :n] = 2.0 * h * (Y - h * b_after)
    J[2 * n, :, n:] = 2.0 * h * (-X + h * a_after)
    return end, J.reshape(2 * n + 1, M * m)


def integrate_path(path: HorizontalPath) -> np.ndarray:
    """Endpoint of the horizontal curve, integrated exactly segment by segment."""
    return _endpoint_and_jac(path.controls, path.start, want_jac=False)[0]


@dataclass(frozen=True)
class SolverConfig:
    segments: int = 16
    endpoint_tol: float = 1e-6
    gap_tol: float = 1e-3
    multistarts: int = 8
    seed: int = 0
    max_segments: int = 256
    max_outer: int = 40

    def __post_init__(self):
        if self.segments < 1 or self.max_segments < self.segments:
            raise ValueError("need 1 <= segments <= max_segments")
        if self.endpoint_tol <= 0 or self.gap_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.multistarts < 1:
            raise ValueError("multistarts must be >= 1")

    @classmethod
    def from_mapping(cls, data) -> "SolverConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, val in data.items():
            key = key.strip().lower()
            if key not in kinds:
                raise ValueError(f"unknown solver config key {key!r}")
            kw[key] = int(val) if kinds[key] in ("int", int) else float(val)
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "SolverConfig":
        """Read ``key = value`` lines; ``#`` starts a comment, a section header is optional."""
        with open(path) as fh:
            text = fh.read()
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.read_string("[__top__]\n" + text)
        data = {}
        for section in parser.sections():
            data.update(parser[section])
        return cls.from_mapping(data)


@dataclass
class CCResult:
    distance: float
    path: HorizontalPath
    converged: bool
    refinement_gap: float
    endpoint_error: float = 0.0
    history: list = field(default_factory=list)

    @property
    def endpoint(self):
        return integrate_path(self.path)


@dataclass(frozen=True, eq=False)
class AffineSet:
    """The affine subspace {z : A z = b} of R^{2n+1}."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise ValueError("A and b disagree in row count")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def intersect(self, other: "AffineSet") -> "AffineSet":
        return AffineSet(np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]))

    def nearest(self, z):
        """Euclidean projection of ``z`` onto the set, or None if the set is empty."""
        z = np.asarray(z, dtype=float)
        r = self.A @ z - self.b
        step, *_ = np.linalg.lstsq(self.A, r, rcond=None)
        w = z - step
        scale = 1.0 + np.max(np.abs(self.b), initial=0.0)
        if np.max(np.abs(self.A @ w - self.b)) > 1e-9 * scale:
            return None
        return w

    def residual(self, z):
        return self.A @ z - self.b


def point_set(q) -> AffineSet:
    q = as_point(q)
    return AffineSet(np.eye(q.size), q)


def hyperplane_set(normal, offset) -> AffineSet:
    return AffineSet(np.asarray(normal, dtype=float)[None, :], [offset])


def horizontal_plane(p) -> AffineSet:
    """p + span{X_i(p), Y_i(p)}: the affine hyperplane with normal (-2y, 2x, 1)."""
    p = as_point(p)
    x, y, _ = split(p)
    m = np.concatenate([-2.0 * y, 2.0 * x, [1.0]])
    return AffineSet(m[None, :], [m @ p])


def vertical_line(x, y) -> AffineSet:
    """{(x, y, t) : t real}."""
    xy = np.concatenate([np.atleast_1d(x), np.atleast_1d(y)]).astype(float)
    k = xy.size
    A = np.hstack([np.eye(k), np.zeros((k, 1))])
    return AffineSet(A, xy)


def _inner_objective(Uflat, shape, start, A, b, lam, mu):
    U = Uflat.reshape(shape)
    h = 1.0 / shape[0]
    end, J = _endpoint_and_jac(U, start)
    c = A @ end - b
    energy = h * np.sum(U * U)
    val = energy + lam @ c + 0.5 * mu * (c @ c)
    g = 2.0 * h * Uflat + (A @ J).T @ (lam + mu * c)
    return val, g


def _augmented_lagrangian(U0, start, target: AffineSet, cfg: SolverConfig, lam=None, mu=10.0):
    shape = U0.shape
    A, b = target.A, target.b
    lam = np.zeros(A.shape[0]) if lam is None else lam.copy()
    U = U0.ravel().copy()
    viol_prev = np.inf
    viol = np.inf
    for _ in range(cfg.max_outer):
        res = minimize(
            _inner_objective, U, args=(shape, start, A, b, lam, mu), jac=True,
            method="L-BFGS-B", options={"maxiter": 20000, "ftol": 1e-15, "gtol": 1e-11, "maxcor": 30},
        )
        U = res.x
        end, _ = _endpoint_and_jac(U.reshape(shape), start, want_jac=False)
        c = A @ end - b
        viol = float(np.max(np.abs(c)))
        lam = lam + mu * c
        if viol <= cfg.endpoint_tol:
            break
        if viol > 0.25 * viol_prev:
            mu = min(mu * 10.0, 1e10)
        viol_prev = viol
    return U.reshape(shape), lam, viol


def _initial_guesses(start, target: AffineSet, cfg: SolverConfig, rng):
    n = dim_of(start)
    M = cfg.segments
    goal = target.nearest(start)
    xs, ys, _ = split(start)
    xg, yg, _ = split(goal)
    D = np.concatenate([xg - xs, yg - ys])
    straight = np.tile(D, (M, 1))
    guesses = [straight]
    # t reached by the straight segment, and the loop size that would fix the rest
    t_straight = _endpoint_and_jac(straight, start, want_jac=False)[0]
    dt = goal[-1] - t_straight[-1] if target.A.shape[0] == goal.size else 0.0
    scale = max(math.sqrt(math.pi * abs(dt)), 1e-3 + 0.1 * np.linalg.norm(D))
    tau = (np.arange(M) + 0.5) / M
    for k in range(1, cfg.multistarts):
        i = rng.integers(n)
        amp = scale * rng.uniform(0.5, 1.5)
        sign = -np.sign(dt) if (dt != 0 and k % 2 == 1) else rng.choice([-1.0, 1.0])
        phase = rng.uniform(0, 2 * np.pi)
        U = straight.copy()
        U[:, i] += amp * np.cos(2 * np.pi * tau + phase)
        U[:, n + i] += sign * amp * np.sin(2 * np.pi * tau + phase)
        U += 0.05 * scale * rng.standard_normal(U.shape)
        guesses.append(U)
    return guesses


def _solve_on_set(start, target: AffineSet, cfg: SolverConfig) -> CCResult:
    start = as_point(start)
    n = dim_of(start)
    if target.nearest(start) is None:
        return CCResult(math.inf, HorizontalPath(np.zeros((cfg.segments, 2 * n)), start), False, math.nan, math.inf)
    if np.max(np.abs(target.residual(start))) == 0.0:
        return CCResult(0.0, HorizontalPath(np.zeros((cfg.segments, 2 * n)), start), True, 0.0, 0.0)

    rng = np.random.default_rng(cfg.seed)
    best = None
    for U0 in _initial_guesses(start, target, cfg, rng):
        U, lam, viol = _augmented_lagrangian(U0, start, target, cfg)
        L = path_length(HorizontalPath(U, start))
        feasible = viol <= cfg.endpoint_tol
        key = (not feasible, L if feasible else viol)
        if best is None or key < best[0]:
            best = (key, U, lam, viol, L)
    _, U, lam, viol, L = best

    history = [(U.shape[0], L)]
    gap = math.inf
    while U.shape[0] * 2 <= cfg.max_segments:
        U2, lam2, viol2 = _augmented_lagrangian(np.repeat(U, 2, axis=0), start, target, cfg, lam=lam)
        L2 = path_length(HorizontalPath(U2, start))
        if viol2 > cfg.endpoint_tol or L2 > L + 1e-9:
            # the refined solve did not improve on the embedded coarse path
            gap = 0.0 if viol <= cfg.endpoint_tol else math.inf
            break
        gap = L - L2
        U, lam, viol, L = U2, lam2, viol2, L2
        history.append((U.shape[0], L))
        if gap < cfg.gap_tol:
            break
    converged = viol <= cfg.endpoint_tol and gap < cfg.gap_tol
    if not converged:
        log.info("cc solve not converged: violation %.3g, gap %.3g", viol, gap)
    return CCResult(L, HorizontalPath(U, start), converged, gap, viol, history)


def cc_distance(p, q, cfg: Optional[SolverConfig] = None) -> CCResult:
    """Upper-bound estimate of the Carnot-Caratheodory distance from p to q."""
    cfg = cfg or SolverConfig()
    p = as_point(p)
    q = as_point(q, dim_of(p))
    return _solve_on_set(p, point_set(q), cfg)


def cc_distance_to_set(p, S: AffineSet, cfg: Optional[SolverConfig] = None) -> CCResult:
    """Infimal horizontal length from p to the affine set S; inf if S is empty."""
    cfg = cfg or SolverConfig()
    p = as_point(p)
    if S.A.shape[1] != p.size:
        raise DimensionError("set and point live in different H^n")
    return _solve_on_set(p, S, cfg)


def reduced_distance(p, normal, offset, cfg: Optional[SolverConfig] = None) -> CCResult:
    """CC distance from p to the boundary plane <xi, normal> = offset within p's horizontal plane."""
    S = hyperplane_set(normal, offset).intersect(horizontal_plane(p))
    return cc_distance_to_set(p, S, cfg)


@dataclass
class ScanResult:
    min_ratio: float
    max_ratio: float
    ratios: np.ndarray
    degenerate: int
    unconverged: int

    def __iter__(self):
        return iter((self.min_ratio, self.max_ratio))


def scan_pairs(pairs, cfg: Optional[SolverConfig] = None) -> ScanResult:
    """Extremes of delta_cc / delta_K over explicit (p, q) pairs.

    Pairs with delta_K = 0 are skipped as degenerate; unconverged solves are
    excluded and counted.
    """
    cfg = cfg or SolverConfig()
    ratios, degenerate, unconverged = [], 0, 0
    for p, q in pairs:
        dk = float(kaplan_distance(p, q))
        if dk == 0.0:
            degenerate += 1
            continue
        res = cc_distance(p, q, cfg)
        if not res.converged:
            unconverged += 1
            continue
        ratios.append(res.distance / dk)
    ratios = np.asarray(ratios)
    if ratios.size == 0:
        return ScanResult(math.nan, math.nan, ratios, degenerate, unconverged)
    return ScanResult(float(ratios.min()), float(ratios.max()), ratios, degenerate, unconverged)


def bilipschitz_scan(sample_count: int, region=None, n: int = 1, cfg: Optional[SolverConfig] = None,
                     seed: int = 0) -> ScanResult:
    """Sample ``sample_count`` uniform pairs in ``region`` (a box ``(lo, hi)``) and scan them."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    if region is None:
        lo, hi = -2.0 * np.ones(2 * n + 1), 2.0 * np.ones(2 * n + 1)
    else:
        lo, hi = (np.asarray(r, dtype=float) for r in region)
    rng = np.random.default_rng(seed)
    pairs = [(rng.uniform(lo, hi), rng.uniform(lo, hi)) for _ in range(sample_count)]
    return scan_pairs(pairs, cfg)
