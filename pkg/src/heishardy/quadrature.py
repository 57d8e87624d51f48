"""Integration of densities over boxes and partition cells, plus concrete test functions.

Boxes use tensor Gauss-Legendre rules (optionally piecewise, optionally in a
logarithmic variable per axis); error estimates compare against the rule of
half the order. Partition cells use seeded Monte Carlo with rejection, with
the standard error as estimate.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .heis_core import ScalarField, lam_matrix

CHUNK = 1 << 16


class QuadratureError(RuntimeError):
    pass


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("HEISHARDY_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box needs lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    @property
    def dim(self) -> int:
        return self.lo.size

    def intersect(self, other: "Box") -> Optional["Box"]:
        lo, hi = np.maximum(self.lo, other.lo), np.minimum(self.hi, other.hi)
        if np.any(hi <= lo):
            return None
        return Box(lo, hi)

    def corners(self):
        m = self.dim
        grid = np.meshgrid(*[[self.lo[k], self.hi[k]] for k in range(m)], indexing="ij")
        return np.array(grid).reshape(m, -1).T


@dataclass(frozen=True)
class QuadratureSpec:
    """How to integrate.

    ``method`` is ``"gauss"`` or ``"mc"``. For Gauss, ``order`` is the number
    of nodes per panel (int or per-axis tuple), ``breaks`` optionally gives
    per-axis panel breakpoints (``None`` entries mean a single panel), and
    axes in ``log_axes`` are integrated in s = log(coordinate).
    """

    method: str = "gauss"
    order: object = 24
    samples: int = 10 ** 6
    seed: int = 0
    breaks: Optional[tuple] = None
    log_axes: tuple = ()

    def __post_init__(self):
        if self.method not in ("gauss", "mc"):
            raise ValueError(f"unknown quadrature method {self.method!r}")
        orders = np.atleast_1d(self.order)
        if self.method == "gauss" and np.any(orders < 2):
            raise ValueError("Gauss order must be >= 2")
        if self.method == "mc" and self.samples < 1000:
            raise ValueError("Monte Carlo needs at least 1000 samples")

    def as_dict(self) -> dict:
        d = {"method": self.method, "seed": self.seed}
        if self.method == "gauss":
            d["order"] = np.atleast_1d(self.order).tolist()
            if self.log_axes:
                d["log_axes"] = list(self.log_axes)
        else:
            d["samples"] = self.samples
        return d


@dataclass
class IntegralValue:
    value: float
    error: float
    evaluations: int = 0

    def as_dict(self):
        return {"value": self.value, "error": self.error, "evaluations": self.evaluations}


# ------------------------------------------------------------------ Gauss rules

def _gl(k: int):
    return np.polynomial.legendre.leggauss(k)


def axis_rule(lo: float, hi: float, order: int, breaks=None, log=False):
    """1-D composite Gauss-Legendre nodes and weights on [lo, hi]."""
    pts = [lo, hi] if breaks is None else sorted(set([lo, hi, *[b for b in breaks if lo < b < hi]]))
    if log:
        if lo <= 0:
            raise ValueError("log axis needs a positive lower limit")
        pts = np.log(pts)
    x, w = _gl(order)
    nodes, weights = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (b + a))
        weights.append(0.5 * (b - a) * w)
    nodes, weights = np.concatenate(nodes), np.concatenate(weights)
    if log:
        nodes = np.exp(nodes)
        weights = weights * nodes
    return nodes, weights


def _tensor_sum(f, rules, workers):
    """sum_i w_i f(x_i) over the tensor grid, chunked along the first axis."""
    dims = len(rules)
    first_nodes, first_w = rules[0]
    rest = rules[1:]
    if rest:
        grids = np.meshgrid(*[r[0] for r in rest], indexing="ij")
        wgrids = np.meshgrid(*[r[1] for r in rest], indexing="ij")
        rest_pts = np.stack([g.ravel() for g in grids], axis=-1)
        rest_w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    else:
        rest_pts = np.zeros((1, 0))
        rest_w = np.ones(1)
    per_row = rest_w.size
    rows = max(1, CHUNK // per_row)
    starts = list(range(0, first_nodes.size, rows))

    def block(s):
        xs = first_nodes[s:s + rows]
        ws = first_w[s:s + rows]
        P = np.empty((xs.size * per_row, dims))
        P[:, 0] = np.repeat(xs, per_row)
        P[:, 1:] = np.tile(rest_pts, (xs.size, 1))
        W = np.repeat(ws, per_row) * np.tile(rest_w, xs.size)
        vals = np.asarray(f(P), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        _check_finite(vals, P)
        return np.sum(W[:, None] * vals, axis=0)

    parts = _map(block, starts, workers)
    return np.sum(np.array(parts), axis=0), first_nodes.size * per_row


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _check_finite(vals, P):
    bad = ~np.all(np.isfinite(vals), axis=-1)
    if bad.any():
        raise QuadratureError(f"non-finite integrand value at {P[bad][0]}")


def _as_box(region):
    return region if isinstance(region, Box) else Box(*region)


def _gauss(f, box: Box, spec: QuadratureSpec, workers):
    m = box.dim
    orders = np.broadcast_to(np.atleast_1d(spec.order), (m,))
    breaks = spec.breaks or (None,) * m

    def rules(scale):
        return [axis_rule(box.lo[k], box.hi[k], max(1, int(math.ceil(orders[k] * scale))),
                          breaks[k], k in spec.log_axes) for k in range(m)]

    hi_val, evals = _tensor_sum(f, rules(1.0), workers)
    lo_val, evals2 = _tensor_sum(f, rules(0.5), workers)
    return hi_val, np.abs(hi_val - lo_val), evals + evals2


def _mc(f, box: Box, spec: QuadratureSpec, workers, mask=None):
    m = box.dim
    root = np.random.SeedSequence(spec.seed)
    n_chunks = max(1, math.ceil(spec.samples / CHUNK))
    seeds = root.spawn(n_chunks)
    sizes = [min(CHUNK, spec.samples - i * CHUNK) for i in range(n_chunks)]

    def block(i):
        rng = np.random.default_rng(seeds[i])
        P = box.lo + (box.hi - box.lo) * rng.random((sizes[i], m))
        vals = np.zeros((sizes[i], 1))
        keep = np.ones(sizes[i], dtype=bool) if mask is None else mask(P)
        if keep.any():
            v = np.asarray(f(P[keep]), dtype=float)
            if v.ndim == 1:
                v = v[:, None]
            _check_finite(v, P[keep])
            vals = np.zeros((sizes[i], v.shape[1]))
            vals[keep] = v
        return vals.sum(axis=0), (vals * vals).sum(axis=0)

    parts = _map(block, range(n_chunks), workers)
    width = max(p[0].size for p in parts)
    s1 = np.sum([np.broadcast_to(p[0], (width,)) for p in parts], axis=0)
    s2 = np.sum([np.broadcast_to(p[1], (width,)) for p in parts], axis=0)
    N = spec.samples
    mean = s1 / N
    var = np.maximum(s2 / N - mean * mean, 0.0)
    vol = box.volume
    return vol * mean, vol * np.sqrt(var / (N - 1)), N


def integrate_many(f, region, spec: QuadratureSpec, workers: Optional[int] = None):
    """Integrate a vector-valued density; ``f`` maps (N, m) points to (N,) or (N, k).

    ``region`` is a :class:`Box`, a ``(lo, hi)`` pair, or a partition cell
    (anything with ``contains`` and a ``polytope``) paired with a clipping box
    as ``(cell, box)``.
    """
    workers = default_workers() if workers is None else workers
    if isinstance(region, tuple) and len(region) == 2 and hasattr(region[0], "contains"):
        cell, clip = region
        box = _as_box(clip)
        if spec.method != "mc":
            raise ValueError("partition cells are integrated by Monte Carlo")
        val, err, evals = _mc(f, box, spec, workers, mask=cell.contains)
    else:
        box = _as_box(region)
        if spec.method == "gauss":
            val, err, evals = _gauss(f, box, spec, workers)
        else:
            val, err, evals = _mc(f, box, spec, workers)
    return [IntegralValue(float(v), float(e), int(evals)) for v, e in zip(np.atleast_1d(val), np.atleast_1d(err))]


def integrate(f, region, spec: QuadratureSpec, workers: Optional[int] = None) -> IntegralValue:
    return integrate_many(f, region, spec, workers)[0]


# --------------------------------------------------------------- test functions

@dataclass(frozen=True, eq=False)
class Profile:
    """A compactly supported function on R^k with its gradient.

    ``func`` maps (N, k) to (N,), ``grad`` maps (N, k) to (N, k). ``breaks``
    holds per-axis points where the profile is less smooth (quadrature hint).
    """

    func: Callable
    grad: Callable
    lo: np.ndarray
    hi: np.ndarray
    breaks: Optional[tuple] = None

    @property
    def dim(self) -> int:
        return np.atleast_1d(self.lo).size

    def _inside(self, Z):
        return np.all((Z > self.lo) & (Z < self.hi), axis=-1)

    def value(self, Z):
        Z = np.asarray(Z, dtype=float).reshape(-1, self.dim)
        out = np.zeros(Z.shape[0])
        m = self._inside(Z)
        if m.any():
            out[m] = self.func(Z[m])
        return out

    def gradient(self, Z):
        Z = np.asarray(Z, dtype=float).reshape(-1, self.dim)
        out = np.zeros_like(Z)
        m = self._inside(Z)
        if m.any():
            out[m] = self.grad(Z[m])
        return out


def bump_profile(center, radii, smoothness: float = 1.0) -> Profile:
    """exp(-k / (1 - s^2)) for s^2 = |(z - center)/radii|^2 < 1, zero elsewhere."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    r = np.broadcast_to(np.asarray(radii, dtype=float), c.shape).copy()
    if np.any(r <= 0):
        raise ValueError("bump radii must be positive")
    k = float(smoothness)

    def parts(Z):
        q = (Z - c) / r
        s2 = np.sum(q * q, axis=-1)
        inside = s2 < 1.0
        g = np.where(inside, 1.0 - s2, 1.0)
        val = np.where(inside, np.exp(-k / g), 0.0)
        return q, g, val, inside

    def func(Z):
        return parts(Z)[2]

    def grad(Z):
        q, g, val, inside = parts(Z)
        coef = np.where(inside, -2.0 * k * val / (g * g), 0.0)
        return coef[:, None] * q / r

    return Profile(func, grad, c - r, c + r)


def make_bump(center, radii, smoothness: float = 1.0) -> ScalarField:
    """Mollifier-type bump on H^n with analytic partials; e^{-smoothness} at the centre."""
    prof = bump_profile(center, radii, smoothness)
    m = prof.dim
    if m < 3 or m % 2 == 0:
        raise ValueError("bump centre must be a point of H^n")
    return ScalarField(prof.func, (m - 1) // 2, (prof.lo, prof.hi), prof.grad)


@dataclass(frozen=True, eq=False)
class SeparableField(ScalarField):
    """A product field w(t) phi(xi'); ``factors`` is ``(w, phi)``."""

    factors: tuple = ()


def make_separable(w: Profile, phi: Profile) -> ScalarField:
    """u(x, y, t) = w(t) phi(x, y), partials by the product rule."""
    if w.dim != 1:
        raise ValueError("w must be a profile in t")
    k = phi.dim
    if k % 2:
        raise ValueError("phi must be a profile on R^{2n}")

    def func(P):
        return w.value(P[:, -1:]) * phi.value(P[:, :k])

    def grad(P):
        wt = w.value(P[:, -1:])
        dw = w.gradient(P[:, -1:])[:, 0]
        ph = phi.value(P[:, :k])
        G = np.empty_like(P)
        G[:, :k] = wt[:, None] * phi.gradient(P[:, :k])
        G[:, -1] = dw * ph
        return G

    lo = np.concatenate([np.atleast_1d(phi.lo), np.atleast_1d(w.lo)])
    hi = np.concatenate([np.atleast_1d(phi.hi), np.atleast_1d(w.hi)])
    return SeparableField(func, k // 2, (lo, hi), grad, factors=(w, phi))


def separable_breaks(u: ScalarField):
    """Per-axis quadrature breakpoints carried by the factors of a separable field."""
    if not isinstance(u, SeparableField):
        return None
    w, phi = u.factors
    k = phi.dim
    pb = phi.breaks or (None,) * k
    wb = (w.breaks or (None,))[0]
    return tuple(pb) + (wb,)


def gradient_decomposition(phi: Profile, w: Profile, P):
    """The three terms of |grad_H(w phi)|^2 at points P in H^n.

    Returns ``(w^2|grad phi|^2, 4 w w' phi <Lam xi', grad phi>, 4|xi'|^2 phi^2 w'^2)``.
    """
    k = phi.dim
    xi_p = P[:, :k]
    wt = w.value(P[:, -1:])
    dw = w.gradient(P[:, -1:])[:, 0]
    ph = phi.value(xi_p)
    gph = phi.gradient(xi_p)
    lam = xi_p @ lam_matrix(k // 2).T
    t1 = wt * wt * np.sum(gph * gph, axis=-1)
    t2 = 4.0 * wt * dw * ph * np.sum(lam * gph, axis=-1)
    t3 = 4.0 * np.sum(xi_p * xi_p, axis=-1) * ph * ph * dw * dw
    return t1, t2, t3


__all__ = [
    "Box", "IntegralValue", "Profile", "QuadratureError", "QuadratureSpec", "SeparableField", "axis_rule", "bump_profile",
    "gradient_decomposition", "integrate", "integrate_many", "make_bump", "make_separable", "separable_breaks",
]
