"""Group structure and left-invariant calculus on the Heisenberg group H^n.

Points are stored as float arrays of shape ``(..., 2n+1)`` laid out as
``(x_1..x_n, y_1..y_n, t)``; every function here broadcasts over leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

EPS = np.finfo(float).eps
FD_STEP = EPS ** (1.0 / 3.0)
FD_STEP2 = EPS ** (1.0 / 4.0)


class DimensionError(ValueError):
    pass


class StencilError(ValueError):
    """A finite-difference stencil left the region where a field may be evaluated."""


def dim_of(p) -> int:
    m = np.shape(p)[-1]
    if m < 3 or m % 2 == 0:
        raise DimensionError(f"point length {m} is not 2n+1 with n >= 1")
    return (m - 1) // 2


def as_point(p, n: Optional[int] = None) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    k = dim_of(p)
    if n is not None and k != n:
        raise DimensionError(f"expected a point of H^{n}, got H^{k}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point has non-finite coordinates")
    return p


def make_point(x, y, t) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise DimensionError("x and y must have equal length")
    return np.concatenate([x, y, [float(t)]])


def split(p):
    """Return views ``(x, y, t)`` of a (batched) point."""
    n = dim_of(p)
    return p[..., :n], p[..., n:2 * n], p[..., 2 * n]


def identity(n: int) -> np.ndarray:
    return np.zeros(2 * n + 1)


def inverse(p):
    return -np.asarray(p, dtype=float)


def group_compose(p, q):
    """Group product p∘q, broadcasting over leading axes."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.shape(p)[-1] != np.shape(q)[-1]:
        raise DimensionError("operands live in different H^n")
    xp, yp, tp = split(p)
    xq, yq, tq = split(q)
    t = tp + tq + 2.0 * (np.sum(xq * yp, axis=-1) - np.sum(xp * yq, axis=-1))
    return np.concatenate([xp + xq, yp + yq, t[..., None]], axis=-1)


def dilate(lam: float, p):
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    p = np.asarray(p, dtype=float)
    out = lam * p
    out[..., -1] = lam * lam * p[..., -1]
    return out


def frame_at(p) -> np.ndarray:
    """Ambient coordinates of X_1..X_n, Y_1..Y_n at ``p``.

    Returns an array of shape ``(..., 2n, 2n+1)``; row ``i`` is X_i and row
    ``n+i`` is Y_i.
    """
    p = np.asarray(p, dtype=float)
    n = dim_of(p)
    x, y, _ = split(p)
    F = np.zeros(p.shape[:-1] + (2 * n, 2 * n + 1))
    idx = np.arange(n)
    F[..., idx, idx] = 1.0
    F[..., n + idx, n + idx] = 1.0
    F[..., :n, -1] = 2.0 * y
    F[..., n:, -1] = -2.0 * x
    return F


def lam_matrix(n: int) -> np.ndarray:
    """The skew matrix [[0, I], [-I, 0]] acting on xi' = (x, y)."""
    L = np.zeros((2 * n, 2 * n))
    L[:n, n:] = np.eye(n)
    L[n:, :n] = -np.eye(n)
    return L


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A scalar function on H^n, vectorised over points.

    ``func`` maps an ``(N, 2n+1)`` array to ``(N,)``. ``grad`` (optional)
    returns the Euclidean gradient in ambient coordinates, shape
    ``(N, 2n+1)``. ``support`` is an axis-aligned box ``(lo, hi)`` outside of
    which the field is exactly zero; ``None`` means no declared support.
    ``admissible`` optionally restricts where the field may be sampled by
    finite-difference stencils.
    """

    func: Callable[[np.ndarray], np.ndarray]
    n: int
    support: Optional[tuple] = None
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    admissible: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def _inside(self, P):
        if self.support is None:
            return np.ones(P.shape[0], dtype=bool)
        lo, hi = self.support
        return np.all((P > lo) & (P < hi), axis=-1)

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        P = xi.reshape(-1, xi.shape[-1])
        out = np.zeros(P.shape[0])
        m = self._inside(P)
        if m.any():
            out[m] = self.func(P[m])
        return out.reshape(xi.shape[:-1])

    def gradient(self, xi):
        """Euclidean gradient; analytic when available, otherwise central differences."""
        xi = np.asarray(xi, dtype=float)
        P = xi.reshape(-1, xi.shape[-1])
        if self.grad is None:
            G = _fd_gradient(self, P)
        else:
            G = np.zeros_like(P)
            m = self._inside(P)
            if m.any():
                G[m] = self.grad(P[m])
        return G.reshape(xi.shape)

    @property
    def has_gradient(self) -> bool:
        return self.grad is not None


def _step(P):
    return FD_STEP * np.maximum(1.0, np.max(np.abs(P), axis=-1))


def _check_stencil(u: ScalarField, pts):
    if u.admissible is None:
        return
    ok = u.admissible(pts.reshape(-1, pts.shape[-1]))
    if not np.all(ok):
        bad = pts.reshape(-1, pts.shape[-1])[~np.asarray(ok, dtype=bool)][0]
        raise StencilError(f"stencil point {bad} is outside the admissible region")


def _directional(u: ScalarField, P, V, h):
    hh = h[:, None]
    fwd, bwd = P + hh * V, P - hh * V
    _check_stencil(u, fwd)
    _check_stencil(u, bwd)
    return (u(fwd) - u(bwd)) / (2.0 * h)


def _fd_gradient(u: ScalarField, P):
    h = _step(P)
    G = np.empty_like(P)
    for k in range(P.shape[-1]):
        e = np.zeros(P.shape[-1])
        e[k] = 1.0
        G[:, k] = _directional(u, P, np.broadcast_to(e, P.shape), h)
    return G


def horizontal_from_euclidean(p, g):
    """Convert a Euclidean gradient at ``p`` into (X_1u..X_nu, Y_1u..Y_nu)."""
    x, y, _ = split(np.asarray(p, dtype=float))
    n = x.shape[-1]
    gt = g[..., -1:]
    return np.concatenate([g[..., :n] + 2.0 * y * gt, g[..., n:2 * n] - 2.0 * x * gt], axis=-1)


def horizontal_gradient(u: ScalarField, p, h: Optional[float] = None):
    """Horizontal gradient (X_i u, Y_i u) at ``p`` (shape ``(..., 2n)``).

    With analytic partials the frame is applied exactly; otherwise each
    component is a central difference along the frame vector at ``p``.
    """
    p = as_point(p, u.n)
    P = p.reshape(-1, p.shape[-1])
    if u.has_gradient and h is None:
        out = horizontal_from_euclidean(P, u.gradient(P))
    else:
        hs = _step(P) if h is None else np.full(P.shape[0], float(h))
        F = frame_at(P)
        out = np.stack([_directional(u, P, F[:, j], hs) for j in range(2 * u.n)], axis=-1)
    return out.reshape(p.shape[:-1] + (2 * u.n,))


def _frame_derivative(u: ScalarField, P, j):
    """(V_j u)(P) for frame index j, analytic if possible."""
    if u.has_gradient:
        return horizontal_from_euclidean(P, u.gradient(P))[:, j]
    return _directional(u, P, frame_at(P)[:, j], _step(P))


def bracket(u: ScalarField, p, j: int, k: int):
    """([V_j, V_k] u)(p) with V the frame (X_1..X_n, Y_1..Y_n), via nested central differences."""
    p = as_point(p, u.n)
    P = p.reshape(-1, p.shape[-1])
    h = FD_STEP2 * np.maximum(1.0, np.max(np.abs(P), axis=-1))
    F = frame_at(P)

    def outer(a, b):
        # V_a (V_b u): differentiate the field P -> (V_b u)(P) along V_a(P)
        hh = h[:, None]
        fwd, bwd = P + hh * F[:, a], P - hh * F[:, a]
        _check_stencil(u, fwd)
        _check_stencil(u, bwd)
        return (_frame_derivative(u, fwd, b) - _frame_derivative(u, bwd, b)) / (2.0 * h)

    out = outer(j, k) - outer(k, j)
    return out.reshape(p.shape[:-1])


def commutator_check(u: ScalarField, p, i: int):
    """Residual ([X_i, Y_i] u)(p) + 4 du/dt(p); vanishes for smooth u."""
    p = as_point(p, u.n)
    P = p.reshape(-1, p.shape[-1])
    if u.has_gradient:
        ut = u.gradient(P)[:, -1]
    else:
        e = np.zeros(P.shape[-1])
        e[-1] = 1.0
        ut = _directional(u, P, np.broadcast_to(e, P.shape), _step(P))
    res = bracket(u, P, i, u.n + i) + 4.0 * ut
    return res.reshape(p.shape[:-1])


def _box_image(box, fn):
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    m = lo.size
    corners = np.array(np.meshgrid(*[[lo[k], hi[k]] for k in range(m)], indexing="ij")).reshape(m, -1).T
    img = fn(corners)
    return img.min(axis=0), img.max(axis=0)


def left_translate_field(u: ScalarField, g) -> ScalarField:
    """The field xi -> u(g∘xi)."""
    g = as_point(g, u.n)
    n = u.n

    def func(P):
        return u(group_compose(g, P))

    grad = None
    if u.has_gradient:
        gx, gy, _ = split(g)

        def grad(P):
            G = u.gradient(group_compose(g, P))
            out = G.copy()
            out[:, :n] += 2.0 * gy * G[:, -1:]
            out[:, n:2 * n] -= 2.0 * gx * G[:, -1:]
            return out

    support = None
    if u.support is not None:
        # xi∘ is affine, so the preimage of a box is bounded by its mapped corners
        support = _box_image(u.support, lambda C: group_compose(-g, C))
    admissible = None
    if u.admissible is not None:
        def admissible(P):
            return u.admissible(group_compose(g, P))
    return ScalarField(func, n, support, grad, admissible)
