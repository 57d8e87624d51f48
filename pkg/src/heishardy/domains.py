"""Half-spaces and convex polytopes in H^n = R^{2n+1}, and the Hardy weights on them.

Domains are stored in inward-normal form: a half-space is {<xi, nu> > d} and a
polytope is the intersection of finitely many such half-spaces.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .heis_core import DimensionError, as_point, dim_of, split

log = logging.getLogger(__name__)

NORMAL_TOL = 1e-9


class OutsideDomainError(ValueError):
    pass


def _unit(v, what="normal"):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or not np.all(np.isfinite(v)):
        raise ValueError(f"{what} must be a finite vector")
    dim_of(v)
    r = np.linalg.norm(v)
    if r == 0:
        raise ValueError(f"{what} must be nonzero")
    return v / r


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """{xi : <xi, normal> > offset} with a unit inward normal."""

    normal: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        nu = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
            raise ValueError("HalfSpace normal must be a unit vector; use HalfSpace.from_normal")
        object.__setattr__(self, "normal", nu)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def from_normal(cls, normal, offset=0.0) -> "HalfSpace":
        """Normalise ``normal``; the offset is rescaled so the set is unchanged."""
        v = np.asarray(normal, dtype=float)
        r = np.linalg.norm(v)
        return cls(_unit(v), float(offset) / r)

    @property
    def n(self) -> int:
        return dim_of(self.normal)

    @property
    def facets(self):
        return [self]

    def signed_distance(self, xi):
        return np.asarray(xi, dtype=float) @ self.normal - self.offset

    def contains(self, xi):
        return self.signed_distance(xi) > 0


def _dedupe(normals, offsets):
    keep = []
    for k in range(len(normals)):
        dup = any(np.allclose(normals[k], normals[j], atol=1e-12) and abs(offsets[k] - offsets[j]) < 1e-12
                  for j in keep)
        if not dup:
            keep.append(k)
    return normals[keep], offsets[keep]


@dataclass(frozen=True, eq=False)
class Polytope:
    """Intersection of half-spaces {<xi, nu_k> > d_k}.

    ``normals`` has shape (K, 2n+1) with unit rows, ``offsets`` shape (K,).
    Construction certifies a nonempty interior with a Chebyshev-centre LP.
    """

    normals: np.ndarray
    offsets: np.ndarray
    name: str = "polytope"

    def __post_init__(self):
        N = np.atleast_2d(np.asarray(self.normals, dtype=float))
        d = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        if N.shape[0] != d.shape[0]:
            raise ValueError("normals and offsets disagree in length")
        dim_of(N[0])
        if np.any(np.abs(np.linalg.norm(N, axis=1) - 1.0) > 1e-12):
            raise ValueError("facet normals must be unit vectors; use Polytope.from_halfspaces")
        N, d = _dedupe(N, d)
        object.__setattr__(self, "normals", N)
        object.__setattr__(self, "offsets", d)
        center, radius = _chebyshev(N, d)
        if not radius > 1e-12:
            raise ValueError("polytope has empty interior")
        object.__setattr__(self, "_center", center)
        object.__setattr__(self, "_radius", radius)

    @classmethod
    def from_halfspaces(cls, normals, offsets, name="polytope") -> "Polytope":
        N = np.atleast_2d(np.asarray(normals, dtype=float))
        d = np.atleast_1d(np.asarray(offsets, dtype=float))
        r = np.linalg.norm(N, axis=1)
        if np.any(r == 0):
            raise ValueError("zero facet normal")
        return cls(N / r[:, None], d / r, name)

    @property
    def n(self) -> int:
        return dim_of(self.normals[0])

    @property
    def facets(self):
        return [HalfSpace(nu, dk) for nu, dk in zip(self.normals, self.offsets)]

    @property
    def interior_point(self):
        return self._center.copy()

    @property
    def inradius(self) -> float:
        return self._radius

    @property
    def bounded(self) -> bool:
        return self.bounding_box() is not None

    def facet_distances(self, xi):
        return np.asarray(xi, dtype=float) @ self.normals.T - self.offsets

    def contains(self, xi):
        return np.all(self.facet_distances(xi) > 0, axis=-1)

    def bounding_box(self):
        """Axis-aligned bounding box via 2(2n+1) LPs, or None if unbounded."""
        if not _recession_free(self.normals):
            return None
        m = self.normals.shape[1]
        lo, hi = np.empty(m), np.empty(m)
        for k in range(m):
            c = np.zeros(m)
            for sign, store in ((1.0, lo), (-1.0, hi)):
                c[k] = sign
                res = linprog(c, A_ub=-self.normals, b_ub=-self.offsets, bounds=[(None, None)] * m, method="highs")
                if res.status != 0:
                    return None
                store[k] = res.x[k]
        return lo, hi

    def cells(self):
        return [PartitionCell(self, k) for k in range(len(self.offsets))]

    def to_records(self):
        return [{"normal": nu.tolist(), "offset": float(dk)} for nu, dk in zip(self.normals, self.offsets)]


def _recession_free(N) -> bool:
    """True when {v : N v >= 0} = {0}, i.e. the polytope is bounded.

    By Stiemke's alternative this holds iff N has full column rank and
    N^T lam = 0 for some lam > 0 (here lam >= 1 after scaling).
    """
    K, m = N.shape
    if np.linalg.matrix_rank(N) < m:
        return False
    res = linprog(np.zeros(K), A_eq=N.T, b_eq=np.zeros(m), bounds=[(1.0, None)] * K, method="highs")
    return res.status == 0


def _chebyshev(N, d):
    m = N.shape[1]
    c = np.zeros(m + 1)
    c[-1] = -1.0
    # <xi, nu_k> - r >= d_k with |nu_k| = 1
    A = np.hstack([-N, np.ones((N.shape[0], 1))])
    # unbounded polytopes have infinite inradius; a modest cap keeps HiGHS well conditioned
    cap = 1e3 * (1.0 + np.max(np.abs(d)))
    bounds = [(None, None)] * m + [(0, cap)]
    res = linprog(c, A_ub=A, b_ub=-d, bounds=bounds, method="highs")
    if res.status != 0:
        res = linprog(c, A_ub=A, b_ub=-d, bounds=bounds, method="highs-ipm")
    if res.status != 0:
        return np.full(m, np.nan), 0.0
    return res.x[:m], res.x[-1]



def _distances(domain, xi):
    if isinstance(domain, HalfSpace):
        return domain.signed_distance(xi)[..., None]
    return domain.facet_distances(xi)


def euclidean_boundary_distance(domain, xi, check=True):
    """Euclidean distance from interior points to the boundary."""
    D = _distances(domain, xi)
    dist = D.min(axis=-1)
    if check and np.any(dist <= 0):
        raise OutsideDomainError("point is not in the open domain")
    return dist


def nearest_facet(domain, xi, check=True):
    """Index of the closest facet; ties go to the lowest index."""
    D = _distances(domain, xi)
    if check and np.any(D.min(axis=-1) <= 0):
        raise OutsideDomainError("point is not in the open domain")
    return np.argmin(D, axis=-1)


def facet_normal_field(domain, xi):
    """nu(xi): the inward normal of the nearest facet, shape (..., 2n+1)."""
    if isinstance(domain, HalfSpace):
        return np.broadcast_to(domain.normal, np.shape(xi))
    return domain.normals[nearest_facet(domain, xi, check=False)]


@dataclass(frozen=True, eq=False)
class PartitionCell:
    """Omega_k: points of the polytope whose nearest facet is k (lowest index on ties)."""

    polytope: Polytope
    k: int

    @property
    def normal(self):
        return self.polytope.normals[self.k]

    @property
    def offset(self):
        return float(self.polytope.offsets[self.k])

    def inequalities(self):
        """(G, h) with the cell equal to {xi : G xi >= h} up to boundaries."""
        P = self.polytope
        K = len(P.offsets)
        rows, rhs = [P.normals], [P.offsets]
        for l in range(K):
            if l == self.k:
                continue
            # dist_l(xi) - dist_k(xi) >= 0
            rows.append((P.normals[l] - P.normals[self.k])[None, :])
            rhs.append(np.array([P.offsets[l] - P.offsets[self.k]]))
        return np.vstack(rows), np.concatenate(rhs)

    def contains(self, xi):
        P = self.polytope
        return P.contains(xi) & (nearest_facet(P, xi, check=False) == self.k)


def interface(domain: Polytope, k: int, l: int):
    """Hyperplane Gamma_kl where facets k and l are equidistant.

    Returns ``(n_kl, offset, dot)``: the unit normal pointing from Omega_k into
    Omega_l, the offset with Gamma_kl = {<xi, n_kl> = offset}, and
    (nu_k - nu_l) . n_kl = sqrt(2 - 2 cos alpha_kl).
    """
    if k == l:
        raise ValueError("interface needs two distinct facets")
    diff = domain.normals[k] - domain.normals[l]
    r = np.linalg.norm(diff)
    if r < 1e-12:
        raise ValueError(f"facets {k} and {l} are parallel; no interface")
    n_kl = diff / r
    off = (domain.offsets[k] - domain.offsets[l]) / r
    return n_kl, float(off), float(diff @ n_kl)


def characteristic_point(halfspace: HalfSpace):
    """The characteristic point of the boundary plane, or None if it is vertical."""
    nu = halfspace.normal
    n = halfspace.n
    nx, ny, nt = nu[:n], nu[n:2 * n], nu[2 * n]
    if nt == 0.0:
        return None
    return np.concatenate([ny / (2 * nt), -nx / (2 * nt), [halfspace.offset / nt]])


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Exponent and aggregation rule of the Hardy weight.

    ``aggregation="component"`` is sum_i |<X_i,nu>|^p + |<Y_i,nu>|^p;
    ``"l2"`` is the conjectured (sum_i <X_i,nu>^2 + <Y_i,nu>^2)^(p/2).
    """

    p: float = 2.0
    aggregation: str = "component"

    def __post_init__(self):
        if not self.p >= 2:
            raise ValueError(f"weights need p >= 2, got {self.p}")
        if self.aggregation not in ("component", "l2"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")

    @property
    def label(self) -> str:
        return "per-component" if self.aggregation == "component" else "l2-aggregated (conjecture)"


def frame_normal_products(xi, nu):
    """<X_i(xi), nu>, <Y_i(xi), nu> as an array of shape (..., 2n)."""
    xi = np.asarray(xi, dtype=float)
    n = dim_of(xi)
    x, y, _ = split(xi)
    nu = np.broadcast_to(nu, xi.shape)
    nx, ny, nt = nu[..., :n], nu[..., n:2 * n], nu[..., 2 * n:]
    return np.concatenate([nx + 2.0 * y * nt, ny - 2.0 * x * nt], axis=-1)


def weight_numerator(products, spec: WeightSpec):
    if spec.aggregation == "l2":
        return np.sum(products * products, axis=-1) ** (spec.p / 2.0)
    return np.sum(np.abs(products) ** spec.p, axis=-1)


def hardy_weight(domain, spec: WeightSpec, xi, check=True):
    """Facet-normal weight divided by dist(xi, boundary)^p."""
    xi = np.asarray(xi, dtype=float)
    dist = euclidean_boundary_distance(domain, xi, check=check)
    nu = facet_normal_field(domain, xi)
    num = weight_numerator(frame_normal_products(xi, nu), spec)
    return num / dist ** spec.p


def weight_identity_check(halfspace: HalfSpace, xi, cfg=None):
    """Relative residual of (<X,nu>^2 + <Y,nu>^2)/4 = nu_t^2 delta_cc(xi, Xi_nu)^2 in H^1.

    Xi_nu is the vertical line through the characteristic point; the right-hand
    side is computed with the trajectory solver.
    """
    from .metrics import cc_distance_to_set, vertical_line

    if halfspace.n != 1:
        raise DimensionError("the weight identity is stated in H^1")
    xi = as_point(xi, 1)
    nu = halfspace.normal
    if nu[2] == 0.0:
        raise ValueError("the identity needs a non-vertical plane")
    c = characteristic_point(halfspace)
    lhs = float(np.sum(frame_normal_products(xi, nu) ** 2) / 4.0)
    res = cc_distance_to_set(xi, vertical_line(c[0], c[1]), cfg)
    if not res.converged:
        raise RuntimeError("cc solver did not converge for the weight identity")
    rhs = nu[2] ** 2 * res.distance ** 2
    scale = max(abs(lhs), abs(rhs))
    resid = 0.0 if scale == 0.0 else abs(lhs - rhs) / scale
    return resid, lhs, rhs


# ---------------------------------------------------------------- builtins & I/O

def cube(n: int = 1, side: float = 1.0) -> Polytope:
    m = 2 * n + 1
    I = np.eye(m)
    return Polytope(np.vstack([I, -I]), np.concatenate([np.zeros(m), -side * np.ones(m)]), "cube")


def simplex(n: int = 1) -> Polytope:
    """{xi_k > 0, sum xi_k < 1}."""
    m = 2 * n + 1
    N = np.vstack([np.eye(m), -np.ones((1, m))])
    d = np.concatenate([np.zeros(m), [-1.0]])
    return Polytope.from_halfspaces(N, d, "simplex")


def slab(normal, lo: float, hi: float) -> Polytope:
    nu = _unit(normal)
    return Polytope(np.vstack([nu, -nu]), np.array([lo, -hi]), "slab")


def random_polytope(n: int = 1, facets: int = 6, seed: int = 0, radius=(0.6, 1.0)) -> Polytope:
    """Bounded polytope with random unit normals around the origin.

    The first 2n+2 normals are a randomly rotated regular simplex, which
    guarantees boundedness; the rest are uniform on the sphere. Redraws until
    every facet is irredundant.
    """
    rng = np.random.default_rng(seed)
    m = 2 * n + 1
    if facets < m + 1:
        raise ValueError(f"a bounded polytope in dimension {m} needs at least {m + 1} facets")
    # regular simplex directions: centred standard basis of R^(m+1), projected to R^m
    E = np.eye(m + 1) - 1.0 / (m + 1)
    basis = np.linalg.svd(E)[2][:m]
    S = E @ basis.T
    S /= np.linalg.norm(S, axis=1)[:, None]
    while True:
        Q, R = np.linalg.qr(rng.standard_normal((m, m)))
        Q *= np.sign(np.diag(R))
        extra = rng.standard_normal((facets - m - 1, m))
        N = np.vstack([S @ Q.T, extra / np.linalg.norm(extra, axis=1)[:, None]])
        N = N[rng.permutation(facets)]
        d = -rng.uniform(*radius, size=facets)
        P = Polytope(N, d, "random")
        if P.bounded and _irredundant(P):
            return P


def _irredundant(P: Polytope) -> bool:
    m = P.normals.shape[1]
    for k in range(len(P.offsets)):
        others = np.delete(np.arange(len(P.offsets)), k)
        res = linprog(P.normals[k], A_ub=-P.normals[others], b_ub=-P.offsets[others],
                      bounds=[(None, None)] * m, method="highs")
        # unbounded without facet k means facet k is needed
        if res.status == 3:
            continue
        if res.status != 0 or res.fun >= P.offsets[k] - 1e-9:
            return False
    return True


def load_polytope(source, name: Optional[str] = None) -> Polytope:
    """Parse a JSON list of ``{"normal": [...], "offset": r}`` records.

    ``source`` is a path or an already-decoded list. Normals are normalised
    on load, with a warning when one deviates from unit length by > 1e-9.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source) as fh:
            records = json.load(fh)
        name = name or str(source)
    else:
        records = source
    if not isinstance(records, Sequence) or not records:
        raise ValueError("polytope file must hold a non-empty list of facet records")
    normals, offsets = [], []
    for i, rec in enumerate(records):
        try:
            nu = np.asarray(rec["normal"], dtype=float)
            off = float(rec["offset"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"facet record {i}: {exc}") from None
        r = np.linalg.norm(nu)
        if r == 0 or not np.isfinite(r):
            raise ValueError(f"facet record {i}: normal must be finite and nonzero")
        if abs(r - 1.0) > NORMAL_TOL:
            warnings.warn(f"facet record {i}: normal has length {r:.6g}; normalising", stacklevel=2)
        normals.append(nu / r)
        offsets.append(off / r)
    lens = {v.size for v in normals}
    if len(lens) != 1:
        raise ValueError("facet normals have inconsistent dimensions")
    return Polytope(np.array(normals), np.array(offsets), name or "polytope")


def save_polytope(P: Polytope, path):
    with open(path, "w") as fh:
        json.dump(P.to_records(), fh, indent=2)


def describe(domain) -> dict:
    if isinstance(domain, HalfSpace):
        return {"type": "halfspace", "normal": domain.normal.tolist(), "offset": domain.offset}
    return {"type": "polytope", "name": domain.name, "facets": domain.to_records()}


def angle_between(domain: Polytope, k: int, l: int) -> float:
    c = float(np.clip(domain.normals[k] @ domain.normals[l], -1.0, 1.0))
    return math.acos(c)
