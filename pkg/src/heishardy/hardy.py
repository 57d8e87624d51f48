"""Both sides of the half-space and polytope Hardy inequalities, and the algebraic lemmas behind them."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .domains import (
    HalfSpace, Polytope, WeightSpec, angle_between, characteristic_point, describe, frame_normal_products,
    interface, weight_numerator,
)
from .heis_core import ScalarField, frame_at, horizontal_from_euclidean, left_translate_field
from .quadrature import Box, IntegralValue, QuadratureSpec, integrate_many, separable_breaks

SUPPORT_MARGIN = 1e-3


class SupportError(ValueError):
    pass


def sharp_constant(p: float) -> float:
    if not p >= 2:
        raise ValueError(f"the inequalities need p >= 2, got {p}")
    return ((p - 1.0) / p) ** p


def c_alpha(alpha, p):
    """-(p-1)(alpha + |alpha|^{p/(p-1)})."""
    return -(p - 1.0) * (alpha + np.abs(alpha) ** (p / (p - 1.0)))


def optimal_alpha(p: float):
    """Maximiser of :func:`c_alpha` in alpha and the maximum value."""
    if not p >= 2:
        raise ValueError(f"p must be >= 2, got {p}")
    a = -(((p - 1.0) / p) ** (p - 1.0))
    return a, float(c_alpha(a, p))


def superadditivity_gap(v, p: float):
    """|v|_2^p - sum_i |v_i|^p over the last axis; nonnegative for p >= 2."""
    v = np.asarray(v, dtype=float)
    norm = np.sqrt(np.sum(v * v, axis=-1))
    # |v|^p sum_i r_i^2 (1 - r_i^(p-2)) with r_i = |v_i|/|v|: every term is >= 0 in floating point
    safe = np.where(norm > 0, norm, 1.0)
    r = np.minimum(np.abs(v) / safe[..., None], 1.0)
    with np.errstate(divide="ignore"):
        term = np.where(r > 0, -r * r * np.expm1((p - 2.0) * np.log(np.where(r > 0, r, 1.0))), 0.0)
    return np.where(norm > 0, norm ** p * np.sum(term, axis=-1), 0.0)


def jensen_split(x, a, alpha: float):
    """Upper bound sum_i c_i x_i^alpha for (sum_i x_i)^alpha, with c_i = a_i^{1-alpha} (sum a)^{alpha-1}."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ValueError("Jensen weights must be positive")
    if np.any(x < 0):
        raise ValueError("Jensen split needs nonnegative terms")
    if alpha < 1:
        raise ValueError("Jensen split needs alpha >= 1")
    c = a ** (1.0 - alpha) * np.sum(a, axis=-1, keepdims=True) ** (alpha - 1.0)
    return np.sum(c * x ** alpha, axis=-1), c


def boundary_sign_terms(A, B, p: float):
    """A^p - A^{p-1}B - B^{p-1}A + B^p, evaluated as (A^{p-1} - B^{p-1})(A - B)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if np.any(A < 0) or np.any(B < 0):
        raise ValueError("boundary terms take nonnegative magnitudes")
    if p < 2:
        raise ValueError("p must be >= 2")
    return (A ** (p - 1.0) - B ** (p - 1.0)) * (A - B)


def interface_bracket(ak, al, p: float):
    """Signed bracket |a_k|^p - sgn(a_k)|a_k|^{p-1} a_l + |a_l|^p - sgn(a_l)|a_l|^{p-1} a_k."""
    ak = np.asarray(ak, dtype=float)
    al = np.asarray(al, dtype=float)
    Ak, Al = np.abs(ak), np.abs(al)
    return (Ak ** p - np.sign(ak) * Ak ** (p - 1) * al
            + Al ** p - np.sign(al) * Al ** (p - 1) * ak)


# ---------------------------------------------------------------- quotients

@dataclass
class QuotientReport:
    lhs: IntegralValue
    rhs_raw: IntegralValue
    constant: float
    quotient: float
    quotient_error: float
    margin: float
    p: float
    aggregation: str
    domain: dict
    seed: int
    quad: dict
    label: str = "theorem"

    @property
    def passed(self) -> bool:
        return self.margin >= -3.0 * self.quotient_error

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs.as_dict(),
            "rhs_raw": self.rhs_raw.as_dict(),
            "constant": self.constant,
            "quotient": self.quotient,
            "quotient_error": self.quotient_error,
            "margin": self.margin,
            "passed": self.passed,
            "p": self.p,
            "aggregation": self.aggregation,
            "label": self.label,
            "domain": self.domain,
            "seed": self.seed,
            "quad": self.quad,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, **kw)


def _ratio(lhs: IntegralValue, rhs: IntegralValue):
    q = lhs.value / rhs.value
    err = lhs.error / abs(rhs.value) + abs(lhs.value) * rhs.error / rhs.value ** 2
    return q, err


def check_support(u: ScalarField, domain, margin: float = SUPPORT_MARGIN) -> Box:
    """The support box of ``u``, after checking it sits inside ``domain`` with ``margin``."""
    if u.support is None:
        raise SupportError("test function has no declared compact support")
    box = Box(*u.support)
    C = box.corners()
    if isinstance(domain, HalfSpace):
        D = domain.signed_distance(C)
    else:
        D = domain.facet_distances(C).min(axis=-1)
    worst = float(np.min(D))
    if margin > 0 and worst < margin or worst <= 0:
        raise SupportError(f"support comes within {worst:.3g} of the boundary (margin {margin:g})")
    return box


def _mc_spec(quad: QuadratureSpec) -> QuadratureSpec:
    return quad if quad.method == "mc" else QuadratureSpec("mc", samples=quad.samples, seed=quad.seed)


def _quad_for(u: ScalarField, quad: QuadratureSpec) -> QuadratureSpec:
    if quad.method == "gauss" and quad.breaks is None:
        br = separable_breaks(u)
        if br is not None:
            return QuadratureSpec("gauss", quad.order, quad.samples, quad.seed, br, quad.log_axes)
    return quad


def _numerator(prod, spec: WeightSpec, dedicated_l2: bool):
    if dedicated_l2:
        return np.sum(prod * prod, axis=-1)
    return weight_numerator(prod, spec)


def _evaluate(u, domain, spec: WeightSpec, quad: QuadratureSpec, margin, dedicated_l2, workers):
    p = spec.p
    box = check_support(u, domain, margin)
    quad = _quad_for(u, quad)

    def grad_power(P):
        H = horizontal_from_euclidean(P, u.gradient(P))
        s = np.sum(H * H, axis=-1)
        return s if dedicated_l2 else s ** (p / 2.0)

    def u_power(P):
        v = u(P)
        return v * v if dedicated_l2 else np.abs(v) ** p

    def weighted(nu, d):
        def f(P):
            dist = P @ nu - d
            num = _numerator(frame_normal_products(P, nu), spec, dedicated_l2)
            den = dist * dist if dedicated_l2 else dist ** p
            return num / den * u_power(P)
        return f

    if isinstance(domain, HalfSpace):
        f_rhs = weighted(domain.normal, domain.offset)
        lhs, rhs = integrate_many(lambda P: np.stack([grad_power(P), f_rhs(P)], axis=-1), box, quad, workers)
    else:
        (lhs,) = integrate_many(grad_power, box, quad, workers)
        mc = _mc_spec(quad)
        total, err = 0.0, 0.0
        for cell in domain.cells():
            (part,) = integrate_many(weighted(cell.normal, cell.offset), (cell, box), mc, workers)
            total += part.value
            err += part.error
        rhs = IntegralValue(total, err, mc.samples * len(domain.offsets))
    if not rhs.value > 0:
        raise ValueError("weighted integral vanished; the test function misses the weight's support")
    q, qerr = _ratio(lhs, rhs)
    C = sharp_constant(p)
    label = "conjecture" if spec.aggregation == "l2" else "theorem"
    quad_meta = quad.as_dict()
    if isinstance(domain, Polytope):
        quad_meta["cells"] = _mc_spec(quad).as_dict()
    return QuotientReport(lhs, rhs, C, q, qerr, q - C, p, spec.label, describe(domain), quad.seed, quad_meta, label)


def evaluate_quotient(u: ScalarField, domain, spec: Optional[WeightSpec] = None,
                      quad: Optional[QuadratureSpec] = None, margin: float = SUPPORT_MARGIN,
                      workers: Optional[int] = None) -> QuotientReport:
    """Hardy quotient int |grad_H u|^p / int weight |u|^p and its margin over the sharp constant.

    Half-spaces are integrated over the support box of ``u``. For polytopes
    the weighted side is summed over nearest-facet cells (Monte Carlo), so
    the facet normal is constant inside each integral.
    """
    return _evaluate(u, domain, spec or WeightSpec(), quad or QuadratureSpec(), margin, False, workers)


def evaluate_quotient_l2(u: ScalarField, domain, quad: Optional[QuadratureSpec] = None,
                         margin: float = SUPPORT_MARGIN, workers: Optional[int] = None) -> QuotientReport:
    """p = 2 quotient computed with squares throughout."""
    return _evaluate(u, domain, WeightSpec(2.0), quad or QuadratureSpec(), margin, True, workers)


def verify_translation_reduction(halfspace: HalfSpace, u: ScalarField, quad: Optional[QuadratureSpec] = None):
    """Compare the p = 2 quotient on a tilted half-space with the one after translating to the characteristic point.

    Left translation by the characteristic point maps the half-space onto
    {sgn(nu_t) t > 0}; the quotient must be unchanged. Returns
    ``(relative difference, direct report, translated report)``.
    """
    xi0 = characteristic_point(halfspace)
    if xi0 is None:
        raise ValueError("vertical planes have no characteristic point")
    quad = quad or QuadratureSpec(order=96)
    direct = evaluate_quotient_l2(u, halfspace, quad, margin=0.0)
    v = left_translate_field(u, xi0)
    n = halfspace.n
    e_t = np.zeros(2 * n + 1)
    e_t[-1] = math.copysign(1.0, halfspace.normal[-1])
    moved = evaluate_quotient_l2(v, HalfSpace(e_t, 0.0), quad, margin=0.0)
    resid = abs(direct.quotient - moved.quotient) / abs(direct.quotient)
    return resid, direct, moved


# ------------------------------------------------------------ interface audit

@dataclass
class InterfaceRecord:
    k: int
    l: int
    angle: float
    samples: int
    min_l2_integrand: float
    min_bracket: float
    negatives: int
    literal_negatives: int


@dataclass
class InterfaceAudit:
    p: float
    interfaces: list
    total_samples: int
    negatives: int
    consistency: float
    note: str = ("bracket evaluated as A^p - A^(p-1)B - B^(p-1)A + B^p = (A^(p-1) - B^(p-1))(A - B); "
                 "literal_negatives counts samples where the variant ending in +B^(p-1) would be negative")

    def to_dict(self):
        d = asdict(self)
        return d


def _sample_interface(P: Polytope, k, l, count, rng, box, max_rounds=200):
    n_kl, off, _ = interface(P, k, l)
    others = [j for j in range(len(P.offsets)) if j not in (k, l)]
    got = []
    lo, hi = box
    batch = max(4 * count, 2000)
    for _ in range(max_rounds):
        X = lo + (hi - lo) * rng.random((batch, lo.size))
        Z = X - (X @ n_kl - off)[:, None] * n_kl
        D = P.facet_distances(Z)
        dk = D[:, k]
        ok = dk > 1e-9
        if others:
            ok &= np.all(D[:, others] >= dk[:, None], axis=1)
        got.append(Z[ok])
        if sum(len(g) for g in got) >= count:
            break
        if len(got) >= 3 and sum(len(g) for g in got) == 0:
            break
    Z = np.concatenate(got) if got else np.zeros((0, lo.size))
    return Z[:count]


def polytope_interface_audit(P: Polytope, p: float = 2.0, points: int = 10_000, seed: int = 0) -> InterfaceAudit:
    """Sample the interfaces Gamma_kl between nearest-facet cells and check the boundary terms' sign.

    At each sample, the p = 2 integrand sqrt(1 - cos alpha_kl) sum_i (<X_i,n_kl>^2 + <Y_i,n_kl>^2) / dist
    and, for every frame vector, the signed L^p bracket must be nonnegative.
    """
    box = P.bounding_box()
    if box is None:
        raise ValueError("interface audit needs a bounded polytope")
    rng = np.random.default_rng(seed)
    K = len(P.offsets)
    pairs = [(k, l) for k in range(K) for l in range(k + 1, K)
             if np.linalg.norm(P.normals[k] - P.normals[l]) > 1e-12]
    # probe which interfaces are actually shared by two cells
    live = [(k, l) for k, l in pairs if len(_sample_interface(P, k, l, 1, rng, box, max_rounds=20))]
    per = max(1, math.ceil(points / max(1, len(live))))
    records, total, negatives, worst_consistency = [], 0, 0, 0.0
    for k, l in live:
        Z = _sample_interface(P, k, l, per, rng, box)
        if len(Z) == 0:
            continue
        n_kl, _, dot = interface(P, k, l)
        alpha = angle_between(P, k, l)
        dist = Z @ P.normals[k] - P.offsets[k]
        prod_n = frame_normal_products(Z, n_kl)
        l2 = math.sqrt(max(0.0, 1.0 - math.cos(alpha))) * np.sum(prod_n ** 2, axis=-1) / dist
        # same quantity assembled from the raw frame and nu_k - nu_l
        F = frame_at(Z)
        via_frame = np.sum((F @ (P.normals[k] - P.normals[l])) * (F @ n_kl), axis=-1) / (math.sqrt(2.0) * dist)
        scale = np.maximum(1.0, np.abs(l2))
        worst_consistency = max(worst_consistency, float(np.max(np.abs(l2 - via_frame) / scale)))
        ak = frame_normal_products(Z, P.normals[k])
        al = frame_normal_products(Z, P.normals[l])
        br = interface_bracket(ak, al, p)
        same = np.sign(ak) == np.sign(al)
        fact = boundary_sign_terms(np.abs(ak), np.abs(al), p)
        br = np.where(same, fact, br)
        A, B = np.abs(ak), np.abs(al)
        literal = A ** p - A ** (p - 1) * B - B ** (p - 1) * A + B ** (p - 1)
        neg = int(np.sum(l2 < 0) + np.sum(np.min(br, axis=-1) < 0))
        records.append(InterfaceRecord(k, l, alpha, len(Z), float(l2.min()), float(br.min()), neg,
                                       int(np.sum(np.min(np.where(same, literal, 0.0), axis=-1) < 0))))
        total += len(Z)
        negatives += neg
    return InterfaceAudit(p, records, total, negatives, worst_consistency)


__all__ = [
    "InterfaceAudit", "QuotientReport", "SupportError", "boundary_sign_terms", "c_alpha", "check_support",
    "evaluate_quotient", "evaluate_quotient_l2", "interface_bracket", "jensen_split", "optimal_alpha",
    "polytope_interface_audit", "sharp_constant", "superadditivity_gap", "verify_translation_reduction",
]
