"""Trial-function families that drive Hardy quotients down towards the sharp constants.

The one-dimensional factor is the Hardy near-minimiser x^((p-1)/p) damped by
sech(eps log(x/c)) and cut off smoothly to a window [delta, T]. Its ratio
int|h'|^p / int |h|^p/x^p equals beta^p (1 + O(eps^2)) in the bulk, so
shrinking eps and widening the window moves the quotient to the constant.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .domains import HalfSpace, WeightSpec
from .hardy import evaluate_quotient, jensen_split, sharp_constant
from .heis_core import lam_matrix
from .quadrature import (
    Box, Profile, QuadratureSpec, bump_profile, gradient_decomposition, integrate, integrate_many,
    make_bump, make_separable, separable_breaks,
)

CSV_COLUMNS = ("step", "eps", "R", "lambda", "quotient", "margin")
RECORD_VERSION = 1
PROBE_LABEL = "evidence only, not proof"


# ------------------------------------------------------------- 1-D profiles

def _smoothstep(z):
    z = np.clip(z, 0.0, 1.0)
    return z * z * z * (10.0 - 15.0 * z + 6.0 * z * z)


def _smoothstep_d(z):
    inside = (z > 0) & (z < 1)
    z = np.clip(z, 0.0, 1.0)
    return np.where(inside, 30.0 * z * z * (1.0 - z) ** 2, 0.0)


def _cutoff(x, delta, T):
    """Quintic cutoff: 0 below delta, 1 on [2 delta, T/2], 0 above T; and its derivative."""
    half = 0.5 * T
    rise = (x - delta) / delta
    fall = (T - x) / half
    c = _smoothstep(rise) * _smoothstep(fall)
    dc = _smoothstep_d(rise) / delta * _smoothstep(fall) - _smoothstep(rise) * _smoothstep_d(fall) / half
    return c, dc


def hardy_profile_1d(eps: float, delta: float, T: float, p: float = 2.0) -> Profile:
    """x^((p-1)/p) sech(eps log(x/c)) times a cutoff to [delta, T], with c = sqrt(delta T).

    For p = 2 this is 2 x^(1/2+eps)/(1 + x^(2 eps)) up to the centring,
    whose bulk ratio is exactly 1/4 + eps^2/3.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not (0 < delta and 4 * delta < T):
        raise ValueError(f"window needs 0 < 4 delta < T, got [{delta}, {T}]")
    if p < 2:
        raise ValueError("p must be >= 2")
    beta = (p - 1.0) / p
    logc = 0.5 * (math.log(delta) + math.log(T))

    def core(x):
        s = eps * (np.log(x) - logc)
        sech = 1.0 / np.cosh(s)
        return x ** beta * sech, np.tanh(s)

    def func(Z):
        x = Z[:, 0]
        base, _ = core(x)
        c, _ = _cutoff(x, delta, T)
        return base * c

    def grad(Z):
        x = Z[:, 0]
        base, th = core(x)
        c, dc = _cutoff(x, delta, T)
        return (base * (beta - eps * th) / x * c + base * dc)[:, None]

    return Profile(func, grad, np.array([delta]), np.array([T]), ((2 * delta, 0.5 * T),))


def rescale_profile(prof: Profile, lam: float) -> Profile:
    """z -> prof(lam z) for a 1-D profile."""
    if not lam > 0:
        raise ValueError("scale must be positive")
    lo, hi = prof.lo / lam, prof.hi / lam
    breaks = None if prof.breaks is None else (tuple(b / lam for b in prof.breaks[0]),)

    def func(Z):
        return prof.func(lam * Z)

    def grad(Z):
        return lam * prof.grad(lam * Z)

    return Profile(func, grad, lo, hi, breaks)


def _axis_points(prof: Profile):
    lo, hi = float(prof.lo[0]), float(prof.hi[0])
    br = () if prof.breaks is None else prof.breaks[0]
    return lo, hi, br


def profile_ratio_1d(prof: Profile, p: float = 2.0, order: int = 64) -> float:
    """int |h'|^p dx / int |h|^p / x^p dx by log-axis Gauss-Legendre."""
    lo, hi, br = _axis_points(prof)
    if lo <= 0:
        raise ValueError("profile must live on the positive half-line")
    spec = QuadratureSpec("gauss", order=order, breaks=(br,), log_axes=(0,))

    def f(Z):
        h = prof.value(Z)
        dh = prof.gradient(Z)[:, 0]
        return np.stack([np.abs(dh) ** p, np.abs(h) ** p / Z[:, 0] ** p], axis=-1)

    num, den = integrate_many(f, Box(np.array([lo]), np.array([hi])), spec, workers=1)
    return num.value / den.value


# ---------------------------------------------------------- spread profiles

def spread_profile(R: float, n: int = 1) -> Profile:
    """phi(xi'/R) for the unit radial bump phi on R^(2n)."""
    if not R >= 1:
        raise ValueError(f"spread must be >= 1, got {R}")
    return bump_profile(np.zeros(2 * n), R)


def spread_ratio(R: float, n: int = 1, order: int = 48) -> float:
    """int |grad phi_R|^2 / int |xi'|^2 phi_R^2 by tensor Gauss."""
    prof = spread_profile(R, n)

    def f(Z):
        v = prof.value(Z)
        g = prof.gradient(Z)
        return np.stack([np.sum(g * g, axis=-1), np.sum(Z * Z, axis=-1) * v * v], axis=-1)

    num, den = integrate_many(f, Box(prof.lo, prof.hi), QuadratureSpec("gauss", order=order), workers=1)
    return num.value / den.value


@lru_cache(maxsize=None)
def base_ratio(n: int = 1) -> float:
    """:func:`spread_ratio` at R = 1 (cached); spread_ratio(R) = base_ratio / R^4."""
    return spread_ratio(1.0, n)


def _product_profile(h: Profile, psi: Profile) -> Profile:
    """(x_1, rest) -> h(x_1) psi(rest)."""
    k = psi.dim + 1

    def func(Z):
        return h.value(Z[:, :1]) * psi.value(Z[:, 1:])

    def grad(Z):
        hv = h.value(Z[:, :1])
        pv = psi.value(Z[:, 1:])
        G = np.empty_like(Z)
        G[:, 0] = h.gradient(Z[:, :1])[:, 0] * pv
        G[:, 1:] = hv[:, None] * psi.gradient(Z[:, 1:])
        return G

    hb = None if h.breaks is None else h.breaks[0]
    breaks = (hb,) + (None,) * (k - 1)
    return Profile(func, grad, np.concatenate([h.lo, psi.lo]), np.concatenate([h.hi, psi.hi]), breaks)


# ------------------------------------------------------------ ansatz family

KINDS = ("L2-halfspace", "Lp-halfspace", "conjecture-probe")


@dataclass(frozen=True)
class AnsatzFamily:
    """u = w(t) phi(xi') with scaling parameters.

    ``L2-halfspace`` and ``conjecture-probe`` live on {t > 0}: w is the Hardy
    profile in t on [delta, T] (rescaled by lam) and phi the radial bump of
    spread R. ``Lp-halfspace`` lives on {x_1 > 0}: phi is the Hardy profile in
    x_1 on [delta, T] times a bump of radius R in the other coordinates, and w
    is the unit bump in t rescaled by lam.
    """

    kind: str
    eps: float
    R: float = 1.0
    lam: float = 1.0
    delta: float = 1e-2
    T: float = 1e2
    p: float = 2.0
    n: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ansatz kind {self.kind!r}")
        if not self.eps > 0 or not self.R >= 1 or not self.lam > 0 or not 0 < self.delta < self.T:
            raise ValueError(f"invalid ansatz parameters {self}")

    def domain(self) -> HalfSpace:
        nu = np.zeros(2 * self.n + 1)
        nu[0 if self.kind == "Lp-halfspace" else -1] = 1.0
        return HalfSpace(nu, 0.0)

    def weight(self) -> WeightSpec:
        return WeightSpec(self.p, "l2" if self.kind == "conjecture-probe" else "component")

    def factors(self):
        """``(w, phi)``: the t-profile and the profile on R^(2n)."""
        if self.kind == "Lp-halfspace":
            h = hardy_profile_1d(self.eps, self.delta, self.T, self.p)
            psi = bump_profile(np.zeros(2 * self.n - 1), self.R)
            return rescale_profile(bump_profile([0.0], 1.0), self.lam), _product_profile(h, psi)
        w = rescale_profile(hardy_profile_1d(self.eps, self.delta, self.T, self.p), self.lam)
        return w, spread_profile(self.R, self.n)

    def field(self):
        return make_separable(*self.factors())

    def quadrature(self, order=(24, 64)) -> QuadratureSpec:
        """Gauss spec: ``order[0]`` nodes on bump axes, ``order[1]`` per segment on the log axis."""
        m = 2 * self.n + 1
        log_axis = 0 if self.kind == "Lp-halfspace" else m - 1
        ords = [int(order[0])] * m
        ords[log_axis] = int(order[1])
        return QuadratureSpec("gauss", tuple(ords), log_axes=(log_axis,))

    def params(self) -> dict:
        return asdict(self)


# --------------------------------------------------------- convergence data

@dataclass
class ConvergenceRecord:
    kind: str
    p: float
    target: float
    entries: list = field(default_factory=list)

    @property
    def quotients(self):
        return [e["quotient"] for e in self.entries]

    @property
    def final_margin(self) -> float:
        return self.entries[-1]["margin"] if self.entries else math.nan

    @property
    def final_ratio(self) -> float:
        return self.entries[-1]["quotient"] / self.target

    def strictly_decreasing(self) -> bool:
        q = self.quotients
        return all(b < a for a, b in zip(q, q[1:]))

    def floor_respected(self) -> bool:
        return all(e["quotient"] >= self.target - 3 * e["quotient_error"] for e in self.entries)

    def to_dict(self) -> dict:
        return {"version": RECORD_VERSION, "kind": self.kind, "p": self.p, "target": self.target,
                "final_margin": self.final_margin, "entries": self.entries}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for e in self.entries:
            wr.writerow([e["step"], repr(e["eps"]), repr(e["R"]), repr(e["lambda"]),
                         repr(e["quotient"]), repr(e["margin"])])
        return buf.getvalue()


def _check_monotone(schedule, keys_down=(), keys_up=()):
    for a, b in zip(schedule, schedule[1:]):
        bad = [k for k in keys_down if b[k] > a[k]] + [k for k in keys_up if b[k] < a[k]]
        if bad:
            warnings.warn(f"schedule is not monotone in {', '.join(bad)}", stacklevel=3)


def _run(entries, fn, jobs):
    if jobs <= 1:
        return [fn(i, e) for i, e in enumerate(entries)]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, range(len(entries)), entries))


# ------------------------------------------------------------- L2 sharpness

DEFAULT_L2_SCHEDULE = (
    {"eps": 0.4, "R": 3.0e2, "delta": 1e-4, "T": 1e4},
    {"eps": 0.25, "R": 3.0e4, "delta": 1e-8, "T": 1e8},
    {"eps": 0.15, "R": 3.0e8, "delta": 1e-16, "T": 1e16},
    {"eps": 0.08, "R": 3.0e15, "delta": 1e-30, "T": 1e30},
)


def _entry_params(entry, defaults):
    out = dict(defaults)
    out.update(entry)
    return out


def run_l2_sharpness(schedule: Optional[Sequence[dict]] = None, n: int = 1, jobs: int = 1,
                     order=(24, 64)) -> ConvergenceRecord:
    """Quotients of u = w(t) phi_R(xi') on {t > 0} along a schedule of (eps, R, delta, T)."""
    schedule = [_entry_params(e, {"lam": 1.0}) for e in (schedule or DEFAULT_L2_SCHEDULE)]
    _check_monotone(schedule, keys_down=("eps", "delta"), keys_up=("R", "T"))

    def one(i, e):
        fam = AnsatzFamily("L2-halfspace", e["eps"], e["R"], e["lam"], e["delta"], e["T"], 2.0, n)
        u = fam.field()
        quad = fam.quadrature(order)
        rep = evaluate_quotient(u, fam.domain(), fam.weight(), quad, margin=0.0, workers=1)
        w, phi = fam.factors()
        cross = integrate(lambda P: gradient_decomposition(phi, w, P)[1], Box(*u.support),
                          _with_breaks(quad, u), workers=1)
        return {"step": i, "eps": e["eps"], "R": e["R"], "lambda": e["lam"], "delta": e["delta"], "T": e["T"],
                "quotient": rep.quotient, "quotient_error": rep.quotient_error, "margin": rep.margin,
                "cross_term": abs(cross.value) / rep.lhs.value}

    return ConvergenceRecord("L2-halfspace", 2.0, 0.25, _run(schedule, one, jobs))


def _with_breaks(quad: QuadratureSpec, u) -> QuadratureSpec:
    br = separable_breaks(u)
    return QuadratureSpec(quad.method, quad.order, quad.samples, quad.seed, br, quad.log_axes)


# ------------------------------------------------------------- Lp sharpness

DEFAULT_LP_SCHEDULE = (
    {"eps": 0.4, "lam": 1e-12, "delta": 1e-3, "T": 1e3, "R": 1e6},
    {"eps": 0.25, "lam": 1e-20, "delta": 1e-6, "T": 1e6, "R": 1e9},
    {"eps": 0.15, "lam": 1e-32, "delta": 1e-10, "T": 1e10, "R": 1e13},
    {"eps": 0.08, "lam": 1e-52, "delta": 1e-18, "T": 1e18, "R": 1e21},
)


def jensen_terms(fam: AnsatzFamily, quad: QuadratureSpec):
    """The three Jensen terms T_i (each normalised by the weighted side) and the raw quotient pieces.

    T_1 = int |grad phi|^p |w|^p, T_2 = 2^p int |w w'|^(p/2) |phi <Lam xi', grad phi>|^(p/2),
    T_3 = 2^p int |xi'|^p |phi|^p |w'|^p, all over int |phi w|^p / dist^p.
    """
    p = fam.p
    w, phi = fam.factors()
    u = make_separable(w, phi)
    quad = _with_breaks(quad, u)
    k = phi.dim
    nu = fam.domain().normal
    lam_m = lam_matrix(fam.n)

    def f(P):
        xi = P[:, :k]
        wt = w.value(P[:, -1:])
        dw = w.gradient(P[:, -1:])[:, 0]
        ph = phi.value(xi)
        gph = phi.gradient(xi)
        cross = np.sum((xi @ lam_m.T) * gph, axis=-1)
        t1 = np.sum(gph * gph, axis=-1) ** (p / 2) * np.abs(wt) ** p
        t2 = 2.0 ** p * np.abs(wt * dw) ** (p / 2) * np.abs(ph * cross) ** (p / 2)
        t3 = 2.0 ** p * np.sum(xi * xi, axis=-1) ** (p / 2) * np.abs(ph) ** p * np.abs(dw) ** p
        dist = P @ nu
        rhs = np.abs(ph * wt) ** p / dist ** p
        return np.stack([t1, t2, t3, rhs], axis=-1)

    vals = integrate_many(f, Box(*u.support), quad, workers=1)
    rhs = vals[3].value
    return tuple(v.value / rhs for v in vals[:3])


def run_lp_sharpness(p: float = 3.0, schedule: Optional[Sequence[dict]] = None, n: int = 1, jobs: int = 1,
                     order=(24, 64)) -> ConvergenceRecord:
    """Quotients on {x_1 > 0} of u = h(x_1) psi(rest) w(lam t) along a schedule of (eps, lam)."""
    C = sharp_constant(p)
    schedule = [dict(e) for e in (schedule or DEFAULT_LP_SCHEDULE)]
    _check_monotone(schedule, keys_down=("eps", "lam"))
    alpha = p / 2.0

    def one(i, e):
        fam = AnsatzFamily("Lp-halfspace", e["eps"], e["R"], e["lam"], e["delta"], e["T"], p, n)
        u = fam.field()
        quad = fam.quadrature(order)
        rep = evaluate_quotient(u, fam.domain(), fam.weight(), quad, margin=0.0, workers=1)
        terms = np.array(jensen_terms(fam, quad))
        # T_i are integrals of x_i^alpha; weights a_i = T_i^(1/alpha) minimise sum c_i T_i
        roots = terms ** (1.0 / alpha)
        bound, c = jensen_split(roots, np.maximum(roots, 1e-300), alpha)
        return {"step": i, "eps": e["eps"], "R": e["R"], "lambda": e["lam"], "delta": e["delta"], "T": e["T"],
                "quotient": rep.quotient, "quotient_error": rep.quotient_error, "margin": rep.margin,
                "jensen_terms": terms.tolist(), "jensen_weights": c.tolist(), "jensen_bound": float(bound)}

    return ConvergenceRecord("Lp-halfspace", float(p), C, _run(schedule, one, jobs))


# ------------------------------------------------------- conjecture probe

@dataclass
class ProbeResult:
    p: float
    best_quotient: float
    best_error: float
    best_params: dict
    floor: float
    constant: float
    evaluations: int
    seed: int
    history: list
    label: str = PROBE_LABEL

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def conjecture_floor(p: float, n: int = 1) -> float:
    """Constant implied for the l2-aggregated weight by the per-component theorem.

    Power-mean comparison gives sum_i |v_i|^p >= (2n)^(1-p/2) |v|_2^p, hence
    the floor ((p-1)/p)^p / (2n)^((p-2)/2).
    """
    return sharp_constant(p) / (2.0 * n) ** ((p - 2.0) / 2.0)


_PROBE_START = {"eps": 0.3, "R": 1e3, "width": 8.0}
_PROBE_STEPS = {"eps": 0.7, "R": 10.0, "width": 1.5}
_PROBE_BOUNDS = {"eps": (0.02, 1.0), "R": (1.0, 1e30), "width": (3.0, 40.0)}


def _probe_family(params, p, n):
    half = params["width"]
    return AnsatzFamily("conjecture-probe", params["eps"], params["R"], 1.0,
                        10.0 ** (-half), 10.0 ** half, p, n)


def _random_bump(rng, n):
    m = 2 * n + 1
    c = rng.uniform(-1.0, 1.0, m)
    c[-1] = rng.uniform(0.5, 2.0)
    r = rng.uniform(0.1, 0.4, m)
    r[-1] = min(r[-1], 0.9 * c[-1])
    return make_bump(c, r), {"center": c.tolist(), "radii": r.tolist()}


def probe_conjecture(p: float = 3.0, budget: int = 200, seed: int = 0, n: int = 1, bumps: int = 10,
                     order=(16, 32)) -> ProbeResult:
    """Search the l2-aggregated Hardy quotient on {t > 0} for values below the conjectured constant.

    Coordinate descent over (eps, R, window) of the Hardy-profile ansatz,
    after a few random bumps; every evaluation counts against ``budget``.
    """
    if not p >= 2:
        raise ValueError("p must be >= 2")
    if budget < 1:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed)
    spec = WeightSpec(p, "l2")
    dom = HalfSpace(np.eye(2 * n + 1)[-1], 0.0)
    history = []
    best = {"q": math.inf, "err": 0.0, "params": None}

    def record(q, err, params):
        history.append({"quotient": q, "quotient_error": err, "params": params})
        if q < best["q"]:
            best.update(q=q, err=err, params=params)

    for _ in range(min(bumps, budget // 4)):
        u, desc = _random_bump(rng, n)
        rep = evaluate_quotient(u, dom, spec, QuadratureSpec("gauss", order[0]), margin=0.0, workers=1)
        record(rep.quotient, rep.quotient_error, {"bump": desc})

    cache = {}

    def evaluate(params):
        key = tuple(round(params[k], 12) for k in sorted(params))
        if key not in cache:
            if len(history) >= budget:
                return math.inf
            fam = _probe_family(params, p, n)
            rep = evaluate_quotient(fam.field(), dom, spec, fam.quadrature(order), margin=0.0, workers=1)
            cache[key] = rep.quotient
            record(rep.quotient, rep.quotient_error, {"ansatz": dict(params)})
        return cache[key]

    cur = dict(_PROBE_START)
    cur_q = evaluate(cur)
    steps = dict(_PROBE_STEPS)
    while len(history) < budget and max(abs(math.log(s)) for s in steps.values()) > 1e-3:
        improved = False
        for k in ("eps", "R", "width"):
            for direction in (1, -1):
                trial = dict(cur)
                trial[k] = cur[k] * steps[k] ** direction
                lo, hi = _PROBE_BOUNDS[k]
                trial[k] = float(min(max(trial[k], lo), hi))
                if trial[k] == cur[k]:
                    continue
                q = evaluate(trial)
                if q < cur_q:
                    cur, cur_q, improved = trial, q, True
                    break
            if len(history) >= budget:
                break
        if not improved:
            steps = {k: math.sqrt(s) for k, s in steps.items()}
    return ProbeResult(float(p), float(best["q"]), float(best["err"]), best["params"], conjecture_floor(p, n),
                       sharp_constant(p), len(history), seed, history)


__all__ = [
    "AnsatzFamily", "CSV_COLUMNS", "ConvergenceRecord", "DEFAULT_L2_SCHEDULE", "DEFAULT_LP_SCHEDULE",
    "PROBE_LABEL", "ProbeResult", "base_ratio", "conjecture_floor", "hardy_profile_1d", "jensen_terms",
    "probe_conjecture", "profile_ratio_1d", "rescale_profile", "run_l2_sharpness", "run_lp_sharpness",
    "spread_profile", "spread_ratio",
]
