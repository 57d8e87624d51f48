"""Command-line runner: ``heishardy verify | sharpness | distance``.

Exit codes: 0 success, 1 a verification or convergence check failed,
2 the configuration was rejected.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .domains import HalfSpace, WeightSpec, cube, load_polytope, simplex, slab
from .hardy import SupportError, evaluate_quotient
from .metrics import SolverConfig, cc_distance, kaplan_distance, path_states
from .quadrature import QuadratureSpec, make_bump

BUILTIN_DOMAINS = ("halfspace", "cube", "simplex", "slab")


class ConfigError(ValueError):
    """A flag value failed validation; the message names the flag."""


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def _vector(text, flag, length=None):
    try:
        v = np.array([float(s) for s in str(text).split(",")])
    except ValueError:
        raise ConfigError(f"{flag}: expected comma-separated numbers, got {text!r}") from None
    if not np.all(np.isfinite(v)):
        raise ConfigError(f"{flag}: entries must be finite")
    if length is not None and v.size != length:
        raise ConfigError(f"{flag}: expected {length} entries, got {v.size}")
    if v.size < 3 or v.size % 2 == 0:
        raise ConfigError(f"{flag}: a point of H^n has 2n+1 coordinates, got {v.size}")
    return v


def _positive(value, flag):
    if not value > 0:
        raise ConfigError(f"{flag}: must be positive, got {value}")
    return value


def _build_domain(args):
    n = args.n
    m = 2 * n + 1
    name = args.domain
    if name == "halfspace":
        nu = _vector(args.nu, "--nu") if args.nu else np.eye(m)[-1]
        if np.linalg.norm(nu) == 0:
            raise ConfigError("--nu: normal must be nonzero")
        return HalfSpace.from_normal(nu, args.d)
    if name == "cube":
        return cube(n, _positive(args.side, "--side"))
    if name == "simplex":
        return simplex(n)
    if name == "slab":
        nu = _vector(args.nu, "--nu") if args.nu else np.eye(m)[-1]
        return slab(nu, args.d, args.d + _positive(args.side, "--side"))
    try:
        return load_polytope(name)
    except OSError as exc:
        raise ConfigError(f"--domain: not a builtin ({', '.join(BUILTIN_DOMAINS)}) or readable file: {exc}") \
            from None
    except ValueError as exc:
        raise ConfigError(f"--domain: {exc}") from None


def _build_bump(spec, domain):
    kind, _, rest = spec.partition(":")
    if kind != "bump":
        raise ConfigError(f"--u: unknown test function {spec!r}; use bump:default or bump:<centre>@<radius>")
    if rest in ("", "default"):
        if isinstance(domain, HalfSpace):
            centre = domain.normal * (domain.offset + 1.0)
            radius = 0.5
        else:
            centre = domain.interior_point
            radius = 0.5 * domain.inradius
        return make_bump(centre, radius)
    c_txt, _, r_txt = rest.partition("@")
    centre = _vector(c_txt, "--u centre")
    try:
        radius = float(r_txt or "0.5")
    except ValueError:
        raise ConfigError(f"--u radius: not a number: {r_txt!r}") from None
    return make_bump(centre, _positive(radius, "--u radius"))


_report_stream = None


def _write(path, text):
    if path in (None, "-"):
        (_report_stream or sys.stdout).write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# ------------------------------------------------------------------ verify

def cmd_verify(args) -> int:
    domain = _build_domain(args)
    if domain.n != args.n:
        raise ConfigError(f"--n: domain lives in H^{domain.n}, not H^{args.n}")
    u = _build_bump(args.u, domain)
    if u.n != domain.n:
        raise ConfigError("--u: centre dimension does not match the domain")
    try:
        spec = WeightSpec(args.p, args.aggregation)
        quad = QuadratureSpec(args.quad, args.order, args.samples, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = RunConfig("verify", {k: v for k, v in vars(args).items() if k not in ("func", "out")})
    try:
        report = evaluate_quotient(u, domain, spec, quad, margin=args.margin)
    except SupportError as exc:
        raise ConfigError(f"--u: {exc}") from None
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} {report.label} p={report.p:g} quotient={report.quotient:.6g} "
          f"constant={report.constant:.6g} margin={report.margin:.3g} sigma={report.quotient_error:.2g}")
    if args.out:
        _write(args.out, _dump({"version": __version__, "config": cfg.as_dict(), "report": report.to_dict()}))
    return 0 if report.passed else 1


# --------------------------------------------------------------- sharpness

def _load_schedule(text):
    if text == "default":
        return None
    try:
        with open(text) as fh:
            sched = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"--schedule: {exc}") from None
    if not isinstance(sched, list) or not sched or not all(isinstance(e, dict) for e in sched):
        raise ConfigError("--schedule: expected a non-empty JSON list of objects")
    return sched


def cmd_sharpness(args) -> int:
    from .sharpness import probe_conjecture, run_l2_sharpness, run_lp_sharpness

    if not args.p >= 2:
        raise ConfigError(f"--p: must be >= 2, got {args.p}")
    cfg = RunConfig("sharpness", {k: v for k, v in vars(args).items() if k not in ("func", "out")})
    if args.conjecture:
        res = probe_conjecture(args.p, args.budget, args.seed, n=args.n)
        ok = res.best_quotient >= res.floor - 3 * res.best_error
        print(f"{'PASS' if ok else 'FAIL'} conjecture probe ({res.label}) p={res.p:g} "
              f"best={res.best_quotient:.6g} constant={res.constant:.6g} floor={res.floor:.6g} "
              f"evaluations={res.evaluations}")
        if args.out:
            _write(args.out + ".json", _dump({"version": __version__, "config": cfg.as_dict(),
                                               "probe": res.to_dict()}))
        return 0 if ok else 1
    schedule = _load_schedule(args.schedule)
    try:
        if args.p == 2:
            rec = run_l2_sharpness(schedule, n=args.n)
            tol = 1.05
        else:
            rec = run_lp_sharpness(args.p, schedule, n=args.n)
            tol = 1.10
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"--schedule: {exc}") from None
    ok = rec.final_ratio <= tol and rec.floor_respected() and (args.p != 2 or rec.strictly_decreasing())
    print(f"{'PASS' if ok else 'FAIL'} sharpness {rec.kind} p={rec.p:g} final={rec.quotients[-1]:.6g} "
          f"target={rec.target:.6g} ratio={rec.final_ratio:.4f} (<= {tol})")
    if args.out:
        _write(args.out + ".json", _dump({"version": __version__, "config": cfg.as_dict(),
                                           "record": rec.to_dict()}))
        _write(args.out + ".csv", rec.to_csv())
    return 0 if ok else 1


# ---------------------------------------------------------------- distance

def _solver_config(args):
    try:
        base = SolverConfig.from_file(args.config) if args.config else SolverConfig()
        if args.seed is not None:
            base = SolverConfig(**{**asdict(base), "seed": args.seed})
        return base
    except (OSError, ValueError) as exc:
        raise ConfigError(f"--config: {exc}") from None


def cmd_distance(args) -> int:
    from .domains import weight_identity_check

    scfg = _solver_config(args)
    cfg = RunConfig("distance", {k: v for k, v in vars(args).items() if k not in ("func", "out")})
    out = {"version": __version__, "config": cfg.as_dict(), "solver": asdict(scfg)}
    if args.identity_check:
        nu = _vector(args.nu, "--nu", 3)
        xi = _vector(args.xi, "--xi", 3)
        if nu[2] == 0:
            raise ConfigError("--nu: the identity needs nu_t != 0")
        hs = HalfSpace.from_normal(nu, args.d)
        try:
            resid, lhs, rhs = weight_identity_check(hs, xi, scfg)
        except RuntimeError as exc:
            print(f"FAIL {exc}")
            return 1
        ok = resid < args.tol
        print(f"{'PASS' if ok else 'FAIL'} weight identity lhs={lhs:.9g} rhs={rhs:.9g} residual={resid:.3g}")
        out["identity"] = {"lhs": lhs, "rhs": rhs, "residual": resid}
        if args.out:
            _write(args.out, _dump(out))
        return 0 if ok else 1

    if args.p_from is None or args.p_to is None:
        raise ConfigError("--from/--to: both points are required")
    p = _vector(args.p_from, "--from")
    q = _vector(args.p_to, "--to", p.size)
    dk = float(kaplan_distance(p, q))
    res = cc_distance(p, q, scfg)
    ratio = res.distance / dk if dk > 0 else math.nan
    print(f"kaplan {dk:.9f}")
    print(f"cc {res.distance:.9f} converged={res.converged} gap={res.refinement_gap:.2e}")
    print(f"ratio {ratio:.9f}")
    out["result"] = {"kaplan": dk, "cc": res.distance, "converged": res.converged,
                     "refinement_gap": res.refinement_gap, "endpoint_error": res.endpoint_error,
                     "segments": res.path.segments, "ratio": None if math.isnan(ratio) else ratio}
    if args.path_csv:
        states = path_states(res.path)
        m = states.shape[1]
        n = (m - 1) // 2
        header = ["s"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)] + ["t"]
        with open(args.path_csv, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for j, row in enumerate(states):
                wr.writerow([repr(j / (len(states) - 1))] + [repr(float(v)) for v in row])
    if args.out:
        _write(args.out, _dump(out))
    if args.strict and not res.converged:
        print("FAIL solver did not converge", file=sys.stderr)
        return 1
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heishardy", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="evaluate a Hardy quotient against the sharp constant")
    v.add_argument("--domain", default="halfspace", help="halfspace, cube, simplex, slab, or a polytope JSON file")
    v.add_argument("--n", type=int, default=1, help="dimension parameter of H^n")
    v.add_argument("--nu", help="half-space or slab normal, comma separated")
    v.add_argument("--d", type=float, default=0.0, help="half-space offset")
    v.add_argument("--side", type=float, default=1.0, help="cube side or slab width")
    v.add_argument("--p", type=float, default=2.0)
    v.add_argument("--aggregation", choices=("component", "l2"), default="component")
    v.add_argument("--u", default="bump:default", help="bump:default or bump:<centre>@<radius>")
    v.add_argument("--quad", choices=("gauss", "mc"), default="gauss")
    v.add_argument("--order", type=int, default=24)
    v.add_argument("--samples", type=int, default=200_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--margin", type=float, default=1e-3, help="required distance of the support to the boundary")
    v.add_argument("--out", help="report JSON path ('-' for stdout)")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sharpness", help="run a sharpness schedule or the conjecture probe")
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--schedule", default="default", help="'default' or a JSON list of schedule entries")
    s.add_argument("--conjecture", action="store_true", help="probe the l2-aggregated weight instead")
    s.add_argument("--budget", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="output prefix; writes <prefix>.json and <prefix>.csv")
    s.set_defaults(func=cmd_sharpness)

    d = sub.add_parser("distance", help="Kaplan and Carnot-Caratheodory distances")
    d.add_argument("--from", dest="p_from")
    d.add_argument("--to", dest="p_to")
    d.add_argument("--identity-check", action="store_true", help="check the weight identity in H^1")
    d.add_argument("--nu", default="0,1,1")
    d.add_argument("--d", type=float, default=0.0)
    d.add_argument("--xi", default="1,1,1")
    d.add_argument("--tol", type=float, default=5e-3)
    d.add_argument("--strict", action="store_true", help="exit 1 when the solver does not converge")
    d.add_argument("--path-csv", help="write the optimised path to this CSV file")
    d.add_argument("--config", help="solver config file (key = value lines)")
    d.add_argument("--seed", type=int, default=None)
    d.add_argument("--out", help="result JSON path ('-' for stdout)")
    d.set_defaults(func=cmd_distance)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "n", 1) < 1:
        print("error: --n: must be >= 1", file=sys.stderr)
        return 2
    global _report_stream
    _report_stream = sys.stdout
    try:
        if getattr(args, "out", None) == "-":
            # keep stdout pure JSON; summaries go to stderr
            with contextlib.redirect_stdout(sys.stderr):
                return args.func(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
