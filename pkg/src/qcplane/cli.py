"""Command-line front end: ``qcplane <command> [flags]``.

Exit status: 0 on success (a check reporting a violation is still a
success), 2 on malformed input, 3 when a mathematical precondition fails.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, errors, linalg
from .planar_maps import GridMap, Rect, ciarlet_necas, distortion, heatmap_svg

# owning module of each precondition error, for the exit-3 message
OWNER = {
    "NonInjective": "planar_maps",
    "DomainMismatch": "planar_maps",
    "NearBoundary": "planar_maps",
    "BoundaryMismatch": "planar_maps",
    "OverlappingSubdomains": "planar_maps",
    "NotIncreasing": "quasisymmetry",
    "NoValidD": "quasisymmetry",
    "NotSimple": "extension",
    "ModulusUnbounded": "extension",
    "NotQuasisymmetric": "extension",
    "ImageNotSimple": "extension",
    "EpsTooSmall": "cutoff",
    "GammaUnbounded": "cutoff",
    "ClosenessViolated": "cutoff",
    "RadiusOutOfBounds": "cutoff",
    "NotQuasicircle": "cutoff",
    "DomainTooSmall": "cutoff",
    "NotRankOne": "young_measures",
    "OutsideCone": "young_measures",
    "DensityUndefined": "young_measures",
    "InfeasibleInit": "variational",
}


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable, allow_nan=True) + "\n"


def _write(outdir, name, text):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, name)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _config(args):
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _report(args, results, tolerances):
    return {
        "command": args.command,
        "config": _config(args),
        "version": __version__,
        "tolerances": tolerances,
        "results": results,
    }


def _emit(args, results, tolerances, extra=None):
    rep = _report(args, results, tolerances)
    _write(args.out, "report.json", dumps(rep))
    for name, text in (extra or {}).items():
        _write(args.out, name, text)
    summary = {k: v for k, v in results.items() if not isinstance(v, (dict, list))}
    print(dumps({"command": args.command, "out": args.out, "summary": summary}), end="")
    return 0


def _load_map(path):
    return GridMap.load(path)


# ---- value checks for flags -------------------------------------------------


def _ranged(lo=None, hi=None, lo_open=False, hi_open=False, kind=float):
    def parse(text):
        try:
            x = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if lo is not None and (x < lo or (lo_open and x == lo)):
            raise argparse.ArgumentTypeError(f"{x} below allowed range")
        if hi is not None and (x > hi or (hi_open and x == hi)):
            raise argparse.ArgumentTypeError(f"{x} above allowed range")
        return x

    return parse


def _matrix(text):
    try:
        return linalg.parse_matrix(text).tolist()
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


positive = _ranged(0.0, lo_open=True)
nonneg = _ranged(0.0)
at_least_one = _ranged(1.0)
fraction = _ranged(0.0, 1.0, lo_open=True)
pos_int = _ranged(1, kind=int)
seed_int = _ranged(0, kind=int)


# ---- commands ---------------------------------------------------------------

K_RTOL = 1e-9


def cmd_check(args):
    m = _load_map(args.map)
    rep = distortion(m)
    cn = ciarlet_necas(m)
    ok_K = bool(rep.sup <= args.K * (1 + K_RTOL)) if np.isfinite(rep.sup) else False
    results = {
        "distortion_sup": rep.sup,
        "fraction_nonpositive": rep.fraction_nonpositive,
        "K": args.K,
        "within_K": ok_K and rep.fraction_nonpositive == 0,
        "ciarlet_necas": cn,
    }
    tol = {"K_rtol": K_RTOL, "ciarlet_necas": cn["tol"]}
    return _emit(args, results, tol, {"distortion.csv": rep.to_csv(), "distortion.svg": heatmap_svg(rep, m.domain)})


def cmd_extend(args):
    from .extension import BoundaryMap, beurling_ahlfors, extend_on_square
    from .quasisymmetry import Homeo1D

    if args.boundary:
        b = BoundaryMap.load(args.boundary)
        m = extend_on_square(b, resolution=args.resolution)
        kind = "square"
    else:
        h = Homeo1D.load(args.homeo)
        m = beurling_ahlfors(h, spacing=h.a / args.resolution)
        kind = "half-plane"
    rep = distortion(m)
    cn = ciarlet_necas(m)
    results = {
        "kind": kind,
        "distortion_sup": rep.sup,
        "fraction_nonpositive": rep.fraction_nonpositive,
        "ciarlet_necas": cn,
    }
    tol = {"ciarlet_necas": cn["tol"]}
    extra = {"map.json": dumps(m.to_dict()), "distortion.svg": heatmap_svg(rep, m.domain)}
    return _emit(args, results, tol, extra)


def cmd_cutoff(args):
    from .cutoff import assemble_cutoff, overlay_svg

    y = _load_map(args.y)
    yk = _load_map(args.yk)
    omega, part, bridges, report = assemble_cutoff(y, yk, args.eps, delta=args.delta, seed=args.seed)
    eps, delta = report["eps"], report["delta"]
    tol = {
        "sup_y_minus_omega": 3 * eps + delta,
        "boundary_exact": 0.0,
        "bridge_radius": [eps / 2 - delta / 2, eps / 2 + delta / 2],
        "bridge_midpoint": float(np.sqrt(7 * eps * delta)),
        "ciarlet_necas": report["ciarlet_necas"]["tol"],
    }
    extra = {
        "omega.json": dumps(omega.to_dict()),
        "partition.json": dumps(part.to_dict()),
        "overlay.svg": overlay_svg(part, bridges, omega),
    }
    return _emit(args, report, tol, extra)


def _laminate_setup(args):
    from .young_measures import affine_limit, laminate_sequence

    A, B = np.array(args.A), np.array(args.B)
    seq = laminate_sequence(A, B, args.lam, args.k)
    lim = affine_limit(A, B, args.lam, seq[-1].domain, seq[-1].spacing)
    return A, B, seq, lim


def _density(args):
    from .variational import get_density

    kw = {}
    if args.density == "elastic-pq":
        kw = {"p": args.p, "q": args.q}
    elif args.density == "bump":
        kw = {"M": (args.lam * np.array(args.A) + (1 - args.lam) * np.array(args.B)) if hasattr(args, "A") else None}
    return get_density(args.density, **kw)


def cmd_ym(args):
    from . import young_measures as ymod
    from .variational import dirichlet, det_density, neg_det

    A, B, seq, lim = _laminate_setup(args)
    ym = ymod.empirical_measure(seq, args.coarsening)
    _, mom = ymod.moment_field(ym, lim)
    K = args.K or float(max(linalg.distortion(A), linalg.distortion(B)))
    v = _density(args)
    results = {
        "first_moment": mom,
        "det_pairing": ym.pair(lambda X, Y: np.ones_like(X), linalg.det),
        "det_of_moment": float(linalg.det(args.lam * A + (1 - args.lam) * B)),
        "support": ymod.support_check(ym, K),
        "jensen": ymod.jensen_check(ym, v, lim),
        "kp": ymod.kp_report(ym, lim, [dirichlet(), det_density(), neg_det()]),
        "weak": ymod.weak_diagnostic(seq, lim),
    }
    tol = {
        "cluster": ymod.CLUSTER_TOL,
        "weights": ymod.WEIGHT_TOL,
        "jensen_rtol": ymod.JENSEN_RTOL,
        "null_lagrangian": ymod.NULL_LAGRANGIAN_TOL,
        "first_moment": 0.02,
    }
    return _emit(args, results, tol, {"measure.json": dumps(ym.to_dict())})


def cmd_lsc(args):
    from .variational import LSC_RTOL, lsc_experiment

    _, _, seq, lim = _laminate_setup(args)
    res = lsc_experiment(_density(args), seq, lim)
    return _emit(args, res, {"lsc_rtol": LSC_RTOL})


def cmd_minimize(args):
    from .variational import DET_FLOOR, minimize_penalized, penalized_energy, trace_csv

    v = _density(args)
    if args.init:
        init = _load_map(args.init)
    else:
        rng = np.random.default_rng(args.seed)
        c = rng.uniform(-1, 1, (2, 3))
        amp = args.amplitude

        def f(X, Y):
            b = np.sin(np.pi * X) * np.sin(np.pi * Y)
            return X + amp * b * (c[0, 0] + c[0, 1] * X + c[0, 2] * Y), Y + amp * b * (c[1, 0] + c[1, 1] * X + c[1, 2] * Y)

        init = GridMap.from_function(f, Rect(0.0, 0.0, 1.0, 1.0), 1.0 / args.resolution, tag="init")
    J0 = penalized_energy(init, v, args.eps_pen)
    out, trace = minimize_penalized(v, args.eps_pen, init, sweeps=args.sweeps, return_trace=True)
    J1 = penalized_energy(out, v, args.eps_pen)
    rep = distortion(out)
    results = {
        "J_init": J0,
        "J_final": J1,
        "decreased": bool(J1 < J0),
        "sweeps": len(trace) - 1,
        "distortion_sup": rep.sup,
        "fraction_nonpositive": rep.fraction_nonpositive,
        "ciarlet_necas": ciarlet_necas(out),
    }
    extra = {"map.json": dumps(out.to_dict()), "trace.csv": trace_csv(trace)}
    return _emit(args, results, {"det_floor": DET_FLOOR}, extra)


def cmd_profile(args):
    from .variational import equiintegrability_profile

    if args.maps:
        seq = [_load_map(p) for p in args.maps]
    else:
        _, _, seq, _ = _laminate_setup(args)
    res = equiintegrability_profile(seq, args.p, args.q)
    rows = ["M," + ",".join(f"k{i}" for i in range(len(seq))) + ",sup"]
    tails = np.array(res["tails"])
    for m, M in enumerate(res["levels"]):
        rows.append(",".join([repr(M)] + [repr(float(t)) for t in tails[:, m]] + [repr(res["sup"][m])]))
    return _emit(args, res, {}, {"profile.csv": "\r\n".join(rows) + "\r\n"})


# ---- parser -----------------------------------------------------------------


def _laminate_flags(p):
    p.add_argument("--A", type=_matrix, default=[[1.0, 0.0], [0.0, 1.0]], help="row-major 'a,b,c,d'")
    p.add_argument("--B", type=_matrix, default=[[2.0, 0.0], [0.0, 1.0]], help="row-major 'a,b,c,d'")
    p.add_argument("--lambda", dest="lam", type=fraction, default=0.5)
    p.add_argument("--k", type=pos_int, default=64, help="oscillations of the last laminate")


def build_parser():
    ap = argparse.ArgumentParser(prog="qcplane", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"qcplane {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=seed_int, default=0)
        p.set_defaults(func=func)
        return p

    p = add("check", cmd_check, "distortion and Ciarlet-Necas report for a map")
    p.add_argument("--map", required=True)
    p.add_argument("--K", type=at_least_one, default=1.0)

    p = add("extend", cmd_extend, "extend boundary data into the square or a line map into the half-plane")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--boundary", help="BoundaryMap JSON")
    g.add_argument("--homeo", help="Homeo1D JSON")
    p.add_argument("--resolution", type=pos_int, default=32)

    p = add("cutoff", cmd_cutoff, "glue y near the boundary to yk in the bulk")
    p.add_argument("--y", required=True)
    p.add_argument("--yk", required=True)
    p.add_argument("--eps", type=positive, required=True)
    p.add_argument("--delta", type=positive, default=None)

    p = add("ym", cmd_ym, "laminate Young measure and its checks")
    _laminate_flags(p)
    p.add_argument("--K", type=at_least_one, default=None)
    p.add_argument("--coarsening", type=pos_int, default=4)
    p.add_argument("--density", default="det", choices=["dirichlet", "det", "neg-det", "elastic-pq", "bump"])
    p.add_argument("--p", type=at_least_one, default=2.0)
    p.add_argument("--q", type=positive, default=1.0)

    p = add("lsc", cmd_lsc, "lower semicontinuity along a laminate sequence")
    _laminate_flags(p)
    p.add_argument("--density", default="dirichlet", choices=["dirichlet", "det", "neg-det", "elastic-pq", "bump"])
    p.add_argument("--p", type=at_least_one, default=2.0)
    p.add_argument("--q", type=positive, default=1.0)

    p = add("minimize", cmd_minimize, "coordinate descent for the penalized energy")
    p.add_argument("--density", default="elastic-pq", choices=["dirichlet", "det", "neg-det", "elastic-pq"])
    p.add_argument("--p", type=at_least_one, default=2.0)
    p.add_argument("--q", type=positive, default=1.0)
    p.add_argument("--eps-pen", dest="eps_pen", type=nonneg, default=0.05)
    p.add_argument("--init", default=None, help="initial GridMap JSON (default: perturbed identity)")
    p.add_argument("--resolution", type=_ranged(2, kind=int), default=16)
    p.add_argument("--amplitude", type=nonneg, default=0.05)
    p.add_argument("--sweeps", type=pos_int, default=20)

    p = add("profile", cmd_profile, "equi-integrability tail profile")
    _laminate_flags(p)
    p.add_argument("--maps", nargs="+", default=None, help="GridMap JSON files (default: laminate sequence)")
    p.add_argument("--p", type=at_least_one, default=2.0)
    p.add_argument("--q", type=nonneg, default=0.0)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except errors.SchemaError as e:
        print(f"qcplane: schema error: {e}", file=sys.stderr)
        return 2
    except errors.PreconditionError as e:
        name = type(e).__name__
        print(f"qcplane: precondition failed [{OWNER.get(name, 'qcplane')}.{name}]: {e}", file=sys.stderr)
        return 3
    except (OSError, json.JSONDecodeError, ValueError) as e:
        print(f"qcplane: invalid input: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
