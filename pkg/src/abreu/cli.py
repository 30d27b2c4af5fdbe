"""Command-line front end: file I/O, suite runners, plot-data emission.

Exit codes: 0 success, 1 check failure, 2 input error.  Outputs embed the
effective configuration; timestamps go to a sidecar so identical manifests
and seeds give byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import analysis as _analysis
from .functionals import lambda_estimate, stability_probe
from .geometry import bound_suite, geodesic_distance, m_condition_scan, volume_growth
from .grid import write_grid_csv
from .polygon import (
    ContinuityPath,
    InvalidPolygonError,
    ScalarField,
    WeightedPolygon,
    balance_report,
    canonical_weights,
    continuity_path,
    corner_cut,
    mu_invariant,
    rebalance,
    rescale_polygon,
    unique_affine_A,
)
from .potential import (
    ConvexityError,
    guillemin_potential,
    half_plane_model,
    quarter_plane_model,
    rescale_potential,
    tensor_samples,
)
from .solver import solve

_MANIFEST_KEYS = {"polygon", "A", "grid", "tol", "max_steps", "out", "seed", "path"}


def _load_polygon(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read polygon file {path}: {exc}")
    try:
        poly = WeightedPolygon(obj["vertices"], obj["weights"])
    except (KeyError, InvalidPolygonError, TypeError, ValueError) as exc:
        raise InputError(f"bad polygon file {path}: {exc}")
    A = None
    if "A" in obj:
        try:
            A = ScalarField.from_json(obj["A"])
        except (KeyError, ValueError) as exc:
            raise InputError(f"bad A descriptor in {path}: {exc}")
    return poly, A


class InputError(Exception):
    pass


def _write_json(path, obj, config):
    obj = dict(obj)
    obj["config"] = config
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(path + ".time.txt", "w") as fh:
        fh.write(f"{time.time():.3f}\n")


def _out_path(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _config(args, **extra):
    cfg = {
        "command": args.command,
        "grid": args.grid,
        "tol": args.tol,
        "seed": args.seed,
    }
    cfg.update(extra)
    return cfg


def _potential_for(args, poly=None):
    if getattr(args, "model", None) == "quarter":
        return quarter_plane_model(truncation=args.truncation, n=args.grid)
    if getattr(args, "model", None) == "half":
        return half_plane_model(truncation=args.truncation, n=args.grid)
    if poly is None:
        poly, _ = _load_polygon(args.polygon)
    return guillemin_potential(poly, n=args.grid)


# ---------------------------------------------------------------------------
# subcommand handlers (each returns the exit code)


def _cmd_polygon(args):
    sub = args.subcommand
    if sub == "path":
        pa, Aa = _load_polygon(args.polygon)
        pb, Ab = _load_polygon(args.polygon2)
        Aa = Aa if Aa is not None else unique_affine_A(pa)
        Ab = Ab if Ab is not None else unique_affine_A(pb)
        path = continuity_path(pa, Aa, pb, Ab, steps=args.steps)
        samples = [
            {"t": t, **poly.to_json(A=A)} for t, poly, A in path
        ]
        _write_json(
            _out_path(args, "path.json"),
            {"samples": samples, "max_balance_residual": path.max_balance_residual()},
            _config(args, steps=args.steps),
        )
        return 0

    poly, A = _load_polygon(args.polygon)
    if sub == "canon":
        out = canonical_weights(poly.vertices)
        _write_json(_out_path(args, "canonical.json"), out.to_json(), _config(args))
        return 0
    if sub == "balance":
        field = A if A is not None else ScalarField.constant(args.A_const)
        rep = balance_report(poly, field)
        _write_json(_out_path(args, "balance.json"), rep.to_json(), _config(args))
        return 0
    if sub == "mu":
        _write_json(
            _out_path(args, "mu.json"), {"mu": mu_invariant(poly)}, _config(args)
        )
        return 0
    if sub == "cut":
        out = corner_cut(poly, args.vertex, args.eps)
        _write_json(
            _out_path(args, "cut.json"),
            out.to_json(),
            _config(args, vertex=args.vertex, eps=args.eps),
        )
        return 0
    if sub == "rebalance":
        out, lam, mu = rebalance(poly, args.edges[0], args.edges[1])
        obj = out.to_json()
        obj["scalings"] = [lam, mu]
        _write_json(_out_path(args, "rebalanced.json"), obj, _config(args, edges=args.edges))
        return 0
    if sub == "rescale":
        out = rescale_polygon(poly, args.factor)
        _write_json(
            _out_path(args, "rescaled.json"), out.to_json(), _config(args, factor=args.factor)
        )
        return 0
    raise InputError(f"unknown polygon subcommand {sub}")


def _cmd_field(args):
    u = _potential_for(args)
    ts = tensor_samples(u)
    g = u.grid
    f = (
        u.correction.values
        if u.correction is not None and hasattr(u.correction, "values")
        else np.zeros((g.nx, g.ny))
    )
    if args.subcommand in ("abreu", "curvature"):
        tensors = {
            "u11": ts.H[:, :, 0, 0],
            "u12": ts.H[:, :, 0, 1],
            "u22": ts.H[:, :, 1, 1],
            "det": ts.det,
            "absF": ts.absF,
            "abreu": ts.abreu,
        }
        write_grid_csv(_out_path(args, f"{args.subcommand}.csv"), g, f, tensors)
        _write_json(
            _out_path(args, f"{args.subcommand}.json"),
            {
                "max_abs_abreu": float(np.nanmax(np.abs(ts.abreu))),
                "max_absF": float(np.nanmax(ts.absF)),
            },
            _config(args),
        )
        return 0
    if args.subcommand == "energy":
        m = ts.mask
        h2 = g.h * g.h
        intF2 = float(np.nansum(ts.absF[m] ** 2) * h2)
        intA2 = float(np.nansum(ts.abreu[m] ** 2) * h2)
        _write_json(
            _out_path(args, "energy.json"),
            {"int_absF2": intF2, "int_A2": intA2, "invariant": intF2 - intA2},
            _config(args),
        )
        return 0
    raise InputError(f"unknown field subcommand {args.subcommand}")


def _cmd_stability(args):
    poly, A = _load_polygon(args.polygon)
    if A is None:
        A = unique_affine_A(poly)
    if args.subcommand == "probe":
        rep = stability_probe(poly, A, n=args.n, seed=args.seed)
        _write_json(_out_path(args, "probe.json"), rep.to_json(), _config(args, n=args.n))
        return 0 if rep.min_L > 0 else 1
    if args.subcommand == "lambda":
        rep = lambda_estimate(poly, A, n=args.n, seed=args.seed)
        _write_json(_out_path(args, "lambda.json"), rep.to_json(), _config(args, n=args.n))
        return 0 if rep.success else 1
    raise InputError(f"unknown stability subcommand {args.subcommand}")


def _cmd_geom(args):
    u = _potential_for(args)
    if args.subcommand == "mcond":
        rep = m_condition_scan(u, density=args.density, M=args.M, seed=args.seed)
        _write_json(_out_path(args, "mcond.json"), rep.to_json(), _config(args))
        return 0 if not rep.violation else 1
    if args.subcommand == "geodist":
        if args.source_point is not None:
            field = geodesic_distance(u, np.asarray(args.source_point, dtype=float))
        else:
            field = geodesic_distance(u, u.domain.edges[args.source_edge])
        dist = np.where(np.isfinite(field.dist), field.dist, 0.0)
        write_grid_csv(_out_path(args, "geodist.csv"), u.grid, dist)
        _write_json(
            _out_path(args, "geodist.json"),
            {"max_dist": float(np.nanmax(field.dist)), "method": field.method},
            _config(args),
        )
        return 0
    if args.subcommand == "bounds":
        checks, M = bound_suite(u, M=args.M, seed=args.seed)
        with open(_out_path(args, "bounds.jsonl"), "w") as fh:
            for c in checks:
                fh.write(json.dumps(c, sort_keys=True) + "\n")
        fails = sum(1 for c in checks if not c["pass"])
        _write_json(
            _out_path(args, "bounds.json"),
            {"checks": len(checks), "failures": fails, "M": M},
            _config(args),
        )
        return 0 if fails == 0 else 1
    if args.subcommand == "volume":
        rows = volume_growth(u, args.taus)
        lv = np.log([r["volume"] for r in rows])
        ld = np.log([r["max_dist"] for r in rows])
        slope = float(np.polyfit(ld, lv, 1)[0]) if len(rows) > 1 else None
        _write_json(
            _out_path(args, "volume.json"),
            {"rows": rows, "fitted_exponent": slope},
            _config(args, taus=args.taus),
        )
        return 0
    raise InputError(f"unknown geom subcommand {args.subcommand}")


def _cmd_solve(args):
    try:
        with open(args.manifest) as fh:
            man = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read manifest: {exc}")
    unknown = set(man) - _MANIFEST_KEYS
    if unknown:
        raise InputError(f"unknown manifest keys: {sorted(unknown)}")
    poly, A = _load_polygon(man["polygon"])
    if "A" in man:
        A = ScalarField.from_json(man["A"])
    if A is None:
        A = unique_affine_A(poly)
    n = int(man.get("grid", args.grid))
    tol = float(man.get("tol", args.tol))
    out_dir = man.get("out", args.out)
    args.out = out_dir
    u0 = guillemin_potential(poly, n=n)
    st = solve(u0, A, tol=tol, max_steps=int(man.get("max_steps", 30)), track_f=True)
    g = st.grid
    f = st.potential.correction.values if st.potential.correction is not None else np.zeros((g.nx, g.ny))
    write_grid_csv(_out_path(args, "solution.csv"), g, f)
    _write_json(
        _out_path(args, "solve.json"),
        {
            "steps": st.steps,
            "res_max": st.res_max,
            "res_l2": st.res_l2,
            "damping_history": st.damping_history,
            "f_history": [float(x) for x in st.f_history],
            "min_eig_history": [float(x) for x in st.min_eig_history],
        },
        _config(args, manifest=os.path.abspath(args.manifest), grid=n, tol=tol),
    )
    return 0 if st.res_max <= tol else 1


# ---------------------------------------------------------------------------
# verification suites on shipped fixtures


def _verify_lemma14(seed):
    uq = quarter_plane_model(25.0, n=33)
    rep = _analysis.lemma14_ratio(uq, (2.0, 2.0), 1.0, 1.0)
    kappa = rep.details["kappa_implied"]
    oracle = 0.25 / np.log(3.0) ** 2
    rep2 = _analysis.lemma14_ratio(rescale_potential(uq, 2.0), (4.0, 4.0), 2.0, 2.0)
    ok = abs(kappa - oracle) < 1e-12 and abs(kappa - rep2.details["kappa_implied"]) < 1e-8
    return [rep.to_json(), rep2.to_json()], ok


def _verify_lemma17(seed):
    uq = quarter_plane_model(25.0, n=33)
    reps = _analysis.lemma17_identity(uq, [1.0, 2.0, 4.0, 8.0])
    ratios = [r.ratio for r in reps]
    ok = max(ratios) - min(ratios) < 1e-8
    return [r.to_json() for r in reps], ok


def _verify_lemma18(seed):
    r1 = _analysis.lemma18_check(lambda t: np.ones_like(t), lambda t: np.zeros_like(t), 1.0, 0.0)
    r2 = _analysis.lemma18_check(lambda t: np.exp(t), lambda t: np.ones_like(t), 1.0, 1.0)
    r3 = _analysis.lemma18_check(lambda t: np.exp(t), lambda t: np.ones_like(t), 3.0, 1.0)
    ok = bool(r1.passed) and bool(r2.passed) and (r3.passed is None)
    return [r1.to_json(), r2.to_json(), r3.to_json()], ok


def _verify_flux(seed):
    uq = quarter_plane_model(25.0, n=33)
    r1 = _analysis.flux_identity(uq, 2.0)
    r2 = _analysis.flux_identity(rescale_potential(uq, 2.0), 2.0)
    ok = bool(r1.passed) and bool(r2.passed)
    return [r1.to_json(), r2.to_json()], ok


def _verify_harmonic(seed):
    uq = quarter_plane_model(8.0, n=33)
    r1 = _analysis.f_harmonic_check(uq)
    r2 = _analysis.f_harmonic_check(half_plane_model(4.0, n=33))
    ok = bool(r1.passed) and bool(r2.passed)
    return [r1.to_json(), r2.to_json()], ok


def _verify_detbounds(seed):
    from .potential import AnalyticCorrection, PotentialField, free_quadratic_potential

    r1 = _analysis.det_bounds(free_quadratic_potential(np.eye(2), truncation=2.0), (0.0, 0.0), 1.0)
    base = quarter_plane_model(25.0, n=33)
    corr = AnalyticCorrection(
        value=lambda pts: -pts[:, 0] - pts[:, 1],
        gradient=lambda pts: -np.ones((len(pts), 2)),
    )
    um = PotentialField(base.domain, base.canonical, grid=base.grid, correction=corr)
    r2 = _analysis.det_bounds(um, (1.0, 1.0), 0.5)
    r3 = _analysis.det_bounds(rescale_potential(um, 2.0), (2.0, 2.0), 1.0)
    ok = (
        r1.details["c1_implied"] >= 1.0 - 1e-12
        and r1.details["c3_implied"] <= 1.0 + 1e-12
        and abs(r2.details["c1_implied"] - r3.details["c1_implied"]) < 1e-8
        and abs(r2.details["c3_implied"] - r3.details["c3_implied"]) < 1e-8
    )
    return [r1.to_json(), r2.to_json(), r3.to_json()], ok


def _verify_thm2(seed):
    rep = _analysis.theorem2_evidence()
    return [rep.to_json()], bool(rep.passed)


_VERIFIERS = {
    "lemma14": _verify_lemma14,
    "lemma17": _verify_lemma17,
    "lemma18": _verify_lemma18,
    "flux": _verify_flux,
    "harmonic": _verify_harmonic,
    "detbounds": _verify_detbounds,
    "thm2": _verify_thm2,
}


def _cmd_verify(args):
    names = list(_VERIFIERS) if args.subcommand == "all" else [args.subcommand]
    reports = []
    summary = {}
    all_ok = True
    for name in names:
        reps, ok = _VERIFIERS[name](args.seed)
        reports.extend(reps)
        summary[name] = "pass" if ok else "fail"
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    with open(_out_path(args, "verify.jsonl"), "w") as fh:
        for r in reports:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    _write_json(
        _out_path(args, "verify.json"),
        {
            "suites": summary,
            "passes": sum(1 for v in summary.values() if v == "pass"),
            "failures": sum(1 for v in summary.values() if v == "fail"),
        },
        _config(args),
    )
    return 0 if all_ok else 1


def _cmd_plot(args):
    if args.subcommand == "polygon-svg":
        poly, _ = _load_polygon(args.polygon)
        path = _out_path(args, "polygon.svg")
        _write_polygon_svg(path, poly)
        return 0
    if args.subcommand == "field-csv":
        args.subcommand = "abreu"
        return _cmd_field(args)
    raise InputError(f"unknown plot subcommand {args.subcommand}")


def _write_polygon_svg(path, poly: WeightedPolygon, size=400):
    lo, hi = poly.bounding_box
    span = float(np.max(hi - lo))
    pad = 0.08 * span

    def sx(p):
        return (p[0] - lo[0] + pad) / (span + 2 * pad) * size

    def sy(p):
        return size - (p[1] - lo[1] + pad) / (span + 2 * pad) * size

    pts = " ".join(f"{sx(v):.2f},{sy(v):.2f}" for v in poly.vertices)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
        f'<polygon points="{pts}" fill="#eef" stroke="#225" stroke-width="2"/>',
    ]
    for e in poly.edges:
        m = e.midpoint
        lines.append(
            f'<text x="{sx(m):.2f}" y="{sy(m):.2f}" font-size="12" fill="#225">'
            f"{e.weight:.4g}</text>"
        )
    for v in poly.vertices:
        lines.append(f'<circle cx="{sx(v):.2f}" cy="{sy(v):.2f}" r="3" fill="#822"/>')
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid", type=int, default=argparse.SUPPRESS,
                        help="lattice nodes per side")
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS,
                        help="solver tolerance")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="probe/scan seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    ap = argparse.ArgumentParser(prog="abreu", description=__doc__)
    ap.add_argument("--grid", type=int, default=65, help="lattice nodes per side")
    ap.add_argument("--tol", type=float, default=1e-6, help="solver tolerance")
    ap.add_argument("--seed", type=int, default=0, help="probe/scan seed")
    ap.add_argument("--out", default="out", help="output directory")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("polygon", parents=[common])
    p.add_argument("subcommand", choices=["canon", "balance", "mu", "cut", "rebalance", "rescale", "path"])
    p.add_argument("polygon")
    p.add_argument("polygon2", nargs="?")
    p.add_argument("--A-const", type=float, default=1.0)
    p.add_argument("--vertex", type=int, default=0)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--edges", type=int, nargs=2, default=[0, 1])
    p.add_argument("--factor", type=float, default=2.0)
    p.add_argument("--steps", type=int, default=11)

    f = sub.add_parser("field", parents=[common])
    f.add_argument("subcommand", choices=["abreu", "curvature", "energy"])
    f.add_argument("polygon", nargs="?")
    f.add_argument("--model", choices=["quarter", "half"])
    f.add_argument("--truncation", type=float, default=4.0)

    s = sub.add_parser("stability", parents=[common])
    s.add_argument("subcommand", choices=["probe", "lambda"])
    s.add_argument("polygon")
    s.add_argument("--n", type=int, default=200)

    g = sub.add_parser("geom", parents=[common])
    g.add_argument("subcommand", choices=["mcond", "geodist", "bounds", "volume"])
    g.add_argument("polygon", nargs="?")
    g.add_argument("--model", choices=["quarter", "half"])
    g.add_argument("--truncation", type=float, default=4.0)
    g.add_argument("--density", type=int, default=12)
    g.add_argument("--M", type=float)
    g.add_argument("--source-edge", type=int, default=0)
    g.add_argument("--source-point", type=float, nargs=2)
    g.add_argument("--taus", type=float, nargs="+", default=[1, 2, 3, 4, 5, 6, 7, 8])

    so = sub.add_parser("solve", parents=[common])
    so.add_argument("--manifest", required=True)

    v = sub.add_parser("verify", parents=[common])
    v.add_argument("subcommand", choices=["all"] + sorted(_VERIFIERS))

    pl = sub.add_parser("plot", parents=[common])
    pl.add_argument("subcommand", choices=["polygon-svg", "field-csv"])
    pl.add_argument("polygon", nargs="?")
    pl.add_argument("--model", choices=["quarter", "half"])
    pl.add_argument("--truncation", type=float, default=4.0)

    return ap


_HANDLERS = {
    "polygon": _cmd_polygon,
    "field": _cmd_field,
    "stability": _cmd_stability,
    "geom": _cmd_geom,
    "solve": _cmd_solve,
    "verify": _cmd_verify,
    "plot": _cmd_plot,
}


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (InvalidPolygonError, ConvexityError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
