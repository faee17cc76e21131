"""Command-line front end.

Subcommands wire the pipeline together: equilibria -> verify -> build ->
doa, plus expansion, trajectory export, contour export, the bundled case
studies (``reproduce``), and report re-validation (``check``). A run is
configured by an optional JSON config document; command-line flags
override config fields. Exit codes: 0 success/pass, 1 usage error,
2 certification failure, 3 numeric error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys as _sys

import numpy as np

from . import __version__, doa, dynamics, ftlf, linalg, lyap, ode, reproduce
from ._kernels import BACKEND
from .errors import (BracketError, DefinitenessError, DimensionError,
                     EmptyRegionError, FiniteEscapeError, GeometryError,
                     HorizonNotFoundError, NotHurwitzError, NumericError,
                     StepBudgetError, UnknownSystemError, ValidationError)

USAGE_ERROR = 1
CERT_FAILURE = 2
NUMERIC_ERROR = 3


def _cap_threads():
    cap = os.environ.get("LYAPGEN_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(int(cap))
    except Exception:
        pass  # env caps still apply to pools created later


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _merged(cfg, args, key, default=None):
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    return cfg.get(key, default)


def _resolve_system(cfg, args):
    name = _merged(cfg, args, "system")
    if name is None:
        raise ValidationError("no system given (--system or config)")
    params = _merged(cfg, args, "params", {})
    if isinstance(params, str):
        params = json.loads(params)
    if os.path.exists(name) or name.endswith(".json"):
        doc = _load_config(name)
        if params:
            doc.setdefault("params", {}).update(params)
        return dynamics.load_system(doc)
    return dynamics.registry_get(name, params)


def _resolve_box(sys, cfg, args):
    spec = _merged(cfg, args, "box")
    if spec is None:
        box = sys.analysis_box
        if box is None:
            raise ValidationError("system declares no analysis box; pass --box")
        return box
    if isinstance(spec, str):
        spec = json.loads(spec)
    return dynamics.Box(spec["lower"], spec["upper"])


def _resolve_equilibrium(sys, cfg, args):
    point = _merged(cfg, args, "point")
    if point is not None:
        if isinstance(point, str):
            point = [float(v) for v in point.split(",")]
        return np.asarray(point, dtype=float)
    idx = _merged(cfg, args, "equilibrium_index")
    eqs = dynamics.find_equilibria(sys)
    if idx is None:
        origin = np.zeros(sys.n)
        if float(np.linalg.norm(sys.f(origin))) <= 1e-9:
            return origin
        idx = 0
    idx = int(idx)
    if not eqs:
        raise ValidationError("no equilibria found in the search box")
    if not 0 <= idx < len(eqs):
        raise ValidationError(
            f"equilibrium index {idx} out of range; found {len(eqs)}")
    return eqs[idx].x


def _resolve_p(sys_translated, cfg, args):
    spec = _merged(cfg, args, "p", "lyap")
    if isinstance(spec, (list, tuple)):
        return linalg.QuadraticForm(np.asarray(spec, dtype=float))
    spec = str(spec)
    if spec == "identity":
        return linalg.QuadraticForm.identity(sys_translated.n)
    if spec.startswith("scaled:"):
        return linalg.QuadraticForm.identity(sys_translated.n,
                                             float(spec.split(":", 1)[1]))
    if spec == "lyap":
        a = sys_translated.jac(np.zeros(sys_translated.n))
        return linalg.QuadraticForm(linalg.lyapunov_solve(a, np.eye(sys_translated.n)).p)
    if spec.startswith("[") or spec.endswith(".json"):
        data = json.loads(spec) if spec.startswith("[") else _load_config(spec)
        return linalg.QuadraticForm(np.asarray(data, dtype=float))
    raise ValidationError(f"cannot interpret P spec {spec!r}")


def _out_path(args, cfg, default_name):
    out = _merged(cfg, args, "out")
    if out is None:
        outdir = _merged(cfg, args, "outputs", ".")
        os.makedirs(outdir, exist_ok=True)
        return os.path.join(outdir, default_name)
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return out


def cmd_equilibria(args):
    cfg = _load_config(args.config)
    sys = _resolve_system(cfg, args)
    grid = _merged(cfg, args, "grid")
    eqs = dynamics.find_equilibria(sys, grid=int(grid) if grid else None)
    header = f"{'#':>2}  {'classification':<15} {'x':<40} residual"
    print(header)
    for i, eq in enumerate(eqs):
        print(f"{i:>2}  {eq.classification:<15} "
              f"{np.array2string(np.round(eq.x, 6), separator=', '):<40} "
              f"{eq.residual:.2e}")
    path = _out_path(args, cfg, f"{sys.name}_equilibria.json")
    with open(path, "w") as fh:
        json.dump([e.to_json() for e in eqs], fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {path}")
    return 0


def cmd_verify(args):
    cfg = _load_config(args.config)
    sys = _resolve_system(cfg, args)
    point = _resolve_equilibrium(sys, cfg, args)
    g = dynamics.translate_to_origin(sys, point)
    p = _resolve_p(g, cfg, args)
    box = _resolve_box(g, cfg, args)
    a = g.jac(np.zeros(g.n))

    d = _merged(cfg, args, "d")
    if d is None:
        grid_spec = _merged(cfg, args, "d_grid")
        if grid_spec:
            lo, hi, step = (float(v) for v in str(grid_spec).split(":"))
            d_grid = np.arange(lo, hi + 1e-12, step)
        else:
            d_grid = ftlf.default_d_grid()
        margin = float(_merged(cfg, args, "margin", 0.05))
        try:
            d = ftlf.find_horizon(a, p, d_grid, margin)
        except HorizonNotFoundError as exc:
            print(f"certification failure: {exc}", file=_sys.stderr)
            return CERT_FAILURE
    d = float(d)

    level = _merged(cfg, args, "level")
    level = float(level) if level is not None else ftlf.candidate_level(p, box)
    budget = ftlf.VerifyBudget(seed=int(_merged(cfg, args, "seed", 42)))
    cert = ftlf.verify_nonlinear(g, p, d, ftlf.SublevelSpec(level, box), budget)
    path = _out_path(args, cfg, f"{sys.name}_certificate.json")
    cert.write(path)
    print(f"d = {d:g}, |e^(dA)|_P = {cert.linear_norm:.6f}, "
          f"C_V = {level:g}, max decrease = {cert.max_decrease:.6g}")
    print(f"wrote {path}")
    if not cert.nonlinear_pass:
        print("nonlinear finite-time check FAILED", file=_sys.stderr)
        return CERT_FAILURE
    return 0


def cmd_build(args):
    cfg = _load_config(args.config)
    cert_path = _merged(cfg, args, "cert")
    if cert_path is None or not os.path.exists(cert_path):
        print("missing certificate file (--cert)", file=_sys.stderr)
        return CERT_FAILURE
    with open(cert_path) as fh:
        cert = json.load(fh)
    sysdoc = cert["system"]
    base = dynamics.registry_get(sysdoc["name"], sysdoc.get("params"))
    center = np.asarray(sysdoc.get("center", [0.0] * base.n), dtype=float)
    g = base.translated(center) if center.any() else base
    p = linalg.QuadraticForm(np.asarray(cert["P"], dtype=float))
    d = float(cert["d"])
    w = (lyap.build_flow_w(g, p, d) if args.flow
         else lyap.build_ray_w(g, p, d))
    for alpha in args.expand or []:
        w = lyap.expand_w(w, float(alpha))
    path = _out_path(args, cfg, f"{base.name}_w.json")
    w.write(path)
    print(f"wrote {path}")
    return 0


def _load_w(args, cfg):
    w_path = _merged(cfg, args, "w")
    if w_path is None or not os.path.exists(str(w_path)):
        raise ValidationError("missing W file (--w)")
    return lyap.from_json(w_path)


def cmd_doa(args):
    cfg = _load_config(args.config)
    w = _load_w(args, cfg)
    g = w.sys
    box = _resolve_box(g, cfg, args)
    seed = int(_merged(cfg, args, "seed", 42))
    grid = _merged(cfg, args, "grid")
    budget = doa.DoaBudget(grid_per_axis=int(grid) if grid else None, seed=seed)
    eps = _merged(cfg, args, "eps")
    eps = float(eps) if eps is not None else None

    region = box
    region_level = _merged(cfg, args, "region_level")
    if region_level is not None:
        region = doa.SublevelRegion(w.p, float(region_level), box)

    if args.expand:
        w = lyap.expand_w(w, float(args.expand))

    level = _merged(cfg, args, "level")
    if level is not None:
        est = doa.certify_level(g, w, float(level), eps=eps, box=box,
                                budget=budget, region=region)
    else:
        c_range = _merged(cfg, args, "c_range", "0.01,1.0")
        if isinstance(c_range, str):
            c_range = [float(v) for v in c_range.split(",")]
        est = doa.find_best_c(g, w, tuple(c_range), eps=eps, box=box,
                              budget=budget, region=region)
    path = _out_path(args, cfg, f"{g.name}_doa.json")
    est.write(path)
    print(f"C = {est.c:.6g}, max dW/dt = {est.max_wdot:.6g}, "
          f"verdict = {est.verdict}")
    print(f"wrote {path}")

    contour_path = _merged(cfg, args, "contour")
    if contour_path:
        resolution = _merged(cfg, args, "resolution")
        contour = doa.export_contour(
            w, est.c, box, resolution=int(resolution) if resolution else None)
        contour.to_csv(contour_path)
        print(f"wrote {contour_path}")
    return 0 if est.verdict == "pass" else CERT_FAILURE


def cmd_expand(args):
    cfg = _load_config(args.config)
    w = _load_w(args, cfg)
    w2 = lyap.expand_w(w, float(args.alpha))
    path = _out_path(args, cfg, f"{w.sys.name}_w_expanded.json")
    w2.write(path)
    print(f"wrote {path}")
    return 0


def cmd_trace(args):
    cfg = _load_config(args.config)
    sys = _resolve_system(cfg, args)
    point = _merged(cfg, args, "point")
    if point is None:
        raise ValidationError("trace requires --point")
    if isinstance(point, str):
        point = [float(v) for v in point.split(",")]
    t = float(_merged(cfg, args, "t", 10.0))
    traj = ode.trajectory(sys, np.asarray(point, dtype=float), t)
    path = _out_path(args, cfg, f"{sys.name}_trajectory.csv")
    traj.to_csv(path)
    print(f"wrote {path} ({len(traj.times)} samples)")
    return 0


def cmd_export(args):
    cfg = _load_config(args.config)
    w = _load_w(args, cfg)
    box = _resolve_box(w.sys, cfg, args)
    level = _merged(cfg, args, "level")
    if level is None:
        raise ValidationError("export requires --level")
    resolution = _merged(cfg, args, "resolution")
    contour = doa.export_contour(
        w, float(level), box, resolution=int(resolution) if resolution else None)
    path = _out_path(args, cfg, f"{w.sys.name}_contour.csv")
    contour.to_csv(path)
    print(f"wrote {path}" + (" (empty geometry)" if contour.empty else ""))
    return 0


def cmd_reproduce(args):
    cfg = _load_config(args.config)
    outdir = _merged(cfg, args, "outputs", "reproduce_out")
    seed = int(_merged(cfg, args, "seed", 42))
    report = reproduce.run_example(args.example, outdir, seed=seed)
    for line in report.summary_lines():
        print(line)
    print(f"total {report.timings.get('total', 0.0):.1f}s; "
          f"artifacts in {outdir}")
    return 0 if report.passed else CERT_FAILURE


def cmd_check(args):
    bad = 0
    for path in args.files:
        try:
            verdict = _check_file(path)
        except Exception as exc:
            verdict = f"INVALID ({exc})"
        ok = verdict == "ok"
        bad += 0 if ok else 1
        print(f"{path}: {verdict}")
    return 0 if bad == 0 else CERT_FAILURE


def _check_file(path):
    with open(path) as fh:
        doc = json.load(fh)
    if "maxDecrease" in doc:  # finite-time certificate
        sysdoc = doc["system"]
        base = dynamics.registry_get(sysdoc["name"], sysdoc.get("params"))
        center = np.asarray(sysdoc.get("center", [0.0] * base.n))
        g = base.translated(center) if center.any() else base
        p = linalg.QuadraticForm(np.asarray(doc["P"]))
        _, norm = ftlf.check_linear_ft(g.jac(np.zeros(g.n)), p, doc["d"])
        if abs(norm - doc["linearNorm"]) > 1e-8 * (1.0 + abs(norm)):
            return f"linear norm drifted: {norm} vs {doc['linearNorm']}"
        x = np.asarray(doc["argmax"], dtype=float)
        xd = ode.flow(g, x, doc["d"])
        delta = p.value(xd) - p.value(x)
        if abs(delta - doc["maxDecrease"]) > 1e-6 * (1.0 + abs(delta)):
            return f"recorded max decrease no longer reproduces: {delta}"
        return "ok"
    if "maxWdot" in doc:  # DOA estimate
        w = lyap.from_json(doc["W"])
        for x in doc["witnesses"]:
            x = np.asarray(x, dtype=float)
            if float(w.value_batch(x[None, :])[0]) > doc["C"] + 1e-9:
                return f"witness {x.tolist()} left the sublevel set"
            if np.linalg.norm(x) < doc["eps"] - 1e-12:
                return f"witness {x.tolist()} inside the epsilon ball"
            wd = float(w.wdot_batch(x[None, :])[0])
            if wd > doc["maxWdot"] + 1e-6 * (1.0 + abs(wd)):
                return f"witness dW/dt {wd} exceeds recorded max"
        return "ok"
    if "kind" in doc and "P" in doc:  # W export
        w = lyap.from_json(doc)
        if abs(w.value(np.zeros(w.sys.n))) > 1e-12:
            return "W(0) != 0"
        return "ok"
    if "assertions" in doc:  # reproduce report
        if all(isinstance(a.get("ok"), bool) for a in doc["assertions"]):
            return "ok"
        return "malformed assertions"
    return "unrecognized report type"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lyapgen",
        description="Construct Lyapunov functions for nonlinear ODEs via "
                    "finite-time certificates and certify domain-of-"
                    "attraction estimates.")
    parser.add_argument("--version", action="version",
                        version=f"lyapgen {__version__} (kernels: {BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config document")
        sp.add_argument("--seed", type=int, help="rng seed (default 42)")
        sp.add_argument("--out", help="output file")
        sp.add_argument("--outputs", help="output directory")

    sp = sub.add_parser("equilibria", help="locate and classify equilibria")
    common(sp)
    sp.add_argument("--system", help="registry name or definition file")
    sp.add_argument("--params", help="JSON parameter overrides")
    sp.add_argument("--grid", type=int, help="multistart grid per axis")

    sp = sub.add_parser("verify", help="finite-time decrease certificate")
    common(sp)
    sp.add_argument("--system")
    sp.add_argument("--params")
    sp.add_argument("--equilibrium-index", type=int)
    sp.add_argument("--point", help="equilibrium coordinates a,b,...")
    sp.add_argument("--p", help="identity | scaled:c | lyap | JSON matrix")
    sp.add_argument("--d", type=float, help="fixed horizon")
    sp.add_argument("--d-grid", help="lo:hi:step search grid")
    sp.add_argument("--margin", type=float)
    sp.add_argument("--level", type=float, help="candidate sublevel C_V")
    sp.add_argument("--box", help='{"lower": [...], "upper": [...]}')

    sp = sub.add_parser("build", help="assemble W from a certificate")
    common(sp)
    sp.add_argument("--cert", help="certificate JSON from verify")
    sp.add_argument("--flow", action="store_true",
                    help="trajectory-integral W instead of the ray form")
    sp.add_argument("--expand", action="append", type=float,
                    help="append an expansion step (repeatable)")

    sp = sub.add_parser("doa", help="certify a sublevel estimate")
    common(sp)
    sp.add_argument("--w", help="W JSON from build")
    sp.add_argument("--level", type=float, help="certify this fixed level")
    sp.add_argument("--c-range", help="lo,hi for bisection")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--box")
    sp.add_argument("--grid", type=int)
    sp.add_argument("--region-level", type=float,
                    help="containment region {V <= level}")
    sp.add_argument("--expand", type=float,
                    help="expand W once before certifying")
    sp.add_argument("--contour", help="also export the contour CSV here")
    sp.add_argument("--resolution", type=int)

    sp = sub.add_parser("expand", help="expand an exported W")
    common(sp)
    sp.add_argument("--w", required=True)
    sp.add_argument("--alpha", required=True, type=float)

    sp = sub.add_parser("trace", help="export a trajectory CSV")
    common(sp)
    sp.add_argument("--system")
    sp.add_argument("--params")
    sp.add_argument("--point", help="initial state a,b,...")
    sp.add_argument("--t", type=float, help="final time")

    sp = sub.add_parser("export", help="export a level-set contour CSV")
    common(sp)
    sp.add_argument("--w", required=True)
    sp.add_argument("--level", type=float)
    sp.add_argument("--box")
    sp.add_argument("--resolution", type=int)

    sp = sub.add_parser("reproduce", help="run a bundled case study")
    common(sp)
    sp.add_argument("example", help="5.1 ... 5.7")

    sp = sub.add_parser("check", help="re-validate report files")
    sp.add_argument("files", nargs="+")

    return parser


_COMMANDS = {
    "equilibria": cmd_equilibria, "verify": cmd_verify, "build": cmd_build,
    "doa": cmd_doa, "expand": cmd_expand, "trace": cmd_trace,
    "export": cmd_export, "reproduce": cmd_reproduce, "check": cmd_check,
}


def main(argv=None):
    _cap_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (UnknownSystemError, ValidationError, DimensionError,
            FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return USAGE_ERROR
    except (HorizonNotFoundError, BracketError, EmptyRegionError,
            GeometryError, DefinitenessError, NotHurwitzError) as exc:
        print(f"certification failure: {exc}", file=_sys.stderr)
        return CERT_FAILURE
    except (NumericError, FiniteEscapeError, StepBudgetError,
            FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=_sys.stderr)
        return NUMERIC_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
