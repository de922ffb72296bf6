"""Command-line interface.

Exit codes: 0 success (theory checks may still fail; they are data), 2 bad
flags, 3 unreadable or inconsistent input, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import plotting
from .criterion import SCAN_HEADER, g_scan, scan_verdict
from .diagnostics import ReportConfig, full_report
from .distributions import CsvError, PointSource, from_name, load_csv
from .geometry import PolygonalCurve, load_curve, save_curve
from .oned import CSV_HEADER as ONED_HEADER
from .oned import solve_1d
from .optimizer import FitConfig, NumericalError, fit
from .runio import RunManifest, ensure_parent, read_config, write_config, write_csv, write_history, write_json

SVG_MAX_POINTS = 2000

DEMOS = {
    "circle": dict(dist="circle", length=math.pi, closed=True, vertices=64, seed=1),
    "uniform1d": dict(dist="uniform1d", length=0.5, closed=False, vertices=16, seed=2),
    "square": dict(dist="square", length=3.0, closed=False, vertices=48, seed=0),
    "gaussian": dict(dist="gaussian", length=2 * math.pi * math.sqrt(math.pi / 2), closed=True, vertices=64, seed=3),
}


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


# ---------------------------------------------------------------- parser


def _source_flags(p):
    g = p.add_argument_group("data source")
    g.add_argument("--input", help="CSV file of points (one row per point)")
    g.add_argument("--dist", help="built-in law: square, gaussian, circle, uniform1d, mixture")
    g.add_argument("--dim", type=int, default=2, help="dimension of the gaussian law")
    g.add_argument("--radius", type=float, default=1.0, help="circle radius")
    g.add_argument("--p", type=float, default=0.5, help="atom weight of the mixture law")
    g.add_argument("--a", type=float, default=0.0, help="left end of uniform1d")
    g.add_argument("--b", type=float, default=1.0, help="right end of uniform1d")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--samples", type=int, default=20000, help="sample size drawn from a built-in law")


def _fit_flags(p, need_length=True):
    g = p.add_argument_group("fit")
    if need_length:
        g.add_argument("--length", type=float, help="length budget L (required)")
    g.add_argument("--closed", action="store_true", help="fit a closed curve")
    g.add_argument("--vertices", type=int, default=16)
    g.add_argument("--max-iters", type=int, default=600)
    g.add_argument("--restarts", type=int, default=1)
    g.add_argument("--batch-size", type=int, default=0, help="0 uses the full sample each step")
    g.add_argument("--polish-iters", type=int, default=100)
    g.add_argument("--no-smoothing", action="store_true")
    g.add_argument("--no-recenter", action="store_true")
    g.add_argument("--config", help="file of key=value lines; explicit flags take precedence")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="princurve", description="Length-constrained principal curves.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a curve and write curve JSON, history CSV and figures")
    _source_flags(p)
    _fit_flags(p)
    p.add_argument("--report", action="store_true", help="also run the diagnostics")
    p.add_argument("--out", default="princurve", help="output path prefix")

    p = sub.add_parser("diagnose", help="check the optimality properties of a curve")
    p.add_argument("--curve", required=True)
    _source_flags(p)
    p.add_argument("--length", type=float, help="length budget (defaults to the polygonal length)")
    p.add_argument("--basis", type=int, default=4, help="number of trigonometric frequencies")
    p.add_argument("--bins", type=int, default=16, help="arc-length bins for self-consistency")
    p.add_argument("--out", default="princurve")

    p = sub.add_parser("scan", help="best distortion over a list of length budgets")
    _source_flags(p)
    _fit_flags(p, need_length=False)
    p.add_argument("--lengths", required=True, help="comma-separated ascending budgets")
    p.add_argument("--out", default="princurve")

    p = sub.add_parser("solve1d", help="exact optimal interval for a 1-D law")
    _source_flags(p)
    p.add_argument("--length", type=float)
    p.add_argument("--lengths", help="comma-separated budgets")
    p.add_argument("--out", default="princurve")

    p = sub.add_parser("plot", help="SVG of a curve, optional points and atom markers")
    p.add_argument("--curve", required=True)
    p.add_argument("--points", help="CSV of points to draw")
    p.add_argument("--report", help="diagnostics JSON; knots with mass are emphasized")
    p.add_argument("--out", default="princurve.svg", help="SVG path (or prefix)")

    p = sub.add_parser("demo", help="run a reference case end to end")
    p.add_argument("--case", choices=sorted(DEMOS), default="circle")
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--out", default=None, help="output path prefix (defaults to the case name)")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list) -> argparse.Namespace:
    """Parse ``argv``; values from ``--config`` fill in flags not given explicitly."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    try:
        values = read_config(path)
    except OSError as exc:
        raise InputError(f"cannot read config: {exc}") from exc
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in actions or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                defaults[key] = action.type(raw) if action.type else raw
            except ValueError as exc:
                raise UsageError(f"config key {key}: {exc}") from exc
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# ---------------------------------------------------------------- helpers


def _source(args, manifest: RunManifest) -> PointSource:
    if bool(args.input) == bool(args.dist):
        raise UsageError("give exactly one of --input or --dist")
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    if args.input:
        try:
            src = load_csv(args.input, seed=args.seed)
        except (OSError, CsvError) as exc:
            raise InputError(f"{args.input}: {exc}") from exc
        manifest.add_input(args.input)
        return src
    try:
        return from_name(args.dist, seed=args.seed, dim=args.dim, radius=args.radius, p=args.p, a=args.a, b=args.b)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _points(src: PointSource, args) -> np.ndarray:
    # the sample a fit with the same seed and --samples trains on
    return src.training_points(args.samples)


def _fit_config(args, length: float) -> FitConfig:
    try:
        return FitConfig(
            length=length,
            n_vertices=args.vertices,
            topology="closed" if args.closed else "open",
            max_iters=args.max_iters,
            n_samples=args.samples,
            batch_size=args.batch_size,
            smoothing=not args.no_smoothing,
            recenter_mean=not args.no_recenter,
            seed=args.seed,
            restarts=args.restarts,
            polish_iters=args.polish_iters,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_curve(path, manifest: RunManifest) -> PolygonalCurve:
    try:
        curve = load_curve(path)
    except OSError as exc:
        raise InputError(f"cannot read curve: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    manifest.add_input(path)
    return curve


def _lengths(text: str) -> list:
    try:
        values = [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"--lengths: {exc}") from exc
    if not values:
        raise UsageError("--lengths is empty")
    if any(not math.isfinite(v) or v < 0 for v in values):
        raise UsageError("--lengths must be finite and nonnegative")
    if any(b < a for a, b in zip(values, values[1:])):
        raise UsageError("--lengths must be sorted ascending")
    return values


def _out(manifest: RunManifest, prefix: str, suffix: str) -> str:
    path = f"{prefix}{suffix}"
    ensure_parent(path)
    return manifest.add_output(path)


# ---------------------------------------------------------------- commands


def cmd_fit(args, manifest: RunManifest) -> int:
    if args.length is None:
        raise UsageError("--length is required")
    src = _source(args, manifest)
    cfg = _fit_config(args, args.length)
    manifest.config = {"source": src.describe(), "fit": cfg.to_dict(), "report": bool(args.report)}
    manifest.seed = cfg.seed
    res = fit(src, cfg)
    report = None
    if args.report:
        report = full_report(res.curve, res.points, ReportConfig(length=cfg.length)).to_dict()
    prefix = args.out
    save_curve(res.curve, _out(manifest, prefix, ".curve.json"))
    summary = res.to_dict()
    summary["source"] = src.describe()
    write_json(_out(manifest, prefix, ".fit.json"), summary)
    write_history(_out(manifest, prefix, ".history.csv"), res.history)
    write_config(_out(manifest, prefix, ".config"), {**cfg.to_dict(), **{f"source_{k}": v for k, v in src.describe().items()}})
    if report is not None:
        write_json(_out(manifest, prefix, ".report.json"), report)
    atoms = plotting.atom_knots(res.curve, report)
    plotting.write_svg(_out(manifest, prefix, ".svg"), res.curve, res.points, atoms, SVG_MAX_POINTS)
    plotting.curve_figure(_out(manifest, prefix, ".png"), res.curve, res.points, cfg.length,
                          f"L = {cfg.length:g}, n = {cfg.n_vertices}")
    print("delta_hat,std_error,iterations,lambda_n,constraint_residual")
    print(f"{res.delta_hat.value!r},{res.delta_hat.std_error!r},{res.iterations},{res.lambda_n!r},{res.constraint_residual!r}")
    if report is not None:
        _print_checks(report)
    return 0


def _print_checks(report: dict) -> None:
    print("check,value,threshold,pass")
    for c in report["checks"]:
        thr = c["threshold"]
        if isinstance(thr, list):
            thr = "|".join(repr(t) for t in thr)
        verdict = "skip" if c["pass"] is None else ("pass" if c["pass"] else "fail")
        print(f"{c['name']},{c['value']!r},{thr},{verdict}")


def cmd_diagnose(args, manifest: RunManifest) -> int:
    curve = _load_curve(args.curve, manifest)
    src = _source(args, manifest)
    if src.d != curve.d:
        raise InputError(f"data dimension {src.d} does not match curve dimension {curve.d}")
    if args.basis < 0 or args.bins < 2:
        raise UsageError("--basis must be >= 0 and --bins >= 2")
    cfg = ReportConfig(length=args.length, basis_size=args.basis, n_bins=args.bins)
    manifest.config = {"source": src.describe(), "samples": args.samples, "length": args.length,
                       "basis": args.basis, "bins": args.bins}
    manifest.seed = args.seed
    pts = _points(src, args)
    report = full_report(curve, pts, cfg).to_dict()
    write_json(_out(manifest, args.out, ".report.json"), report)
    plotting.curve_figure(_out(manifest, args.out, ".png"), curve, pts, report["length_budget"], "diagnosed curve")
    _print_checks(report)
    return 0


def cmd_scan(args, manifest: RunManifest) -> int:
    lengths = _lengths(args.lengths)
    src = _source(args, manifest)
    cfg = _fit_config(args, max(max(lengths), 1e-12))
    manifest.config = {"source": src.describe(), "fit": cfg.to_dict(), "lengths": lengths}
    manifest.seed = cfg.seed
    rows = g_scan(src, lengths, cfg, cfg.n_samples)
    write_csv(_out(manifest, args.out, ".scan.csv"), SCAN_HEADER, [r.csv() for r in rows])
    reference = None
    if src.d == 1:
        def reference(L):
            return solve_1d(src, L).delta
    plotting.scan_figure(_out(manifest, args.out, ".scan.png"), [r.length for r in rows],
                         [r.g_hat for r in rows], [r.std_error for r in rows], reference)
    print(SCAN_HEADER)
    for r in rows:
        print(r.csv())
    if len(rows) > 1:
        ok, notes = scan_verdict(rows)
        print(f"verdict,{'decreasing' if ok else 'not_decreasing'}")
        for note in notes:
            print(f"# {note}", file=sys.stderr)
    return 0


def cmd_solve1d(args, manifest: RunManifest) -> int:
    if (args.length is None) == (args.lengths is None):
        raise UsageError("give exactly one of --length or --lengths")
    lengths = [args.length] if args.length is not None else _lengths(args.lengths)
    if any(not math.isfinite(L) or L < 0 for L in lengths):
        raise UsageError("--length must be finite and nonnegative")
    src = _source(args, manifest)
    if src.d != 1:
        raise InputError(f"solve1d needs one-dimensional data, got d = {src.d}")
    manifest.config = {"source": src.describe(), "lengths": lengths}
    manifest.seed = args.seed
    sols = [solve_1d(src, L) for L in lengths]
    write_csv(_out(manifest, args.out, ".solve1d.csv"), ONED_HEADER, [s.csv() for s in sols])
    print(ONED_HEADER)
    for s in sols:
        print(s.csv())
    return 0


def cmd_plot(args, manifest: RunManifest) -> int:
    curve = _load_curve(args.curve, manifest)
    pts = None
    if args.points:
        try:
            pts = load_csv(args.points).points
        except (OSError, CsvError) as exc:
            raise InputError(f"{args.points}: {exc}") from exc
        manifest.add_input(args.points)
        if pts.shape[1] != curve.d:
            raise InputError(f"points have dimension {pts.shape[1]}, curve has {curve.d}")
    report = None
    if args.report:
        try:
            with open(args.report) as fh:
                report = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"{args.report}: {exc}") from exc
        if not isinstance(report, dict):
            raise InputError(f"{args.report}: not a diagnostics report")
        manifest.add_input(args.report)
    manifest.config = {"curve": args.curve, "points": args.points, "report": args.report}
    out = args.out
    svg = out if out.endswith(".svg") else out + ".svg"
    ensure_parent(svg)
    plotting.write_svg(manifest.add_output(svg), curve, pts, plotting.atom_knots(curve, report))
    args.out = svg[: -len(".svg")]
    return 0


def cmd_demo(args, manifest: RunManifest) -> int:
    case = DEMOS[args.case]
    parser = build_parser()
    argv = ["fit", "--dist", case["dist"], "--length", repr(case["length"]), "--vertices", str(case["vertices"]),
            "--seed", str(case["seed"]), "--samples", str(args.samples), "--report",
            "--out", args.out or args.case]
    if case["closed"]:
        argv.append("--closed")
    fit_args = parser.parse_args(argv)
    args.out = fit_args.out
    code = cmd_fit(fit_args, manifest)
    manifest.config = {"demo": args.case, **manifest.config}
    return code


COMMANDS = {
    "fit": cmd_fit,
    "diagnose": cmd_diagnose,
    "scan": cmd_scan,
    "solve1d": cmd_solve1d,
    "plot": cmd_plot,
    "demo": cmd_demo,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    start = time.perf_counter()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"princurve: error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"princurve: input error: {exc}", file=sys.stderr)
        return 3
    manifest = RunManifest(command=["princurve", *argv], config={})
    try:
        code = COMMANDS[args.command](args, manifest)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"princurve: error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"princurve: input error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"princurve: numerical failure: {exc}", file=sys.stderr)
        return 4
    manifest.wall_time = round(time.perf_counter() - start, 6)
    manifest.write(f"{args.out}.manifest.json")
    return code


if __name__ == "__main__":
    sys.exit(main())
