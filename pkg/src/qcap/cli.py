"""Command-line interface: ``qcap solve | sweep | mesh | verify``.

Exit codes: 0 success, 1 runtime error, 2 adaptive run hit max-iters,
64 usage error, 65 input file or geometry error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .adaptive import AdaptiveConfig, Status, default_tol, parse_control, parse_method, run_adaptive
from .estimator import length_in_meters
from .geometry import GeometryError, eval_param_expr, load_cross_section, resolve_geometry
from .mesh import build_initial_mesh, refine_all
from .sweep import SweepSpec, parse_range, reference_run, run_sweep, worker_count
from .verify import format_checks, run_verification

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAX_ITERS = 2
EXIT_USAGE = 64
EXIT_DATAERR = 65

logger = logging.getLogger("qcap")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_adaptive_flags(p):
    p.add_argument("--method", default="all", help="all | top:<p> (default: all)")
    p.add_argument("--tol", type=float, default=None, help="relative change threshold (default 1e-2 for all, 1e-3 for top:p)")
    p.add_argument("--max-iters", type=int, default=30)
    p.add_argument("--initial-l", default=None, metavar="EXPR", help="initial max element length, e.g. '2*w' (default: one element per segment)")
    p.add_argument("--control", default="diag:0", help="diag:<k> | fro (default: diag:0)")
    p.add_argument("--set", action="append", default=[], metavar="NAME=VALUE", help="override a geometry parameter")


def build_parser():
    parser = _Parser(prog="qcap", description="2D capacitance matrix extraction by the method of moments")
    parser.add_argument("--version", action="version", version=f"qcap {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("solve", help="extract the capacitance matrix of one cross-section")
    p.add_argument("geometry")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--uniform", metavar="L", help="single solve on a uniform mesh of element length L (expression)")
    mode.add_argument("--adaptive", action="store_true", help="adaptive refinement (default)")
    _add_adaptive_flags(p)
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=["csv", "json", "text"], default="text")

    p = sub.add_parser("sweep", help="vary one parameter and compare adaptive vs uniform reference")
    p.add_argument("geometry")
    p.add_argument("--param", required=True)
    p.add_argument("--range", default="-5:5:1", help="START:STOP[:STEP] in percent (default -5:5:1)")
    p.add_argument("--skip-zero", action="store_true")
    p.add_argument("--reference-l", default="t/3", metavar="EXPR")
    _add_adaptive_flags(p)
    p.add_argument("--serial", action="store_true", help="run points one at a time (use for timing studies)")
    p.add_argument("--out", help="write the CSV report here (default: stdout)")

    p = sub.add_parser("mesh", help="dump the boundary mesh as CSV")
    p.add_argument("geometry")
    p.add_argument("--l", required=True, metavar="EXPR", help="max element length")
    p.add_argument("--refine-iters", type=int, default=0)
    p.add_argument("--set", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--out")

    p = sub.add_parser("verify", help="compare kernels and solver against independent oracles")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _fix_negative_values(argv):
    # argparse mistakes "-5:5:1" for an option; glue it to its flag
    out = []
    i = 0
    while i < len(argv):
        if argv[i] in ("--range", "--set", "--initial-l", "--uniform", "--reference-l", "--l") and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def _overrides(items, cs):
    out = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"--set expects NAME=VALUE, got {item!r}")
        name, expr = item.split("=", 1)
        name = name.strip()
        if name not in cs.parameters:
            raise GeometryError(f"--set: unknown parameter {name!r}")
        out[name] = eval_param_expr(expr.strip(), cs.parameters)
    return out


def _load(path):
    try:
        return load_cross_section(path)
    except OSError as exc:
        raise GeometryError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _manifest(args, params, config):
    return {
        "input": str(Path(args.geometry).resolve()) if hasattr(args, "geometry") else None,
        "parameters": params,
        "config": config,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _comment(manifest):
    return "".join(f"# {k}: {json.dumps(v)}\n" for k, v in manifest.items())


def _emit(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _adaptive_config(args, cs, params):
    try:
        method = parse_method(args.method)
        control = parse_control(args.control)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    tol = default_tol(method) if args.tol is None else args.tol
    if args.initial_l is None:
        l0 = max(s.length for s in resolve_geometry(cs, params).segments)
    else:
        l0 = length_in_meters(args.initial_l, cs, {**cs.parameters, **params})
    try:
        return AdaptiveConfig(method, tol, args.max_iters, l0, control)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def cmd_solve(args):
    cs = _load(args.geometry)
    over = _overrides(args.set, cs)
    params = {**cs.parameters, **over}
    rg = resolve_geometry(cs, over)
    if args.uniform is not None:
        l_max = length_in_meters(args.uniform, cs, params)
        config = {"mode": "uniform", "l_max_m": l_max, "l_expr": args.uniform}
        ref = reference_run(rg, l_max)
        cap, trace, n, mem = ref.capacitance, None, ref.n, ref.memory_bytes
        assemble_s = solve_s = None
        status = "uniform"
    else:
        cfg = _adaptive_config(args, cs, over)
        config = {
            "mode": "adaptive",
            "method": str(cfg.method),
            "tol": cfg.tol,
            "max_iters": cfg.max_iters,
            "initial_l_m": cfg.initial_l_max,
            "initial_l_expr": args.initial_l,
            "control": str(cfg.control),
        }
        run = run_adaptive(rg, cfg)
        cap, trace = run.capacitance, run.trace
        n, mem = trace.final.n, trace.final.memory_bytes
        assemble_s = sum(r.assemble_s for r in trace.records)
        solve_s = sum(r.solve_s for r in trace.records)
        status = trace.status.value
    manifest = _manifest(args, params, config)

    if args.format == "json":
        report = {
            "manifest": manifest,
            "n_cond": cap.n_cond,
            "conductors": list(cap.names),
            "C": cap.C.tolist(),
            "N": n,
            "memory_bytes": mem,
            "assemble_s": assemble_s,
            "solve_s": solve_s,
            "status": status,
            "trace": None if trace is None else [_finite(r.__dict__) for r in trace.records],
        }
        _emit(json.dumps(report, indent=2, allow_nan=False) + "\n", args.out)
    elif args.format == "csv":
        text = _comment(manifest) + cap.to_csv()
        if trace is not None:
            if args.out:
                trace_path = Path(args.out).with_suffix(".trace.csv")
                trace_path.write_text(_comment(manifest) + trace.to_csv(), encoding="utf-8")
            else:
                text += "\n" + trace.to_csv()
        _emit(text, args.out)
    else:
        lines = [f"qcap {__version__}  {manifest['input']}", f"status: {status}   N = {n}   memory = {mem} B"]
        lines.append("C (F/m):")
        names = list(cap.names)
        w = max(len(x) for x in names)
        for name, row in zip(names, cap.C):
            lines.append(f"  {name.ljust(w)}  " + "  ".join(f"{x: .6e}" for x in row))
        if trace is not None:
            lines.append("trace:")
            lines.append("  iter       N       control   delta_rel   seconds")
            for r in trace.records:
                d = "-" if r.delta_rel != r.delta_rel else f"{r.delta_rel:.3e}"
                lines.append(f"  {r.iteration:4d}  {r.n:6d}  {r.control:.6e}  {d:>10}  {r.seconds:8.4f}")
        _emit("\n".join(lines) + "\n", args.out)
    if trace is not None and trace.status is Status.MAX_ITERS:
        return EXIT_MAX_ITERS
    return EXIT_OK


def _finite(record):
    # NaN is not valid JSON; the first iteration has no delta
    return {k: (None if isinstance(v, float) and v != v else v) for k, v in record.items()}


def cmd_sweep(args):
    cs = _load(args.geometry)
    over = _overrides(args.set, cs)
    if over:
        from dataclasses import replace

        cs = replace(cs, parameters={**cs.parameters, **over})
    if args.param not in cs.parameters:
        raise GeometryError(f"unknown sweep parameter {args.param!r}")
    try:
        percents = parse_range(args.range, args.skip_zero)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    cfg = _adaptive_config(args, cs, {})
    spec = SweepSpec(args.param, tuple(percents), cfg, args.reference_l, args.initial_l)
    report = run_sweep(cs, spec, serial=args.serial)
    config = {
        "param": args.param,
        "percents": percents,
        "reference_l_expr": args.reference_l,
        "method": str(cfg.method),
        "tol": cfg.tol,
        "max_iters": cfg.max_iters,
        "initial_l_m": cfg.initial_l_max,
        "initial_l_expr": args.initial_l,
        "control": str(cfg.control),
        "workers": worker_count(args.serial, len(percents)),
    }
    manifest = _manifest(args, dict(cs.parameters), config)
    csv_text = _comment(manifest) + report.to_csv()
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
        sys.stdout.write(report.to_text())
    else:
        sys.stdout.write(csv_text + "\n" + report.to_text())
    if any(r.status.startswith("error") for r in report.rows):
        return EXIT_ERROR
    return EXIT_OK if report.all_ok else EXIT_MAX_ITERS


def cmd_mesh(args):
    cs = _load(args.geometry)
    over = _overrides(args.set, cs)
    rg = resolve_geometry(cs, over)
    mesh = build_initial_mesh(rg, length_in_meters(args.l, cs, {**cs.parameters, **over}))
    for _ in range(args.refine_iters):
        mesh = refine_all(mesh)
    _emit(mesh.to_csv(), args.out)
    return EXIT_OK


def cmd_verify(args):
    checks = run_verification(args.samples, args.seed)
    sys.stdout.write(format_checks(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_ERROR


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "mesh": cmd_mesh, "verify": cmd_verify}


def main(argv=None):
    argv = _fix_negative_values(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"qcap {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GeometryError as exc:
        print(f"qcap {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATAERR
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        logger.debug("unhandled error", exc_info=True)
        print(f"qcap {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
