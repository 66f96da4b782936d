"""``smmr`` command line.

Exit codes: 0 on success, 1 when any run fails (or a scheme fails
validation), 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .coefficients import builtin_schemes, load_scheme_file, validate_scheme
from .harness import (
    DEFAULT_METHODS,
    SweepConfig,
    convergence_study,
    emit_csv,
    reference_solve,
    step_counts,
)

log = logging.getLogger("smmr")

PROBLEMS = ("linear", "lorenz96", "brusselator", "advection")


class ConfigError(Exception):
    pass


def _steps(text: str) -> tuple:
    try:
        n0, ratio, count = text.split(",")
        steps = (int(n0), float(ratio), int(count))
        step_counts(steps)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--steps expects n0,ratio,count: {exc}") from None
    return steps


def _methods(text: str) -> tuple:
    return tuple(m.strip() for m in text.split(",") if m.strip())


def _add_problem_args(p: argparse.ArgumentParser):
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--fine-p", type=int, help="fine grid points per side (PDE problems)")
    p.add_argument("--coarse-p", type=int, help="coarse grid points per side; must satisfy fine = 2*coarse - 1")
    p.add_argument("--surrogate-forcing", type=float, help="Lorenz '96 surrogate forcing (default 7.5)")
    p.add_argument("--surrogate-advection", type=float,
                   help="Lorenz '96 surrogate multiplier on the quadratic term (default 0.9)")
    p.add_argument("--t0", type=float)
    p.add_argument("--tend", type=float)
    p.add_argument("--projection", help="identity | mesh1d | mesh2d | file:<path>")
    p.add_argument("--steps", type=_steps, help="geometric step counts n0,ratio,count")
    p.add_argument("--config", help="JSON file of option defaults (keys as the long flags, '-' or '_')")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smmr", description="Surrogate-model multirate time integration sweeps.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="convergence / work-precision sweep to CSV")
    _add_problem_args(run)
    run.add_argument("--methods", type=_methods, help=f"comma list (default {','.join(DEFAULT_METHODS)})")
    run.add_argument("--inner-order", type=int, help="inner RK order (default scheme order + 1)")
    run.add_argument("--micro-steps", type=int, help="inner micro-steps per inner solve (default 1)")
    run.add_argument("--scheme-file", action="append", default=None, help="extra JSON coupling scheme")
    run.add_argument("--ref-factor", type=int, help="reference step refinement over the finest sweep step")
    run.add_argument("--check-reference", action="store_true", default=None,
                     help="also solve the reference at half the step and report the change")
    run.add_argument("--no-warmup", dest="warmup", action="store_false", default=None)
    run.add_argument("--jobs", type=int, help="worker processes (1 keeps timings faithful)")
    run.add_argument("--out", help="CSV output path")

    val = sub.add_parser("validate-schemes", help="check the consistency identities of every scheme")
    val.add_argument("--scheme-file", action="append", default=None)

    ref = sub.add_parser("reference", help="write the reference solution at the final time")
    _add_problem_args(ref)
    ref.add_argument("--ref-steps", type=int, help="reference step count (default ref-factor x finest sweep count)")
    ref.add_argument("--ref-factor", type=int)
    ref.add_argument("--out", required=False)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        for key, value in doc.items():
            key = key.replace("-", "_")
            if key == "steps" and isinstance(value, str):
                value = _steps(value)
            elif key == "steps":
                value = tuple(value)
            if key == "methods" and isinstance(value, str):
                value = _methods(value)
            if key == "methods" and isinstance(value, list):
                value = tuple(value)
            if getattr(args, key, None) is None and hasattr(args, key):
                setattr(args, key, value)
            elif not hasattr(args, key):
                raise ConfigError(f"unknown config key {key!r}")
    return args


def _sweep_config(args) -> SweepConfig:
    if not args.problem:
        raise ConfigError("--problem is required")
    extra = {}
    for path in getattr(args, "scheme_file", None) or ():
        scheme = load_scheme_file(path)
        extra[scheme.name] = scheme
    kw = dict(
        problem=args.problem,
        projection=args.projection,
        fine_p=args.fine_p,
        coarse_p=args.coarse_p,
        surrogate_forcing=args.surrogate_forcing,
        surrogate_advection=args.surrogate_advection,
        t_end=args.tend,
        extra_schemes=extra,
    )
    if args.t0 is not None:
        kw["t0"] = args.t0
    if args.steps is not None:
        kw["steps"] = args.steps
    if getattr(args, "ref_factor", None) is not None:
        kw["ref_factor"] = args.ref_factor
    for name in ("methods", "inner_order", "micro_steps", "check_reference", "warmup", "jobs", "out"):
        value = getattr(args, name, None)
        if value is not None:
            kw[name] = value
    if "methods" not in kw and extra:
        kw["methods"] = DEFAULT_METHODS + tuple(extra)
    config = SweepConfig(**kw)
    config.build_problem()
    return config


def cmd_run(args) -> int:
    config = _sweep_config(args)
    report = convergence_study(config)
    if config.out:
        emit_csv(report, config.out)
        print(f"wrote {len(report.rows)} rows to {config.out}")
    print(f"{'method':<20} {'slope':>7}  {'min error':>10}")
    for method in config.methods:
        rows = report.rows_for(method)
        best = min((r.error for r in rows), default=float("nan"))
        print(f"{method:<20} {report.slopes[method]:7.3f}  {best:10.3e}")
    if report.reference_change is not None:
        print(f"reference change on refinement: {report.reference_change:.3e} "
              f"({'ok' if report.reference_ok else 'TOO LARGE'})")
    bad = report.counter_audit()
    for r in bad:
        print(f"counter mismatch: {r.method} n={r.n_steps} got ({r.full_evals}, {r.surrogate_evals}) "
              f"expected ({r.expected_full}, {r.expected_surrogate})", file=sys.stderr)
    for method, n, msg in report.failures:
        print(f"run failed: {method} n={n}: {msg}", file=sys.stderr)
    return 1 if (report.failures or bad) else 0


def cmd_validate(args) -> int:
    schemes = builtin_schemes()
    for path in args.scheme_file or ():
        scheme = load_scheme_file(path)
        schemes[scheme.name] = scheme
    status = 0
    for name, scheme in schemes.items():
        diags = validate_scheme(scheme)
        print(f"{name:<20} {'ok' if not diags else 'FAILED'}")
        for d in diags:
            print(f"    {d}")
        status |= bool(diags)
    return status


def cmd_reference(args) -> int:
    config = _sweep_config(args)
    problem = config.build_problem()
    n = args.ref_steps or config.ref_factor * step_counts(config.steps)[-1]
    y = reference_solve(problem, n_steps=n)
    if args.out:
        np.savetxt(args.out, y, fmt="%.17g", header=f"{args.problem} t={problem.t_end!r} steps={n}")
        print(f"wrote reference ({y.shape[0]} values) to {args.out}")
    else:
        np.savetxt(sys.stdout, y, fmt="%.17g")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = _apply_config_file(parser, argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    except (ConfigError, argparse.ArgumentTypeError) as exc:
        print(f"smmr: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handlers = {"run": cmd_run, "validate-schemes": cmd_validate, "reference": cmd_reference}
    try:
        return handlers[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"smmr: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"smmr: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
