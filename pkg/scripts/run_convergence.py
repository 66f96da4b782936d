"""Desk-scale convergence study on the linear fixture, Lorenz '96 and the Brusselator.

Writes one CSV per problem into --outdir and prints the fitted slopes next to
the nominal orders.
"""

import argparse
import logging
from pathlib import Path

from smmr.coefficients import builtin_schemes
from smmr.harness import SweepConfig, convergence_study, emit_csv

SWEEPS = {
    "linear": dict(steps=(16, 2, 6)),
    "lorenz96": dict(steps=(16, 2, 6), t_end=0.5, surrogate_advection=0.9),
    "brusselator": dict(steps=(32, 2**0.5, 8), fine_p=65, coarse_p=33, t_end=0.5),
}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--problems", default=",".join(SWEEPS))
    parser.add_argument("--micro-steps", type=int, default=4)
    parser.add_argument("--inner-order", type=int, default=None, help="default: scheme order + 1")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--outdir", default="results")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    schemes = builtin_schemes()
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for problem in args.problems.split(","):
        cfg = SweepConfig(problem=problem, methods=tuple(schemes) + ("rk-full",), micro_steps=args.micro_steps,
                          inner_order=args.inner_order, jobs=args.jobs, **SWEEPS[problem])
        report = convergence_study(cfg)
        emit_csv(report, outdir / f"convergence_{problem}.csv")
        print(f"\n{problem}")
        for method, slope in report.slopes.items():
            nominal = schemes[method].order if method in schemes else 1
            print(f"  {method:<14} slope {slope:6.3f}  (order {nominal})")
        if report.failures:
            print(f"  {len(report.failures)} runs failed")


if __name__ == "__main__":
    main()
