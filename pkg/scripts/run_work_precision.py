"""Work-precision sweep for a multimesh problem (Brusselator or advection).

Uses the PDE default inner solver (one order above the scheme, one
micro-step), writes the CSV and prints error against full and surrogate
evaluation counts, plus the SM/full Euler error ratio.
"""

import argparse

from smmr.harness import DEFAULT_METHODS, SweepConfig, work_precision


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--problem", choices=("brusselator", "advection"), default="brusselator")
    parser.add_argument("--fine-p", type=int, default=None)
    parser.add_argument("--coarse-p", type=int, default=None)
    parser.add_argument("--tend", type=float, default=None)
    parser.add_argument("--steps", default="32,1.41421356,8", help="n0,ratio,count")
    parser.add_argument("--methods", default=",".join(DEFAULT_METHODS + ("rk-surrogate",)))
    parser.add_argument("--out", default="work_precision.csv")
    args = parser.parse_args()

    n0, ratio, count = args.steps.split(",")
    cfg = SweepConfig(problem=args.problem, methods=tuple(args.methods.split(",")),
                      steps=(int(n0), float(ratio), int(count)), fine_p=args.fine_p, coarse_p=args.coarse_p,
                      t_end=args.tend, out=args.out)
    report = work_precision(cfg)
    print(f"{'method':<22}{'H':>10}{'error':>12}{'f evals':>9}{'fs evals':>10}{'wall s':>9}")
    for r in sorted(report.rows, key=lambda r: (cfg.methods.index(r.method), -r.H)):
        print(f"{r.method:<22}{r.H:10.3e}{r.error:12.3e}{r.full_evals:9d}{r.surrogate_evals:10d}{r.wall_s:9.3f}")
    sm = {r.n_steps: r.error for r in report.rows_for("euler")}
    full = {r.n_steps: r.error for r in report.rows_for("rk-full")}
    ratios = [sm[n] / full[n] for n in sorted(set(sm) & set(full))]
    if ratios:
        print(f"\nSM Euler / full Euler error ratio: min {min(ratios):.3e}, max {max(ratios):.3e}")
    print(f"wrote {cfg.out}")


if __name__ == "__main__":
    main()
