"""Convergence and work-precision sweeps.

A sweep runs every (method, step count) pair against a full-model reference
solution, records the relative l2 error at the final time together with the
evaluation counts and wall time, and fits a convergence slope per method.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import TABLEAUS, CouplingScheme, builtin_schemes
from .integrators import InnerSolverConfig, IntegrationError, RungeKutta, integrate, surrogate_stepper
from .problems import Problem, make_problem

log = logging.getLogger(__name__)

__all__ = [
    "SweepConfig",
    "Run",
    "SweepReport",
    "step_counts",
    "make_stepper",
    "reference_solve",
    "relative_error",
    "fit_slope",
    "convergence_study",
    "work_precision",
    "emit_csv",
    "read_csv",
    "CSV_HEADER",
]

CSV_HEADER = ("method", "H", "error", "full_evals", "surrogate_evals", "wall_s")
DEFAULT_METHODS = ("euler", "mri-ralston2", "spc-ralston2", "mri-ralston3", "spc-ralston3", "rk-full")
REFERENCE_TABLEAU = TABLEAUS["ralston3"]


@dataclass
class SweepConfig:
    problem: str = "linear"
    methods: tuple = DEFAULT_METHODS
    # geometric sequence of macro step counts: n0 * ratio**k, k < count
    steps: tuple = (16, 2.0, 6)
    inner_order: int | None = None
    micro_steps: int = 1
    projection: str | None = None
    fine_p: int | None = None
    coarse_p: int | None = None
    surrogate_forcing: float | None = None
    surrogate_advection: float | None = None
    t0: float = 0.0
    t_end: float | None = None
    ref_factor: int = 64
    check_reference: bool = False
    warmup: bool = True
    jobs: int = 1
    out: str | None = None
    extra_schemes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.steps = tuple(self.steps)
        counts = step_counts(self.steps)
        if len(counts) < 4:
            raise ValueError("need at least 4 step counts for slope fitting")
        if self.micro_steps < 1 or self.ref_factor < 1 or self.jobs < 1:
            raise ValueError("micro_steps, ref_factor and jobs must be positive")
        for m in self.methods:
            make_stepper(m, self)

    def problem_kwargs(self) -> dict:
        kw = dict(fine_p=self.fine_p, coarse_p=self.coarse_p, surrogate_forcing=self.surrogate_forcing,
                  surrogate_advection=self.surrogate_advection, t0=self.t0, t_end=self.t_end,
                  projection=self.projection)
        return {k: v for k, v in kw.items() if v is not None}

    def build_problem(self) -> Problem:
        return make_problem(self.problem, **self.problem_kwargs())


def step_counts(steps) -> list[int]:
    """``(n0, ratio, count)`` to a strictly increasing list of step counts."""
    n0, ratio, count = steps
    counts = [int(round(n0 * ratio**k)) for k in range(int(count))]
    if counts[0] < 1 or any(b <= a for a, b in zip(counts, counts[1:])):
        raise ValueError(f"step counts {counts} are not strictly increasing positive integers")
    return counts


def _schemes(config: SweepConfig) -> dict[str, CouplingScheme]:
    schemes = builtin_schemes()
    schemes.update(config.extra_schemes)
    return schemes


def make_stepper(method: str, config: SweepConfig):
    """Stepper for a harness method name.

    ``rk-full`` / ``rk-surrogate`` take an optional ``:tableau`` suffix
    (``euler``, ``ralston2``, ``ralston3``, ``rk4``, ``butcher5``); the default is ``euler``.
    """
    base, _, suffix = method.partition(":")
    if base in ("rk-full", "rk-surrogate"):
        name = suffix or "euler"
        if name not in TABLEAUS:
            raise ValueError(f"unknown tableau {name!r} in method {method!r}")
        return RungeKutta(TABLEAUS[name], surrogate=base == "rk-surrogate")
    schemes = _schemes(config)
    if method not in schemes:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(schemes)} or rk-full/rk-surrogate")
    scheme = schemes[method]
    inner = InnerSolverConfig.for_scheme(scheme, config.inner_order, config.micro_steps)
    return surrogate_stepper(scheme, inner)


def relative_error(y: np.ndarray, ref: np.ndarray) -> float:
    return float(np.linalg.norm(y - ref) / np.linalg.norm(ref))


def reference_solve(problem: Problem, t0: float | None = None, t_end: float | None = None,
                    n_steps: int = 1) -> np.ndarray:
    """Full-model solution at ``t_end`` with ``n_steps`` steps of Ralston's third order method."""
    t0 = problem.t0 if t0 is None else t0
    t_end = problem.t_end if t_end is None else t_end
    if t_end == t0:
        return np.array(problem.y0, dtype=float)
    traj = integrate(RungeKutta(REFERENCE_TABLEAU), problem.models(), t0, t_end, problem.y0, n_steps)
    return traj.y


@dataclass
class Run:
    method: str
    n_steps: int
    H: float
    error: float
    full_evals: int
    surrogate_evals: int
    wall_s: float
    expected_full: int = 0
    expected_surrogate: int = 0

    @property
    def counts_match(self) -> bool:
        return (self.full_evals, self.surrogate_evals) == (self.expected_full, self.expected_surrogate)


@dataclass
class SweepReport:
    config: SweepConfig
    rows: list[Run] = field(default_factory=list)
    failures: list[tuple[str, int, str]] = field(default_factory=list)
    slopes: dict[str, float] = field(default_factory=dict)
    reference_change: float | None = None
    reference_ok: bool | None = None

    def rows_for(self, method: str) -> list[Run]:
        return [r for r in self.rows if r.method == method]

    def counter_audit(self) -> list[Run]:
        """Rows whose evaluation counts differ from the closed-form prediction."""
        return [r for r in self.rows if not r.counts_match]


def fit_slope(H, errors, improvement: float = 0.1) -> tuple[float, int]:
    """Least-squares slope of ``log(error)`` against ``log(H)``.

    Points are ordered from largest to smallest ``H``.  Trailing points that
    improve by less than ``improvement`` per halving of ``H`` are treated as an
    error floor and dropped.  Returns ``(slope, points_used)``; the slope is NaN
    when fewer than two points remain.
    """
    H = np.asarray(H, dtype=float)
    e = np.asarray(errors, dtype=float)
    order = np.argsort(-H)
    H, e = H[order], e[order]
    keep = np.isfinite(e) & (e > 0)
    H, e = H[keep], e[keep]
    n = len(e)
    while n >= 2:
        halvings = math.log2(H[n - 2] / H[n - 1])
        if e[n - 1] < (1.0 - improvement) ** halvings * e[n - 2]:
            break
        n -= 1
    if n < 2:
        return float("nan"), n
    slope = np.polyfit(np.log(H[:n]), np.log(e[:n]), 1)[0]
    return float(slope), n


_WORKER_PROBLEMS: dict = {}


def _run_one(config: SweepConfig, method: str, n_steps: int, ref: np.ndarray, problem: Problem | None = None):
    if problem is None:
        # worker process: build once per process
        key = (config.problem, tuple(sorted(config.problem_kwargs().items())))
        if key not in _WORKER_PROBLEMS:
            _WORKER_PROBLEMS[key] = config.build_problem()
        problem = _WORKER_PROBLEMS[key]
    stepper = make_stepper(method, config)
    traj = integrate(stepper, problem.models(), problem.t0, problem.t_end, problem.y0, n_steps)
    full, surr = stepper.expected_evals(n_steps)
    H = (problem.t_end - problem.t0) / n_steps
    return Run(method, n_steps, H, relative_error(traj.y, ref), traj.full_evals, traj.surrogate_evals,
               traj.wall_seconds, full, surr)


def convergence_study(config: SweepConfig, reference: np.ndarray | None = None) -> SweepReport:
    """Run the sweep and fit slopes.

    Individual run failures are recorded in ``report.failures`` rather than
    raised.
    """
    problem = config.build_problem()
    counts = step_counts(config.steps)
    report = SweepReport(config)
    if reference is None:
        n_ref = config.ref_factor * counts[-1]
        reference = reference_solve(problem, n_steps=n_ref)
        if config.check_reference:
            finer = reference_solve(problem, n_steps=2 * n_ref)
            report.reference_change = relative_error(reference, finer)
            reference = finer

    if config.warmup:
        for method in config.methods:
            try:
                _run_one(config, method, counts[0], reference, problem)
            except IntegrationError:
                pass

    tasks = [(m, n) for m in config.methods for n in counts]
    results: list = []
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = [pool.submit(_run_one, config, m, n, reference) for m, n in tasks]
            for (m, n), fut in zip(tasks, futures):
                try:
                    results.append(fut.result())
                except IntegrationError as exc:
                    results.append((m, n, str(exc)))
    else:
        for m, n in tasks:
            try:
                results.append(_run_one(config, m, n, reference, problem))
            except IntegrationError as exc:
                results.append((m, n, str(exc)))

    for res in results:
        if isinstance(res, Run):
            report.rows.append(res)
        else:
            log.warning("run %s with %d steps failed: %s", *res)
            report.failures.append(res)

    for method in config.methods:
        rows = report.rows_for(method)
        report.slopes[method] = fit_slope([r.H for r in rows], [r.error for r in rows])[0] if rows else float("nan")

    if report.reference_change is not None:
        finest = min((r.error for r in report.rows if r.error > 0), default=float("inf"))
        report.reference_ok = report.reference_change < 0.1 * finest
        if not report.reference_ok:
            log.warning("reference changed by %.3e on refinement; finest sweep error %.3e",
                        report.reference_change, finest)
    return report


def work_precision(config: SweepConfig, reference: np.ndarray | None = None) -> SweepReport:
    """Convergence sweep whose CSV is written to ``config.out`` when set."""
    report = convergence_study(config, reference)
    if config.out:
        emit_csv(report, config.out)
    return report


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def emit_csv(report: SweepReport, path: str | Path) -> Path:
    """Write one row per run: methods in configured order, then descending ``H``."""
    path = Path(path)
    rank = {m: i for i, m in enumerate(report.config.methods)}
    rows = sorted(report.rows, key=lambda r: (rank.get(r.method, len(rank)), -r.H))
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for r in rows:
                writer.writerow([r.method, _fmt(r.H), _fmt(r.error), r.full_evals, r.surrogate_evals,
                                 _fmt(r.wall_s)])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def config_dict(config: SweepConfig) -> dict:
    d = asdict(config)
    d.pop("extra_schemes")
    return d
