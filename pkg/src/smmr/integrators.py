"""Fixed-step time steppers for a full model paired with a surrogate.

The surrogate-model MRI-GARK step advances one forced surrogate ODE per slow
stage; the step predictor-corrector variant computes all full-model stages
first and then advances a single forced surrogate ODE over the macro step.
Both keep a cached restriction ``y_hat`` of the full state and update it
through the same bookkeeping as the full state, so ``W^* y`` is never
recomputed inside the loop.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coefficients import CouplingScheme, RkTableau, SchemeKind, TABLEAUS, inner_tableau
from .projections import ProjectionPair

__all__ = [
    "IntegrationError",
    "ModelPair",
    "InnerSolverConfig",
    "StepState",
    "rk_step",
    "inner_solve",
    "sm_mri_gark_step",
    "sm_spc_mri_gark_step",
    "RungeKutta",
    "SurrogateMri",
    "SurrogateSpc",
    "Trajectory",
    "integrate",
    "initial_state",
]

Rhs = Callable[[float, np.ndarray], np.ndarray]


class IntegrationError(RuntimeError):
    """A non-finite value appeared during a step."""

    def __init__(self, message: str, t: float | None = None, stage: int | None = None,
                 micro_step: int | None = None, step: int | None = None):
        super().__init__(message)
        self.t = t
        self.stage = stage
        self.micro_step = micro_step
        self.step = step


@dataclass(eq=False)
class ModelPair:
    """Full and surrogate right-hand sides with the projection joining them.

    Call :meth:`f` and :meth:`fs` rather than the raw callables; they check
    dimensions and count evaluations.
    """

    full_rhs: Rhs
    surrogate_rhs: Rhs
    projection: ProjectionPair
    full_evals: int = 0
    surrogate_evals: int = 0

    def f(self, t: float, y: np.ndarray) -> np.ndarray:
        if y.shape != (self.projection.dim_full,):
            raise ValueError(f"full state has shape {y.shape}, expected ({self.projection.dim_full},)")
        self.full_evals += 1
        out = np.asarray(self.full_rhs(t, y), dtype=float)
        if out.shape != y.shape:
            raise ValueError(f"full rhs returned shape {out.shape}, expected {y.shape}")
        return out

    def fs(self, t: float, z: np.ndarray) -> np.ndarray:
        if z.shape != (self.projection.dim_surrogate,):
            raise ValueError(f"surrogate state has shape {z.shape}, expected ({self.projection.dim_surrogate},)")
        self.surrogate_evals += 1
        out = np.asarray(self.surrogate_rhs(t, z), dtype=float)
        if out.shape != z.shape:
            raise ValueError(f"surrogate rhs returned shape {out.shape}, expected {z.shape}")
        return out

    def reset_counters(self):
        self.full_evals = 0
        self.surrogate_evals = 0


@dataclass(frozen=True)
class InnerSolverConfig:
    method: RkTableau
    micro_steps: int = 1

    def __post_init__(self):
        if self.micro_steps < 1:
            raise ValueError("micro_steps must be positive")

    @classmethod
    def for_scheme(cls, scheme: CouplingScheme, order: int | None = None, micro_steps: int = 1):
        """Inner solver one order above ``scheme`` unless ``order`` is given."""
        order = scheme.order + 1 if order is None else order
        if order < scheme.order:
            raise ValueError(f"inner order {order} below scheme order {scheme.order}")
        return cls(inner_tableau(order), micro_steps)


@dataclass(frozen=True)
class StepState:
    t: float
    y: np.ndarray
    y_hat: np.ndarray


def initial_state(models: ModelPair, t0: float, y0) -> StepState:
    y0 = np.array(y0, dtype=float)
    return StepState(t0, y0, models.projection.restrict(y0))


def _check_finite(v: np.ndarray, what: str, t: float, **where):
    if not np.all(np.isfinite(v)):
        loc = ", ".join(f"{k}={v}" for k, v in where.items())
        raise IntegrationError(f"non-finite {what} at t={t:.6g} ({loc})", t=t, **where)


def _combine(weights: np.ndarray, vectors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.zeros_like(vectors[0])
    for w, v in zip(weights, vectors):
        if w != 0.0:
            out += w * v
    return out


def rk_step(tableau: RkTableau, rhs: Rhs, t: float, y: np.ndarray, h: float) -> np.ndarray:
    """One explicit Runge-Kutta step; exactly ``s`` calls to ``rhs``."""
    if not h > 0:
        raise ValueError("step size must be positive")
    A, b, c = tableau.A, tableau.b, tableau.c
    ks: list[np.ndarray] = []
    for i in range(tableau.stages):
        Y = y + h * _combine(A[i, :i], ks) if i else y
        k = np.asarray(rhs(t + c[i] * h, Y), dtype=float)
        _check_finite(k, "stage derivative", t, stage=i)
        ks.append(k)
    return y + h * _combine(b, ks)


def _forcing_poly(coeffs: np.ndarray, ells: Sequence[np.ndarray]) -> np.ndarray:
    """Per-degree forcing vectors ``sum_j coeffs[k, j] * ell_j``, shape (degree+1, S)."""
    return np.stack([_combine(ck, ells) for ck in coeffs])


def inner_solve(config: InnerSolverConfig, surrogate_rhs: Rhs, forcings, scale: float, t_offset: float,
                H: float, z0: np.ndarray, fs0: np.ndarray | None = None) -> np.ndarray:
    """Solve ``z' = scale*f_s(t_offset + scale*theta, z) + sum_j gamma_j(theta/H) ell_j`` on ``[0, H]``.

    Parameters
    ----------
    forcings : sequence of (coefficients, ell) pairs, or an array
        Each ``coefficients`` holds the polynomial ``gamma_j`` in ascending
        powers.  A 2-D array is taken as already-combined per-degree forcing
        vectors.
    fs0 : array, optional
        ``surrogate_rhs(t_offset, z0)`` if the caller has it; saves one call.
    """
    if not H > 0:
        raise ValueError("macro step must be positive")
    z = np.array(z0, dtype=float)
    if isinstance(forcings, np.ndarray):
        G = forcings
    elif len(forcings):
        deg = max(len(np.atleast_1d(g)) for g, _ in forcings)
        coeffs = np.zeros((deg, len(forcings)))
        for j, (g, _) in enumerate(forcings):
            g = np.atleast_1d(np.asarray(g, dtype=float))
            coeffs[: len(g), j] = g
        G = _forcing_poly(coeffs, [np.asarray(ell, dtype=float) for _, ell in forcings])
    else:
        G = np.zeros((1,) + z.shape)
    if not np.all(np.isfinite(G)):
        raise IntegrationError("non-finite forcing term", t=t_offset)

    def forcing(tau: float) -> np.ndarray:
        out = G[-1].copy()
        for gk in G[-2::-1]:
            out *= tau
            out += gk
        return out

    tab = config.method
    A, b, c = tab.A, tab.b, tab.c
    m = config.micro_steps
    h = H / m
    for n in range(m):
        theta = n * h
        ks: list[np.ndarray] = []
        for i in range(tab.stages):
            th = theta + c[i] * h
            Z = z + h * _combine(A[i, :i], ks) if i else z
            if n == 0 and i == 0 and fs0 is not None:
                fz = fs0
            else:
                fz = surrogate_rhs(t_offset + scale * th, Z)
            ks.append(scale * fz + forcing(th / H))
        z = z + h * _combine(b, ks)
        _check_finite(z, "surrogate state", t_offset + scale * (theta + h), micro_step=n)
    return z


def _coherence(models: ModelPair, y: np.ndarray, y_hat: np.ndarray, t: float):
    ref = models.projection.restrict(y)
    scale = max(1.0, float(np.max(np.abs(ref)))) if ref.size else 1.0
    drift = float(np.max(np.abs(ref - y_hat))) if ref.size else 0.0
    if drift > 1e-12 * scale:
        raise AssertionError(f"cached restriction drifted by {drift:.3e} at t={t:.6g}")


def sm_mri_gark_step(scheme: CouplingScheme, inner: InnerSolverConfig, models: ModelPair, state: StepState,
                     H: float, check_cache: bool = False) -> StepState:
    """One surrogate-model MRI-GARK macro step.

    Costs ``s`` full evaluations, ``s * m * s_inner`` surrogate evaluations
    (the surrogate value used in each slow tendency doubles as the first inner
    stage) and ``s`` lifts.
    """
    if scheme.kind is not SchemeKind.DECOUPLED_MRI:
        raise ValueError(f"scheme {scheme.name!r} is not a decoupled MRI scheme")
    if not H > 0:
        raise ValueError("macro step must be positive")
    P = models.projection
    gcoef = scheme.coupling.coeffs
    gbar = scheme.coupling.bar()
    c, dc = scheme.tableau.c, scheme.delta_c
    t = state.t
    y, y_hat = state.y, state.y_hat
    ks, khs, ls = [], [], []
    for i in range(scheme.stages):
        T = t + c[i] * H
        k = models.f(T, y)
        _check_finite(k, "full derivative", T, stage=i)
        kh = P.restrict(k)
        fs0 = models.fs(T, y_hat)
        ks.append(k)
        khs.append(kh)
        ls.append(kh - fs0)
        w = y_hat + H * _combine(gbar[i, : i + 1], khs)
        y = y + H * _combine(gbar[i, : i + 1], ks)
        forcing = _forcing_poly(gcoef[:, i, : i + 1], ls)
        y_hat_new = inner_solve(inner, models.fs, forcing, dc[i], T, H, y_hat, fs0=fs0)
        y = y + P.lift(y_hat_new - w)
        y_hat = y_hat_new
        _check_finite(y, "full state", T, stage=i)
    if check_cache:
        _coherence(models, y, y_hat, t + H)
    return StepState(t + H, y, y_hat)


def sm_spc_mri_gark_step(scheme: CouplingScheme, inner: InnerSolverConfig, models: ModelPair,
                         state: StepState, H: float, check_cache: bool = False) -> StepState:
    """One surrogate-model SPC-MRI-GARK macro step.

    Costs ``s`` full evaluations, ``m * s_inner + s`` surrogate evaluations and
    a single lift.
    """
    if scheme.kind is not SchemeKind.STEP_PREDICTOR_CORRECTOR:
        raise ValueError(f"scheme {scheme.name!r} is not a step predictor-corrector scheme")
    if not H > 0:
        raise ValueError("macro step must be positive")
    P = models.projection
    A, b, c = scheme.tableau.A, scheme.tableau.b, scheme.tableau.c
    t = state.t
    y, y_hat = state.y, state.y_hat
    ks, khs, ls = [], [], []
    for i in range(scheme.stages):
        T = t + c[i] * H
        if i:
            Y = y + H * _combine(A[i, :i], ks)
            Yh = y_hat + H * _combine(A[i, :i], khs)
        else:
            Y, Yh = y, y_hat
        k = models.f(T, Y)
        _check_finite(k, "full derivative", T, stage=i)
        kh = P.restrict(k)
        ks.append(k)
        khs.append(kh)
        ls.append(kh - models.fs(T, Yh))
    w = y_hat + H * _combine(b, khs)
    y = y + H * _combine(b, ks)
    forcing = _forcing_poly(scheme.coupling.coeffs, ls)
    y_hat_new = inner_solve(inner, models.fs, forcing, 1.0, t, H, y_hat)
    y = y + P.lift(y_hat_new - w)
    _check_finite(y, "full state", t + H)
    if check_cache:
        _coherence(models, y, y_hat_new, t + H)
    return StepState(t + H, y, y_hat_new)


@dataclass(frozen=True)
class RungeKutta:
    """Plain explicit RK on the full model, or on the surrogate alone.

    With ``surrogate=True`` the surrogate state is advanced and the full
    state is its lift.
    """

    tableau: RkTableau = TABLEAUS["euler"]
    surrogate: bool = False

    @property
    def order(self) -> int:
        return self.tableau.order

    def step(self, models: ModelPair, state: StepState, H: float, check_cache: bool = False) -> StepState:
        if self.surrogate:
            z = rk_step(self.tableau, models.fs, state.t, state.y_hat, H)
            return StepState(state.t + H, models.projection.lift(z), z)
        y = rk_step(self.tableau, models.f, state.t, state.y, H)
        return StepState(state.t + H, y, models.projection.restrict(y))

    def expected_evals(self, n_steps: int) -> tuple[int, int]:
        s = self.tableau.stages * n_steps
        return (0, s) if self.surrogate else (s, 0)


@dataclass(frozen=True)
class SurrogateMri:
    scheme: CouplingScheme
    inner: InnerSolverConfig

    @property
    def order(self) -> int:
        return self.scheme.order

    def step(self, models, state, H, check_cache=False):
        return sm_mri_gark_step(self.scheme, self.inner, models, state, H, check_cache)

    def expected_evals(self, n_steps: int) -> tuple[int, int]:
        s = self.scheme.stages
        return s * n_steps, s * self.inner.micro_steps * self.inner.method.stages * n_steps


@dataclass(frozen=True)
class SurrogateSpc:
    scheme: CouplingScheme
    inner: InnerSolverConfig

    @property
    def order(self) -> int:
        return self.scheme.order

    def step(self, models, state, H, check_cache=False):
        return sm_spc_mri_gark_step(self.scheme, self.inner, models, state, H, check_cache)

    def expected_evals(self, n_steps: int) -> tuple[int, int]:
        s = self.scheme.stages
        return s * n_steps, (self.inner.micro_steps * self.inner.method.stages + s) * n_steps


def surrogate_stepper(scheme: CouplingScheme, inner: InnerSolverConfig):
    if scheme.kind is SchemeKind.DECOUPLED_MRI:
        return SurrogateMri(scheme, inner)
    return SurrogateSpc(scheme, inner)


@dataclass
class Trajectory:
    y: np.ndarray
    t: float
    full_evals: int
    surrogate_evals: int
    wall_seconds: float
    dense: list[tuple[float, np.ndarray]] = field(default_factory=list)


def integrate(stepper, models: ModelPair, t0: float, t_end: float, y0, n_steps: int,
              dense_stride: int | None = None, check_cache: bool = False) -> Trajectory:
    """Take ``n_steps`` equal macro steps from ``t0`` to ``t_end``.

    Evaluation counts in the result cover this call only.  With
    ``dense_stride=k`` the state is recorded every ``k`` steps (and at ``t0``).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    H = (t_end - t0) / n_steps
    full0, surr0 = models.full_evals, models.surrogate_evals
    state = initial_state(models, t0, y0)
    dense = [(t0, state.y.copy())] if dense_stride else []
    start = time.perf_counter()
    for n in range(n_steps):
        try:
            state = stepper.step(models, state, H, check_cache)
        except IntegrationError as exc:
            exc.step = n
            raise
        # stage times are measured from t0 + n*H, not an accumulated sum
        state = StepState(t0 + (n + 1) * H, state.y, state.y_hat)
        if dense_stride and (n + 1) % dense_stride == 0:
            dense.append((state.t, state.y.copy()))
    wall = time.perf_counter() - start
    return Trajectory(state.y, state.t, models.full_evals - full0, models.surrogate_evals - surr0, wall, dense)
