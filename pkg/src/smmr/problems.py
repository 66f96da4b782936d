"""Benchmark full models, their surrogates, and test fixtures."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .coefficients import TABLEAUS
from .integrators import ModelPair, rk_step
from .projections import (
    ProjectionPair,
    coarse_size,
    identity_projection,
    nested_mesh_projection_2d,
)

__all__ = [
    "Lorenz96Spec",
    "BrusselatorSpec",
    "AdvectionSpec",
    "lorenz96_rhs",
    "lorenz96_surrogate_rhs",
    "lorenz96_initial_state",
    "brusselator_rhs",
    "brusselator_initial_state",
    "brusselator_coarse_surrogate",
    "advection_rhs",
    "advection_initial_state",
    "advection_coarse_surrogate",
    "LinearProblem",
    "linear_test_problem",
    "Problem",
    "make_problem",
    "galerkin_surrogate",
]


# Lorenz '96 ---------------------------------------------------------------

@dataclass(frozen=True)
class Lorenz96Spec:
    K: int = 40
    F: float = 8.0
    surrogate_forcing: float = 7.5
    # multiplies the quadratic term in the surrogate; 1.0 leaves only the forcing perturbed
    surrogate_advection: float = 1.0
    spinup_time: float = 2.0
    spinup_steps: int = 2000


def _l96(X: np.ndarray, forcing: float, advection: float) -> np.ndarray:
    quad = (np.roll(X, -1) - np.roll(X, 2)) * np.roll(X, 1)
    if advection != 1.0:
        quad *= advection
    return quad - X + forcing


def lorenz96_rhs(spec: Lorenz96Spec, t: float, X: np.ndarray) -> np.ndarray:
    return _l96(X, spec.F, 1.0)


def lorenz96_surrogate_rhs(spec: Lorenz96Spec, t: float, X: np.ndarray) -> np.ndarray:
    return _l96(X, spec.surrogate_forcing, spec.surrogate_advection)


@functools.lru_cache(maxsize=8)
def _l96_spinup(K: int, F: float, T: float, steps: int) -> np.ndarray:
    X = np.full(K, F)
    X[min(19, K - 1)] = F + 0.008
    h = T / steps

    def rhs(t, x):
        return _l96(x, F, 1.0)

    tab = TABLEAUS["ralston3"]
    for n in range(steps):
        X = rk_step(tab, rhs, n * h, X, h)
    X.setflags(write=False)
    return X


def lorenz96_initial_state(spec: Lorenz96Spec) -> np.ndarray:
    """The perturbed equilibrium (component 20 raised by 0.008) after the spin-up period."""
    return _l96_spinup(spec.K, spec.F, spec.spinup_time, spec.spinup_steps).copy()


# Brusselator ---------------------------------------------------------------

@dataclass(frozen=True)
class BrusselatorSpec:
    P: int = 65
    alpha: float = 0.002
    A: float = 4.4
    B: float = 3.4
    t_end: float = 7.5

    @property
    def dim(self) -> int:
        return 2 * self.P**2


def _grid(P: int):
    x = np.linspace(0.0, 1.0, P)
    return np.meshgrid(x, x, indexing="ij")


def _neumann_laplacian(u: np.ndarray, h: float) -> np.ndarray:
    # mirrored ghosts: u[-1] = u[1], u[P] = u[P-2]
    lap = -4.0 * u
    lap[1:, :] += u[:-1, :]
    lap[:-1, :] += u[1:, :]
    lap[0, :] += u[1, :]
    lap[-1, :] += u[-2, :]
    lap[:, 1:] += u[:, :-1]
    lap[:, :-1] += u[:, 1:]
    lap[:, 0] += u[:, 1]
    lap[:, -1] += u[:, -2]
    return lap / (h * h)


def brusselator_rhs(spec: BrusselatorSpec, t: float, y: np.ndarray) -> np.ndarray:
    """Method-of-lines Brusselator on a vertex-centered grid, ``u`` block then ``v`` block.

    Arrays are indexed ``[ix, iy]``.
    """
    P = spec.P
    u = y[: P * P].reshape(P, P)
    v = y[P * P:].reshape(P, P)
    h = 1.0 / (P - 1)
    uuv = u * u * v
    du = spec.alpha * _neumann_laplacian(u, h) + 1.0 + uuv - spec.A * u
    dv = spec.alpha * _neumann_laplacian(v, h) + spec.B * u - uuv
    return np.concatenate([du.ravel(), dv.ravel()])


def brusselator_initial_state(spec: BrusselatorSpec) -> np.ndarray:
    X, Y = _grid(spec.P)
    return np.concatenate([(0.5 + Y).ravel(), (1.0 + 5.0 * X).ravel()])


def brusselator_coarse_surrogate(spec: BrusselatorSpec, coarse_p: int):
    """Same discretization on the nested coarse grid, and the mesh projection."""
    if coarse_size(spec.P) != coarse_p:
        raise ValueError(f"coarse grid {coarse_p} does not nest in fine grid {spec.P} (need P = 2*Pc - 1)")
    coarse = BrusselatorSpec(coarse_p, spec.alpha, spec.A, spec.B, spec.t_end)
    return functools.partial(brusselator_rhs, coarse), nested_mesh_projection_2d(spec.P, fields=2)


# Advection -----------------------------------------------------------------

@dataclass(frozen=True)
class AdvectionSpec:
    P: int = 101
    t_end: float = 2.0


@functools.lru_cache(maxsize=8)
def _advection_velocity(P: int):
    X, Y = _grid(P)
    ax = 2.0 * np.pi * (Y - 0.5)
    ay = -2.0 * np.pi * (X - 0.5)
    for a in (ax, ay):
        a.setflags(write=False)
    return ax, ay


def advection_rhs(spec: AdvectionSpec, t: float, u: np.ndarray) -> np.ndarray:
    """First-order upwind ``-a . grad u`` with zero Dirichlet boundary nodes."""
    P = spec.P
    h = 1.0 / (P - 1)
    ax, ay = _advection_velocity(P)
    U = u.reshape(P, P)
    out = np.zeros((P, P))
    c = U[1:-1, 1:-1]
    ax_i, ay_i = ax[1:-1, 1:-1], ay[1:-1, 1:-1]
    dx = np.where(ax_i > 0, c - U[:-2, 1:-1], U[2:, 1:-1] - c)
    dy = np.where(ay_i > 0, c - U[1:-1, :-2], U[1:-1, 2:] - c)
    out[1:-1, 1:-1] = -(ax_i * dx + ay_i * dy) / h
    return out.ravel()


def advection_initial_state(spec: AdvectionSpec) -> np.ndarray:
    X, Y = _grid(spec.P)
    u = np.exp(-100.0 * ((X - 0.35) ** 2 + (Y - 0.35) ** 2))
    u[0, :] = u[-1, :] = u[:, 0] = u[:, -1] = 0.0
    return u.ravel()


def advection_coarse_surrogate(spec: AdvectionSpec, coarse_p: int):
    if coarse_size(spec.P) != coarse_p:
        raise ValueError(f"coarse grid {coarse_p} does not nest in fine grid {spec.P} (need P = 2*Pc - 1)")
    return functools.partial(advection_rhs, AdvectionSpec(coarse_p, spec.t_end)), nested_mesh_projection_2d(spec.P)


# Linear fixture --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearProblem:
    """``y' = M y`` with surrogate ``z' = mu z``."""

    M: np.ndarray
    mu: float

    def full_rhs(self, t, y):
        return self.M @ y

    def surrogate_rhs(self, t, z):
        return self.mu * z

    def models(self, projection: ProjectionPair | None = None) -> ModelPair:
        # mu*I commutes with any projection pair, so the same callable serves every S
        proj = projection or identity_projection(self.M.shape[0])
        return ModelPair(self.full_rhs, self.surrogate_rhs, proj)

    def exact(self, t: float, y0) -> np.ndarray:
        return scipy.linalg.expm(t * self.M) @ np.asarray(y0, dtype=float)


def linear_test_problem(M, mu: float) -> LinearProblem:
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or not np.all(np.isfinite(M)):
        raise ValueError("M must be a finite square matrix")
    M.setflags(write=False)
    return LinearProblem(M, float(mu))


ROTATION = ((0.0, 1.0), (-1.0, 0.0))


# Problem bundles for the harness -----------------------------------------------

def galerkin_surrogate(rhs: Callable, projection: ProjectionPair) -> Callable:
    """``z -> W^* g(t, V z)`` for a full-space surrogate ``g``."""

    def fs(t, z):
        return projection.restrict(rhs(t, projection.lift(z)))

    return fs


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything the harness needs to run one benchmark."""

    name: str
    full_rhs: Callable
    surrogate_rhs: Callable
    projection: ProjectionPair
    y0: np.ndarray
    t0: float
    t_end: float
    params: dict = field(default_factory=dict)

    def models(self) -> ModelPair:
        return ModelPair(self.full_rhs, self.surrogate_rhs, self.projection)


def make_problem(name: str, fine_p: int | None = None, coarse_p: int | None = None,
                 surrogate_forcing: float | None = None, surrogate_advection: float | None = None,
                 t0: float = 0.0, t_end: float | None = None, projection: str | None = None,
                 mu: float = 0.5) -> Problem:
    """Build a named benchmark with the harness defaults.

    ``projection`` is ``"identity"``, ``"mesh1d"``, ``"mesh2d"`` or
    ``"file:<path>"``.  The PDE problems only take ``mesh2d``; the ODE problems
    take the others, projecting their full-space surrogate Galerkin-style when
    the surrogate space is smaller.
    """
    from .projections import dense_basis_projection, nested_mesh_projection_1d

    params = {"t0": t0}
    if name in ("brusselator", "advection"):
        if projection not in (None, "mesh2d"):
            raise ValueError(f"problem {name} uses the nested-mesh surrogate; projection must be mesh2d")
        if name == "brusselator":
            spec = BrusselatorSpec(P=fine_p or 65)
            fs, proj = brusselator_coarse_surrogate(spec, coarse_p or coarse_size(spec.P))
            full, y0 = functools.partial(brusselator_rhs, spec), brusselator_initial_state(spec)
            t_end = 0.5 if t_end is None else t_end
        else:
            spec = AdvectionSpec(P=fine_p or 101)
            fs, proj = advection_coarse_surrogate(spec, coarse_p or coarse_size(spec.P))
            full, y0 = functools.partial(advection_rhs, spec), advection_initial_state(spec)
            t_end = spec.t_end if t_end is None else t_end
        params.update(fine_p=spec.P, coarse_p=coarse_size(spec.P))
        return Problem(name, full, fs, proj, y0, t0, t_end, params)

    if name == "lorenz96":
        spec = Lorenz96Spec(
            surrogate_forcing=7.5 if surrogate_forcing is None else surrogate_forcing,
            surrogate_advection=0.9 if surrogate_advection is None else surrogate_advection,
        )
        full = functools.partial(lorenz96_rhs, spec)
        g = functools.partial(lorenz96_surrogate_rhs, spec)
        y0 = lorenz96_initial_state(spec)
        t_end = 0.5 if t_end is None else t_end
        params.update(surrogate_forcing=spec.surrogate_forcing, surrogate_advection=spec.surrogate_advection)
    elif name == "linear":
        lp = linear_test_problem(ROTATION, mu)
        full, g = lp.full_rhs, lp.surrogate_rhs
        y0 = np.array([1.0, 0.0])
        t_end = 1.0 if t_end is None else t_end
        params.update(mu=mu)
    else:
        raise ValueError(f"unknown problem {name!r}")

    n = y0.shape[0]
    if projection in (None, "identity"):
        return Problem(name, full, g, identity_projection(n), y0, t0, t_end, params)
    if projection == "mesh1d":
        proj = nested_mesh_projection_1d(n)
    elif projection.startswith("file:"):
        proj = dense_basis_projection(projection[5:])
        if proj.dim_full != n:
            raise ValueError(f"basis has N={proj.dim_full}, problem {name} has dimension {n}")
    else:
        raise ValueError(f"projection {projection!r} not available for problem {name}")
    return Problem(name, full, galerkin_surrogate(g, proj), proj, y0, t0, t_end, params)
