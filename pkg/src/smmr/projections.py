"""Lift/restrict operator pairs between full and surrogate state spaces.

Every pair satisfies ``restrict(lift(z)) == z``.  Mesh operators are applied
matrix-free; the dense variant stores its basis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ProjectionKind",
    "ProjectionPair",
    "identity_projection",
    "nested_mesh_projection_1d",
    "nested_mesh_projection_2d",
    "dense_basis_projection",
    "coarse_size",
]

ORTHONORMALITY_TOL = 1e-10


class ProjectionKind(enum.Enum):
    IDENTITY = "identity"
    NESTED_MESH_1D = "mesh1d"
    NESTED_MESH_2D = "mesh2d"
    DENSE_BASIS = "dense"


@dataclass(frozen=True, eq=False)
class ProjectionPair:
    dim_full: int
    dim_surrogate: int
    kind: ProjectionKind
    # fine grid size and field count for the mesh kinds, basis matrix for dense
    fine_p: int = 0
    fields: int = 1
    basis: np.ndarray | None = None

    def lift(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim_surrogate,):
            raise ValueError(f"lift expects a vector of length {self.dim_surrogate}, got shape {z.shape}")
        kind = self.kind
        if kind is ProjectionKind.IDENTITY:
            return z.copy()
        if kind is ProjectionKind.NESTED_MESH_1D:
            return _prolong_1d(z)
        if kind is ProjectionKind.NESTED_MESH_2D:
            pc = coarse_size(self.fine_p)
            blocks = z.reshape(self.fields, pc, pc)
            return np.concatenate([_prolong_2d(blk).ravel() for blk in blocks])
        return self.basis @ z

    def restrict(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim_full,):
            raise ValueError(f"restrict expects a vector of length {self.dim_full}, got shape {y.shape}")
        kind = self.kind
        if kind is ProjectionKind.IDENTITY:
            return y.copy()
        if kind is ProjectionKind.NESTED_MESH_1D:
            return y[::2].copy()
        if kind is ProjectionKind.NESTED_MESH_2D:
            p = self.fine_p
            return y.reshape(self.fields, p, p)[:, ::2, ::2].ravel()
        return self.basis.T @ y


def coarse_size(fine_p: int) -> int:
    """Coarse grid size nesting in ``fine_p`` points (``fine_p == 2*pc - 1``)."""
    if fine_p < 3 or fine_p % 2 == 0:
        raise ValueError(f"grid size {fine_p} does not nest a coarse grid (need odd size >= 3)")
    return (fine_p + 1) // 2


def _prolong_1d(zc: np.ndarray) -> np.ndarray:
    out = np.empty(2 * zc.shape[0] - 1)
    out[::2] = zc
    out[1::2] = 0.5 * (zc[:-1] + zc[1:])
    return out


def _prolong_2d(zc: np.ndarray) -> np.ndarray:
    pc = zc.shape[0]
    out = np.empty((2 * pc - 1, 2 * pc - 1))
    out[::2, ::2] = zc
    out[1::2, ::2] = 0.5 * (zc[:-1, :] + zc[1:, :])
    out[:, 1::2] = 0.5 * (out[:, :-1:2] + out[:, 2::2])
    return out


def identity_projection(n: int) -> ProjectionPair:
    if n < 1:
        raise ValueError("dimension must be positive")
    return ProjectionPair(n, n, ProjectionKind.IDENTITY)


def nested_mesh_projection_1d(fine_count: int) -> ProjectionPair:
    """Injection restriction and linear-interpolation prolongation on a 1D grid."""
    pc = coarse_size(fine_count)
    return ProjectionPair(fine_count, pc, ProjectionKind.NESTED_MESH_1D, fine_p=fine_count)


def nested_mesh_projection_2d(fine_p: int, fields: int = 1) -> ProjectionPair:
    """Tensor-product mesh operators on ``fields`` stacked ``fine_p x fine_p`` blocks."""
    if fields < 1:
        raise ValueError("need at least one field")
    pc = coarse_size(fine_p)
    return ProjectionPair(
        fields * fine_p**2, fields * pc**2, ProjectionKind.NESTED_MESH_2D, fine_p=fine_p, fields=fields
    )


def dense_basis_projection(basis_file: str | Path | np.ndarray) -> ProjectionPair:
    """Projection onto the span of orthonormal columns ``V`` (so ``W = V``).

    ``basis_file`` is a path to a text file whose first line is ``N S`` followed
    by ``N`` rows of ``S`` numbers; row ``i`` holds component ``i`` of each basis
    vector.  An ``N x S`` array is accepted directly as well.  Orthonormality is
    Euclidean.
    """
    if isinstance(basis_file, np.ndarray):
        V = np.array(basis_file, dtype=float)
        source = "array"
    else:
        V = _read_basis(Path(basis_file))
        source = str(basis_file)
    if V.ndim != 2 or V.shape[1] > V.shape[0] or V.shape[1] < 1:
        raise ValueError(f"{source}: basis must be N x S with 1 <= S <= N, got {V.shape}")
    err = np.max(np.abs(V.T @ V - np.eye(V.shape[1])))
    if not err <= ORTHONORMALITY_TOL:
        raise ValueError(f"{source}: basis columns are not orthonormal (max |V^T V - I| = {err:.3e})")
    V.setflags(write=False)
    return ProjectionPair(V.shape[0], V.shape[1], ProjectionKind.DENSE_BASIS, basis=V)


def _read_basis(path: Path) -> np.ndarray:
    try:
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
        n, s = (int(tok) for tok in lines[0].split())
        rows = [[float(tok) for tok in ln.split()] for ln in lines[1:]]
    except (OSError, ValueError, IndexError) as exc:
        raise ValueError(f"malformed basis file {path}: {exc}") from exc
    if len(rows) != n or any(len(r) != s for r in rows):
        raise ValueError(f"malformed basis file {path}: expected {n} rows of {s} values")
    return np.array(rows, dtype=float).reshape(n, s)
