"""Runge-Kutta tableaus and multirate coupling polynomials.

Coefficients that are known as rationals are kept as :class:`fractions.Fraction`
alongside the floating point arrays, so the consistency identities of the
shipped schemes can be checked exactly as well as numerically.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np

__all__ = [
    "SchemeKind",
    "RkTableau",
    "PolynomialMatrix",
    "CouplingScheme",
    "Diagnostic",
    "eval_coupling",
    "gamma_bar",
    "validate_scheme",
    "builtin_schemes",
    "euler_scheme",
    "inner_tableau",
    "TABLEAUS",
    "load_scheme_file",
    "SAMPLE_TAUS",
    "TOLERANCE",
]

TOLERANCE = 1e-13
SAMPLE_TAUS = (0.0, 0.25, 0.5, 0.75, 1.0)


class SchemeKind(enum.Enum):
    DECOUPLED_MRI = "mri"
    STEP_PREDICTOR_CORRECTOR = "spc"


def _frac(x: Any) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        # repr gives the shortest round-tripping decimal
        return Fraction(repr(x))
    return Fraction(str(x).strip())


def _frac_array(values: Any) -> np.ndarray:
    arr = np.asarray(values, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(arr.shape):
        out[idx] = _frac(arr[idx])
    return out


def _to_float(values: np.ndarray) -> np.ndarray:
    out = np.array(values.astype(float), dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RkTableau:
    """Explicit Butcher tableau ``(A, b, c)``.

    Construct with :meth:`from_rationals` to keep the exact coefficients.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    name: str = ""
    exact: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float)
        c = np.array(self.c, dtype=float)
        s = b.shape[0]
        if A.shape != (s, s) or c.shape != (s,):
            raise ValueError(f"inconsistent tableau shapes A{A.shape} b{b.shape} c{c.shape}")
        if self.order < 1:
            raise ValueError("order must be a positive integer")
        if np.any(np.triu(A) != 0.0):
            raise ValueError(f"tableau {self.name!r} is not explicit (A must be strictly lower triangular)")
        for name, arr in (("A", A), ("b", b), ("c", c)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_rationals(cls, A, b, c, order: int, name: str = "") -> "RkTableau":
        eA, eb, ec = _frac_array(A), _frac_array(b), _frac_array(c)
        return cls(_to_float(eA), _to_float(eb), _to_float(ec), order, name, exact=(eA, eb, ec))

    @property
    def stages(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True, eq=False)
class PolynomialMatrix:
    """Polynomial in ``t`` with matrix (or vector) coefficients.

    ``coeffs[k]`` multiplies ``t**k``.
    """

    coeffs: np.ndarray
    exact: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.ndim < 2:
            raise ValueError("coefficients need a leading degree axis")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def from_rationals(cls, coeffs) -> "PolynomialMatrix":
        exact = _frac_array(coeffs)
        return cls(_to_float(exact), exact)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def __call__(self, t: float) -> np.ndarray:
        out = np.array(self.coeffs[-1])
        for ck in self.coeffs[-2::-1]:
            out = out * t + ck
        return out

    def antiderivative(self, t: float) -> np.ndarray:
        k = np.arange(1, self.degree + 2, dtype=float)
        scaled = self.coeffs / k.reshape((-1,) + (1,) * (self.coeffs.ndim - 1))
        out = np.array(scaled[-1])
        for ck in scaled[-2::-1]:
            out = out * t + ck
        return out * t

    def bar(self) -> np.ndarray:
        k = np.arange(1, self.degree + 2, dtype=float)
        return np.tensordot(1.0 / k, self.coeffs, axes=1)

    def __add__(self, other: "PolynomialMatrix") -> "PolynomialMatrix":
        n = max(self.coeffs.shape[0], other.coeffs.shape[0])
        out = np.zeros((n,) + self.coeffs.shape[1:])
        out[: self.coeffs.shape[0]] += self.coeffs
        out[: other.coeffs.shape[0]] += other.coeffs
        return PolynomialMatrix(out)


@dataclass(frozen=True, eq=False)
class CouplingScheme:
    tableau: RkTableau
    kind: SchemeKind
    coupling: PolynomialMatrix
    name: str = ""

    def __post_init__(self):
        s = self.tableau.stages
        shape = self.coupling.coeffs.shape[1:]
        if self.kind is SchemeKind.DECOUPLED_MRI:
            if shape != (s, s):
                raise ValueError(f"MRI coupling must be {s}x{s} per degree, got {shape}")
            if np.any(np.triu(self.coupling.coeffs, k=1) != 0.0):
                raise ValueError(f"scheme {self.name!r} has couplings above the diagonal (implicit)")
        elif shape != (s,):
            raise ValueError(f"SPC coupling must be a length-{s} vector per degree, got {shape}")

    @property
    def stages(self) -> int:
        return self.tableau.stages

    @property
    def order(self) -> int:
        return self.tableau.order

    @property
    def delta_c(self) -> np.ndarray:
        return np.diff(np.append(self.tableau.c, 1.0))

    def exact_delta_c(self) -> np.ndarray | None:
        if self.tableau.exact is None:
            return None
        c = list(self.tableau.exact[2]) + [Fraction(1)]
        return np.array([c[i + 1] - c[i] for i in range(len(c) - 1)], dtype=object)


@dataclass(frozen=True)
class Diagnostic:
    """A violated consistency identity."""

    identity: str
    residual: float

    def __str__(self) -> str:
        return f"{self.identity}: residual {self.residual:.3e}"


def eval_coupling(scheme: CouplingScheme, tau: float) -> np.ndarray:
    """Coupling matrix (MRI) or vector (SPC) at normalized time ``tau``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau={tau} outside [0, 1]")
    return scheme.coupling(tau)


def gamma_bar(scheme: CouplingScheme) -> np.ndarray:
    return scheme.coupling.bar()


def validate_scheme(scheme: CouplingScheme, tol: float = TOLERANCE) -> list[Diagnostic]:
    """Check every consistency identity the scheme must satisfy.

    Returns an empty list when the scheme is consistent.  Numeric checks use the
    sampled ``tau`` values in :data:`SAMPLE_TAUS`; when exact rational
    coefficients are available the same identities are also checked exactly,
    degree by degree.
    """
    tab = scheme.tableau
    diags: list[Diagnostic] = []

    def check(identity: str, residual: float):
        if not residual <= tol:
            diags.append(Diagnostic(identity, float(residual)))

    check("sum(b) == 1", abs(tab.b.sum() - 1.0))
    check("c == row sums of A", np.max(np.abs(tab.A.sum(axis=1) - tab.c)))

    dc = scheme.delta_c
    gbar = gamma_bar(scheme)
    if scheme.kind is SchemeKind.DECOUPLED_MRI:
        for tau in SAMPLE_TAUS:
            check(f"Gamma({tau}) @ 1 == delta_c", np.max(np.abs(eval_coupling(scheme, tau).sum(axis=1) - dc)))
        check("column sums of Gamma_bar == b", np.max(np.abs(gbar.sum(axis=0) - tab.b)))
    else:
        for tau in SAMPLE_TAUS:
            check(f"sum gamma({tau}) == 1", abs(eval_coupling(scheme, tau).sum() - 1.0))
        check("gamma_bar == b", np.max(np.abs(gbar - tab.b)))

    if tab.exact is not None and scheme.coupling.exact is not None:
        diags.extend(_exact_diagnostics(scheme))
    return diags


def _exact_diagnostics(scheme: CouplingScheme) -> list[Diagnostic]:
    eA, eb, ec = scheme.tableau.exact
    G = scheme.coupling.exact
    s = scheme.stages
    out = []

    def check(identity: str, value: Fraction):
        if value != 0:
            out.append(Diagnostic(identity + " (exact)", abs(float(value))))

    check("sum(b) == 1", sum(eb) - 1)
    for i in range(s):
        check(f"c[{i}] == row sum of A", sum(eA[i]) - ec[i])

    bar = sum(G[k] * Fraction(1, k + 1) for k in range(G.shape[0]))
    if scheme.kind is SchemeKind.DECOUPLED_MRI:
        dc = scheme.exact_delta_c()
        for k in range(G.shape[0]):
            target = dc if k == 0 else [Fraction(0)] * s
            for i in range(s):
                check(f"degree-{k} row {i} sum == delta_c", sum(G[k][i]) - target[i])
        for j in range(s):
            check(f"column {j} sum of Gamma_bar == b", sum(bar[:, j]) - eb[j])
    else:
        for k in range(G.shape[0]):
            check(f"degree-{k} sum of gamma", sum(G[k]) - (1 if k == 0 else 0))
        for j in range(s):
            check(f"gamma_bar[{j}] == b", bar[j] - eb[j])
    return out


F = Fraction

TABLEAUS: dict[str, RkTableau] = {
    "euler": RkTableau.from_rationals([[0]], [1], [0], 1, "euler"),
    "ralston2": RkTableau.from_rationals(
        [[0, 0], [F(2, 3), 0]], [F(1, 4), F(3, 4)], [0, F(2, 3)], 2, "ralston2"
    ),
    "ralston3": RkTableau.from_rationals(
        [[0, 0, 0], [F(1, 2), 0, 0], [0, F(3, 4), 0]],
        [F(2, 9), F(1, 3), F(4, 9)],
        [0, F(1, 2), F(3, 4)],
        3,
        "ralston3",
    ),
    "rk4": RkTableau.from_rationals(
        [[0, 0, 0, 0], [F(1, 2), 0, 0, 0], [0, F(1, 2), 0, 0], [0, 0, 1, 0]],
        [F(1, 6), F(1, 3), F(1, 3), F(1, 6)],
        [0, F(1, 2), F(1, 2), 1],
        4,
        "rk4",
    ),
    "butcher5": RkTableau.from_rationals(
        [
            [0, 0, 0, 0, 0, 0],
            [F(1, 4), 0, 0, 0, 0, 0],
            [F(1, 8), F(1, 8), 0, 0, 0, 0],
            [0, F(-1, 2), 1, 0, 0, 0],
            [F(3, 16), 0, 0, F(9, 16), 0, 0],
            [F(-3, 7), F(2, 7), F(12, 7), F(-12, 7), F(8, 7), 0],
        ],
        [F(7, 90), 0, F(32, 90), F(12, 90), F(32, 90), F(7, 90)],
        [0, F(1, 4), F(1, 4), F(1, 2), F(3, 4), 1],
        5,
        "butcher5",
    ),
}

_INNER_BY_ORDER = {1: "euler", 2: "ralston2", 3: "ralston3", 4: "rk4", 5: "butcher5"}


def inner_tableau(order: int) -> RkTableau:
    """Explicit RK tableau of the requested order, for inner solves."""
    try:
        return TABLEAUS[_INNER_BY_ORDER[order]]
    except KeyError:
        raise ValueError(f"no built-in explicit method of order {order} (have 1-5)") from None


def euler_scheme(kind: SchemeKind = SchemeKind.DECOUPLED_MRI) -> CouplingScheme:
    coupling = [[[1]]] if kind is SchemeKind.DECOUPLED_MRI else [[1]]
    return CouplingScheme(TABLEAUS["euler"], kind, PolynomialMatrix.from_rationals(coupling), "euler")


def builtin_schemes() -> dict[str, CouplingScheme]:
    """The five shipped schemes, keyed by harness method name."""
    mri, spc = SchemeKind.DECOUPLED_MRI, SchemeKind.STEP_PREDICTOR_CORRECTOR
    r2, r3 = TABLEAUS["ralston2"], TABLEAUS["ralston3"]
    return {
        "euler": euler_scheme(mri),
        "mri-ralston2": CouplingScheme(
            r2, mri, PolynomialMatrix.from_rationals([[[F(2, 3), 0], [F(-5, 12), F(3, 4)]]]), "mri-ralston2"
        ),
        "spc-ralston2": CouplingScheme(
            r2,
            spc,
            PolynomialMatrix.from_rationals([[F(-1, 2), F(3, 2)], [F(3, 2), F(-3, 2)]]),
            "spc-ralston2",
        ),
        "mri-ralston3": CouplingScheme(
            r3,
            mri,
            PolynomialMatrix.from_rationals(
                [
                    [[F(1, 2), 0, 0], [F(-11, 4), 3, 0], [F(47, 36), F(-1, 6), F(-8, 9)]],
                    [[0, 0, 0], [F(9, 2), F(-9, 2), 0], [F(-13, 6), F(-1, 2), F(8, 3)]],
                ]
            ),
            "mri-ralston3",
        ),
        "spc-ralston3": CouplingScheme(
            r3,
            spc,
            PolynomialMatrix.from_rationals(
                [
                    [1, 0, 0],
                    [F(-2, 3), -2, F(8, 3)],
                    [F(-4, 3), 4, F(-8, 3)],
                ]
            ),
            "spc-ralston3",
        ),
    }


def _square(values: Sequence, s: int, what: str) -> list:
    arr = np.asarray(values, dtype=object)
    if arr.shape == (s * s,):
        arr = arr.reshape(s, s)
    if arr.shape != (s, s):
        raise ValueError(f"{what}: expected {s}x{s} entries, got shape {arr.shape}")
    return arr.tolist()


def load_scheme_file(path: str | Path) -> CouplingScheme:
    """Read a coupling scheme from a JSON document.

    Keys: ``name``, ``kind`` (``"mri"`` or ``"spc"``), ``s``, ``order``,
    ``A`` (row-major, flat or nested), ``b``, ``c`` and ``coupling`` (one entry
    per polynomial degree, lowest first: ``s x s`` matrices for MRI, length-``s``
    vectors for SPC).  Numbers may be JSON numbers or strings such as ``"-5/12"``.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        s = int(doc["s"])
        kind = SchemeKind(doc["kind"])
        name = str(doc.get("name", path.stem))
        A = _square(doc["A"], s, "A")
        tab = RkTableau.from_rationals(A, doc["b"], doc["c"], int(doc["order"]), name)
        if kind is SchemeKind.DECOUPLED_MRI:
            coupling = [_square(g, s, f"coupling degree {k}") for k, g in enumerate(doc["coupling"])]
        else:
            coupling = [list(g) for g in doc["coupling"]]
        return CouplingScheme(tab, kind, PolynomialMatrix.from_rationals(coupling), name)
    except (KeyError, TypeError, ValueError, ZeroDivisionError, json.JSONDecodeError) as exc:
        raise ValueError(f"malformed scheme file {path}: {exc}") from exc
