"""Multirate time stepping that pairs an expensive full model with a cheap surrogate."""

from .coefficients import (
    CouplingScheme,
    PolynomialMatrix,
    RkTableau,
    SchemeKind,
    TABLEAUS,
    builtin_schemes,
    eval_coupling,
    gamma_bar,
    validate_scheme,
)
from .integrators import (
    InnerSolverConfig,
    IntegrationError,
    ModelPair,
    RungeKutta,
    StepState,
    SurrogateMri,
    SurrogateSpc,
    inner_solve,
    integrate,
    rk_step,
    sm_mri_gark_step,
    sm_spc_mri_gark_step,
)
from .projections import (
    ProjectionPair,
    dense_basis_projection,
    identity_projection,
    nested_mesh_projection_1d,
    nested_mesh_projection_2d,
)

__version__ = "0.1.0"
