import functools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smmr.coefficients import TABLEAUS, SchemeKind, builtin_schemes, euler_scheme
from smmr.integrators import (
    InnerSolverConfig,
    IntegrationError,
    ModelPair,
    RungeKutta,
    StepState,
    initial_state,
    inner_solve,
    integrate,
    rk_step,
    sm_mri_gark_step,
    sm_spc_mri_gark_step,
    surrogate_stepper,
)
from smmr.problems import BrusselatorSpec, brusselator_coarse_surrogate, brusselator_initial_state, brusselator_rhs
from smmr.projections import identity_projection

SCHEMES = builtin_schemes()
MRI = [n for n, s in SCHEMES.items() if s.kind is SchemeKind.DECOUPLED_MRI]
SPC = [n for n, s in SCHEMES.items() if s.kind is SchemeKind.STEP_PREDICTOR_CORRECTOR]


def zero(t, z):
    return np.zeros_like(z)


def scalar_pair(f, fs):
    return ModelPair(f, fs, identity_projection(1))


# rk_step ----------------------------------------------------------------

def test_rk_euler_constant():
    assert rk_step(TABLEAUS["euler"], lambda t, y: np.ones(1), 0.0, np.zeros(1), 0.5)[0] == 0.5


def test_rk_ralston2_exponential():
    y = rk_step(TABLEAUS["ralston2"], lambda t, y: y, 0.0, np.ones(1), 0.1)
    assert y[0] == pytest.approx(1.105, abs=1e-15)
    assert abs(y[0] - np.exp(0.1)) < 0.1**3


def test_rk_ralston3_quadrature():
    y = rk_step(TABLEAUS["ralston3"], lambda t, y: np.array([t * t]), 0.0, np.zeros(1), 1.0)
    assert y[0] == pytest.approx(1 / 3, abs=1e-15)


def test_rk_counts_and_failure():
    calls = []

    def rhs(t, y):
        calls.append(t)
        return np.array([np.inf]) if len(calls) == 3 else y

    with pytest.raises(IntegrationError) as info:
        rk_step(TABLEAUS["rk4"], rhs, 0.0, np.ones(1), 0.1)
    assert info.value.stage == 2
    calls.clear()
    rk_step(TABLEAUS["ralston3"], lambda t, y: (calls.append(t), y)[1], 0.0, np.ones(1), 0.1)
    assert len(calls) == 3
    with pytest.raises(ValueError):
        rk_step(TABLEAUS["euler"], zero, 0.0, np.ones(1), 0.0)


# inner_solve ----------------------------------------------------------------

def test_inner_constant_forcing():
    cfg = InnerSolverConfig(TABLEAUS["euler"], 1)
    z = inner_solve(cfg, zero, [([1.0], np.array([2.0]))], 1.0, 0.0, 0.5, np.array([1.0]))
    assert z[0] == 2.0


def test_inner_linear_forcing_exact_for_order_two():
    for name in ("ralston2", "ralston3", "rk4", "butcher5"):
        cfg = InnerSolverConfig(TABLEAUS[name], 1)
        z = inner_solve(cfg, zero, [([0.0, 1.0], np.array([1.0]))], 1.0, 0.0, 1.0, np.array([0.0]))
        assert z[0] == pytest.approx(0.5, abs=1e-15)


def test_inner_exponential_flow():
    cfg = InnerSolverConfig(TABLEAUS["ralston3"], 100)
    z = inner_solve(cfg, lambda t, z: z, [], 1.0, 0.0, 0.1, np.array([1.0]))
    assert abs(z[0] - np.exp(0.1)) < 1e-10


def test_inner_counts_and_reuse():
    pair = scalar_pair(zero, lambda t, z: -z)
    cfg = InnerSolverConfig(TABLEAUS["rk4"], 3)
    z0 = np.array([1.0])
    a = inner_solve(cfg, pair.fs, [], 2.0, 0.0, 0.1, z0)
    assert pair.surrogate_evals == 12
    b = inner_solve(cfg, pair.fs, [], 2.0, 0.0, 0.1, z0, fs0=-z0)
    assert pair.surrogate_evals == 12 + 11
    assert a[0] == b[0]


def test_inner_time_argument():
    # z' = scale * g(t_offset + scale*theta) integrates g over [t_offset, t_offset + scale*H]
    cfg = InnerSolverConfig(TABLEAUS["rk4"], 1)
    z = inner_solve(cfg, lambda t, z: np.array([t**2]), [], 0.5, 1.0, 2.0, np.zeros(1))
    assert z[0] == pytest.approx((2.0**3 - 1.0) / 3, abs=1e-14)


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_inner_nonfinite_reports_micro_step():
    cfg = InnerSolverConfig(TABLEAUS["euler"], 10)
    with pytest.raises(IntegrationError) as info:
        inner_solve(cfg, lambda t, z: z * 1e200, [], 1.0, 0.0, 1.0, np.array([1e200]))
    assert info.value.micro_step == 0


# steppers -------------------------------------------------------------------

def test_mri_euler_zero_surrogate_is_forward_euler():
    f = lambda t, y: np.array([np.sin(y[0]) + t, y[0] * y[1]])
    pair = ModelPair(f, zero, identity_projection(2))
    y = np.array([0.3, -1.2])
    out = sm_mri_gark_step(SCHEMES["euler"], InnerSolverConfig(TABLEAUS["ralston2"], 1), pair,
                           StepState(0.2, y, y.copy()), 0.1)
    np.testing.assert_allclose(out.y, y + 0.1 * f(0.2, y), rtol=1e-15, atol=1e-16)
    assert out.t == pytest.approx(0.3)


def test_mri_euler_exact_surrogate_limit():
    lam, H, y0 = -1.3, 0.2, 0.7
    f = lambda t, y: lam * y
    for m in (1, 4, 16):
        pair = scalar_pair(f, f)
        out = sm_mri_gark_step(SCHEMES["euler"], InnerSolverConfig(TABLEAUS["ralston3"], m), pair,
                               initial_state(pair, 0.0, [y0]), H)
        err = abs(out.y[0] - np.exp(lam * H) * y0)
        # local error of m steps of an order-3 method
        assert err <= 0.1 * m * (abs(lam) * H / m) ** 4


def test_mri_ralston2_zero_surrogate_composite():
    f = lambda t, y: np.array([-y[0] * y[1] + t, np.cos(y[0])])
    y = np.array([0.4, 1.1])
    t, H = 0.3, 0.25
    Y2 = y + 2 * H / 3 * f(t, y)
    expected = Y2 + H * (-5 / 12 * f(t, y) + 3 / 4 * f(t + 2 * H / 3, Y2))
    pair = ModelPair(f, zero, identity_projection(2))
    out = sm_mri_gark_step(SCHEMES["mri-ralston2"], InnerSolverConfig.for_scheme(SCHEMES["mri-ralston2"]), pair,
                           StepState(t, y, y.copy()), H)
    np.testing.assert_allclose(out.y, expected, rtol=1e-14)
    np.testing.assert_allclose(out.y, rk_step(TABLEAUS["ralston2"], f, t, y, H), rtol=1e-14)


def test_euler_spc_matches_mri_bitwise():
    f = lambda t, y: np.array([y[1], -np.sin(y[0])]) + t
    fs = lambda t, z: np.array([z[1], -z[0]])
    y = np.array([0.5, 0.1])
    inner = InnerSolverConfig(TABLEAUS["ralston2"], 3)
    a = sm_mri_gark_step(euler_scheme(SchemeKind.DECOUPLED_MRI), inner, ModelPair(f, fs, identity_projection(2)),
                         StepState(0.0, y, y.copy()), 0.1)
    b = sm_spc_mri_gark_step(euler_scheme(SchemeKind.STEP_PREDICTOR_CORRECTOR), inner,
                             ModelPair(f, fs, identity_projection(2)), StepState(0.0, y, y.copy()), 0.1)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.y_hat, b.y_hat)


@pytest.mark.parametrize("name", sorted(SCHEMES))
def test_zero_surrogate_reduction(name):
    scheme = SCHEMES[name]
    f = lambda t, y: np.array([np.sin(3 * t) * y[1], -y[0] ** 2, y[0] - y[2]])
    pair = ModelPair(f, zero, identity_projection(3))
    rng = np.random.default_rng(11)
    for _ in range(20):
        y = rng.standard_normal(3)
        out = surrogate_stepper(scheme, InnerSolverConfig.for_scheme(scheme)).step(pair, StepState(0.4, y, y.copy()), 0.07)
        ref = rk_step(scheme.tableau, f, 0.4, y, 0.07)
        assert np.max(np.abs(out.y - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_wrong_kind_rejected():
    pair = scalar_pair(zero, zero)
    st0 = initial_state(pair, 0.0, [1.0])
    inner = InnerSolverConfig(TABLEAUS["rk4"])
    with pytest.raises(ValueError):
        sm_mri_gark_step(SCHEMES["spc-ralston2"], inner, pair, st0, 0.1)
    with pytest.raises(ValueError):
        sm_spc_mri_gark_step(SCHEMES["mri-ralston2"], inner, pair, st0, 0.1)


def test_dimension_mismatch():
    pair = ModelPair(lambda t, y: y[:1], zero, identity_projection(2))
    with pytest.raises(ValueError):
        sm_mri_gark_step(SCHEMES["euler"], InnerSolverConfig(TABLEAUS["ralston2"]), pair,
                         initial_state(pair, 0.0, [1.0, 2.0]), 0.1)


def small_brusselator():
    spec = BrusselatorSpec(P=9)
    fs, proj = brusselator_coarse_surrogate(spec, 5)
    return spec, ModelPair(functools.partial(brusselator_rhs, spec), fs, proj), brusselator_initial_state(spec)


@pytest.mark.parametrize("name", sorted(SCHEMES))
@pytest.mark.parametrize("m", [1, 3])
def test_counter_exactness(name, m):
    _, pair, y0 = small_brusselator()
    scheme = SCHEMES[name]
    stepper = surrogate_stepper(scheme, InnerSolverConfig.for_scheme(scheme, micro_steps=m))
    traj = integrate(stepper, pair, 0.0, 0.05, y0, 5)
    s, si = scheme.stages, stepper.inner.method.stages
    assert traj.full_evals == s * 5
    expected = s * m * si if scheme.kind is SchemeKind.DECOUPLED_MRI else m * si + s
    assert traj.surrogate_evals == expected * 5
    assert (traj.full_evals, traj.surrogate_evals) == stepper.expected_evals(5)


@pytest.mark.parametrize("name", sorted(SCHEMES))
def test_cached_restriction_coherent(name):
    _, pair, y0 = small_brusselator()
    scheme = SCHEMES[name]
    stepper = surrogate_stepper(scheme, InnerSolverConfig.for_scheme(scheme))
    state = initial_state(pair, 0.0, y0)
    for _ in range(10):
        state = stepper.step(pair, state, 0.01, check_cache=True)
        assert np.max(np.abs(pair.projection.restrict(state.y) - state.y_hat)) <= 1e-12


def test_subspace_split_euler_and_spc():
    spec, pair, y0 = small_brusselator()
    P = pair.projection
    f = functools.partial(brusselator_rhs, spec)
    comp = lambda v: v - P.lift(P.restrict(v))
    H = 0.02
    out = sm_mri_gark_step(SCHEMES["euler"], InnerSolverConfig(TABLEAUS["ralston2"]), pair,
                           initial_state(pair, 0.0, y0), H)
    np.testing.assert_allclose(comp(out.y), comp(y0 + H * f(0.0, y0)), atol=1e-13)
    for name in SPC:
        scheme = SCHEMES[name]
        out = sm_spc_mri_gark_step(scheme, InnerSolverConfig.for_scheme(scheme), pair,
                                   initial_state(pair, 0.0, y0), H)
        np.testing.assert_allclose(comp(out.y), comp(rk_step(scheme.tableau, f, 0.0, y0, H)), atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(sorted(SCHEMES)), st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_step_is_linear_for_linear_models(name, seed, alpha, beta):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((4, 4))
    S = rng.standard_normal((4, 4))
    scheme = SCHEMES[name]
    stepper = surrogate_stepper(scheme, InnerSolverConfig.for_scheme(scheme, micro_steps=8))

    def step(y):
        pair = ModelPair(lambda t, v: M @ v, lambda t, z: S @ z, identity_projection(4))
        return stepper.step(pair, initial_state(pair, 0.0, y), 0.05).y

    x, y = rng.standard_normal(4), rng.standard_normal(4)
    np.testing.assert_allclose(step(alpha * x + beta * y), alpha * step(x) + beta * step(y), atol=1e-10)


def test_euler_lte_constant():
    M = np.array([[0.0, 1.0], [-1.0, 0.0]])
    mu = 0.5
    y0 = np.array([1.0, 0.0])
    C = np.linalg.norm(0.5 * (M - mu * np.eye(2)) @ M @ y0)
    import scipy.linalg

    ratios = []
    for H in (1e-1, 1e-2, 1e-3):
        pair = ModelPair(lambda t, y: M @ y, lambda t, z: mu * z, identity_projection(2))
        out = sm_mri_gark_step(SCHEMES["euler"], InnerSolverConfig(TABLEAUS["rk4"], 4), pair,
                               initial_state(pair, 0.0, y0), H)
        ratios.append(np.linalg.norm(scipy.linalg.expm(H * M) @ y0 - out.y) / H**2)
    assert abs(ratios[-1] / C - 1) < 0.05
    assert abs(ratios[-1] - C) < abs(ratios[0] - C)


# non-autonomous convergence ----------------------------------------------------

def _forced_error(name, n):
    # y(0) = 1; the leading error term changes sign in time, so take the max over the trajectory
    f = lambda t, y: -y + np.sin(3 * t)
    fs = lambda t, z: -0.8 * z + 0.9 * np.sin(3 * t)
    exact = lambda t: 1.3 * np.exp(-t) + (np.sin(3 * t) - 3 * np.cos(3 * t)) / 10
    scheme = SCHEMES[name]
    stepper = surrogate_stepper(scheme, InnerSolverConfig.for_scheme(scheme, micro_steps=4))
    traj = integrate(stepper, scalar_pair(f, fs), 0.0, 2.0, [1.0], n, dense_stride=1)
    return max(abs(y[0] - exact(t)) for t, y in traj.dense)


@pytest.mark.parametrize("name", sorted(SCHEMES))
def test_non_autonomous_order(name):
    e = [_forced_error(name, n) for n in (32, 64, 128)]
    slopes = np.log2(np.array(e[:-1]) / np.array(e[1:]))
    assert np.all(np.abs(slopes - SCHEMES[name].order) < 0.25), slopes


# integrate -------------------------------------------------------------------

def test_integrate_single_step_equals_step():
    _, pair, y0 = small_brusselator()
    stepper = surrogate_stepper(SCHEMES["mri-ralston3"], InnerSolverConfig.for_scheme(SCHEMES["mri-ralston3"]))
    a = integrate(stepper, pair, 0.0, 0.03, y0, 1)
    b = stepper.step(pair, initial_state(pair, 0.0, y0), 0.03)
    assert np.array_equal(a.y, b.y)


@pytest.mark.parametrize("name", sorted(SCHEMES) + ["rk"])
@pytest.mark.parametrize("n", [1, 3])
def test_zero_field(name, n):
    pair = ModelPair(zero, zero, identity_projection(3))
    stepper = RungeKutta() if name == "rk" else surrogate_stepper(SCHEMES[name], InnerSolverConfig.for_scheme(SCHEMES[name]))
    y0 = np.array([1.0, -2.0, 3.5])
    assert np.array_equal(integrate(stepper, pair, 0.0, 1.0, y0, n).y, y0)


def test_integrate_dense_and_errors():
    pair = scalar_pair(lambda t, y: -y, lambda t, z: -z)
    traj = integrate(RungeKutta(TABLEAUS["rk4"]), pair, 0.0, 1.0, [1.0], 10, dense_stride=5)
    assert [t for t, _ in traj.dense] == pytest.approx([0.0, 0.5, 1.0])
    assert traj.full_evals == 40 and traj.surrogate_evals == 0
    with pytest.raises(ValueError):
        integrate(RungeKutta(), pair, 0.0, 1.0, [1.0], 0)
    with pytest.raises(ValueError):
        integrate(RungeKutta(), pair, 1.0, 1.0, [1.0], 3)


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_integrate_failure_carries_step_index():
    pair = scalar_pair(lambda t, y: y * y, zero)
    with pytest.raises(IntegrationError) as info:
        integrate(RungeKutta(), pair, 0.0, 10.0, [10.0], 50)
    assert info.value.step is not None and info.value.step > 0


def test_rk_surrogate_stepper_lifts():
    _, pair, y0 = small_brusselator()
    traj = integrate(RungeKutta(TABLEAUS["ralston2"], surrogate=True), pair, 0.0, 0.1, y0, 4)
    assert traj.full_evals == 0 and traj.surrogate_evals == 8
    np.testing.assert_array_equal(pair.projection.lift(pair.projection.restrict(traj.y)), traj.y)


def test_inner_config_order_guard():
    with pytest.raises(ValueError):
        InnerSolverConfig.for_scheme(SCHEMES["mri-ralston3"], order=2)
    with pytest.raises(ValueError):
        InnerSolverConfig(TABLEAUS["rk4"], 0)
    assert InnerSolverConfig.for_scheme(SCHEMES["spc-ralston2"]).method.order == 3
