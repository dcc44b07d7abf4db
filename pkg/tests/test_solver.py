import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgeflow.errors import FeasibilityError, InvalidInputError, NoConvergenceError
from edgeflow.geometry import Circle, EdgeConfig
from edgeflow.grid import SpaceTimeField
from edgeflow.holder import higher_holder_norm
from edgeflow.semigroup import build_laplacian
from edgeflow.solver import (
    B_op,
    G_series,
    Q_op,
    SolverParams,
    ball_samples,
    estimate_audit,
    implicit_oracle_solve,
    picard_map,
    picard_solve,
    yamabe_flow_run,
)


def bump_scal(x, z):
    return 0.2 * np.exp(-(((x - 0.5) / 0.25) ** 2)) + 0 * z


@pytest.fixture(scope="module")
def lap6(cone6):
    return build_laplacian(cone6, 12, n_link=3)


# pointwise pieces -------------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.floats(-3, 3))
def test_G_series_identity(u):
    assert u * G_series(u) == pytest.approx(math.expm1(-2 * u), rel=1e-12, abs=1e-15)


def test_G_series_continuous_at_switch():
    eps = np.array([1e-6 * (1 - 1e-9), 1e-6 * (1 + 1e-9)])
    g = G_series(eps)
    assert abs(g[0] - g[1]) < 1e-12
    assert G_series(0.0) == -2.0


def test_B_op_values_and_guard():
    assert B_op(0.0, 1.0, 2) == -0.5
    assert B_op(np.log(2) / 2, 3.0, 4) == pytest.approx(-0.25)
    with pytest.raises(InvalidInputError), np.errstate(over="ignore"):
        B_op(-400.0, 1.0, 2)


def test_Q_op_shape_guard(lap6):
    with pytest.raises(InvalidInputError):
        Q_op(np.zeros((2, 5, 3)), lap6, 2)


def test_Q_vanishes_on_constants_and_is_quadratic(lap6, rng):
    g = lap6.grid
    c = np.full((1, *g.spatial_shape), 0.3)
    assert np.max(np.abs(Q_op(c, lap6, 2))) < 1e-10
    u = g.tip_consistent(np.sin(3 * g.x)[None, :, None] * np.ones((1, 1, g.link.n)))
    r = np.max(np.abs(Q_op(1e-3 * u, lap6, 2))) / np.max(np.abs(Q_op(2e-3 * u, lap6, 2)))
    assert r == pytest.approx(0.25, rel=5e-3)


def test_params_validation():
    for bad in ({"alpha": 1.0}, {"mu": 0.0}, {"T": 0.0}, {"k": 0}, {"backend": "rk4"},
                {"time_convention": "wall"}, {"n_time": 1}):
        with pytest.raises(InvalidInputError):
            SolverParams(**bad)


def test_solver_rejects_infeasible(plane):
    lap = build_laplacian(plane, 8, allow_infeasible=True)
    with pytest.raises(FeasibilityError):
        picard_solve(SolverParams(), plane, 1.0, lap)


def test_solver_rejects_alpha_above_alpha0(cone6, lap6):
    with pytest.raises(FeasibilityError):
        picard_solve(SolverParams(alpha=0.8), cone6, 1.0, lap6)


# solutions -------------------------------------------------------------------------------

def test_flat_data_gives_zero(cone6, lap6):
    st_ = picard_solve(SolverParams(T=0.05, n_time=10), cone6, 0.0, lap6)
    assert st_.converged and np.all(st_.u.values == 0)


@pytest.mark.parametrize("S0", [1.0, -1.0])
@pytest.mark.parametrize("backend", ["picard", "implicit_oracle"])
def test_constant_curvature_exact(cone6, S0, backend):
    """Constant scal0: e^{2u} = 1 - S0 t, the same at every point."""
    lap = build_laplacian(cone6, 10)
    p = SolverParams(T=0.1, n_time=20, backend=backend, oracle_dt=1e-3)
    st_ = yamabe_flow_run(p, cone6, S0, lap)
    exact = 0.5 * np.log(1 - S0 * st_.times)
    err = np.max(np.abs(st_.u.values - exact[:, None, None]))
    assert err < 1e-6
    scal = st_.diagnostics["scal_g"]
    assert np.max(np.abs(scal - (S0 / (1 - S0 * st_.times))[:, None, None])) < 1e-5


def test_picard_contracts_with_small_residual(cone6, lap6):
    p = SolverParams(T=0.1, n_time=20, tol=1e-10)
    st_ = picard_solve(p, cone6, bump_scal, lap6)
    assert st_.converged and st_.halvings == 0
    assert max(st_.contraction_ratios) < 0.5
    assert st_.fixed_point_residual < 1e-9
    # the solution is a fixed point of the Duhamel map
    S = st_.diagnostics["scal0"]
    again = picard_map(st_.u.values, lap6, S, cone6.m, p.T / p.n_time, p.speed(cone6.m))
    assert np.max(np.abs(again - st_.u.values)) < 1e-10
    assert st_.in_ball


def test_backends_agree_on_bump(cone6, lap6):
    p = SolverParams(T=0.1, n_time=20, tol=1e-10, oracle_dt=5e-4)
    a = picard_solve(p, cone6, bump_scal, lap6)
    b = implicit_oracle_solve(p, cone6, bump_scal, lap6)
    scale = np.max(np.abs(a.u.values))
    assert np.max(np.abs(a.u.values - b.u.values)) < 1e-3 * scale


def test_flow_residual_shrinks_with_time_step(cone6, lap6):
    res = []
    for n in (10, 20, 40):
        st_ = yamabe_flow_run(SolverParams(T=0.1, n_time=n, tol=1e-11), cone6, bump_scal, lap6)
        res.append(st_.diagnostics["flow_residual_late"])
    assert res[1] < res[0] and res[2] < res[1]
    assert res[2] / res[1] < 0.3  # second order in the time step
    assert res[2] < 5e-5


def test_time_rescaling_covariance(torus_cone):
    """The physical clock on [0, T] equals the rescaled clock on [0, (m-1) T]."""
    lap = build_laplacian(torus_cone, 8, n_link=3, n_base=3)
    m = torus_cone.m
    assert m == 3

    def scal0(x, z, y):
        return bump_scal(x, z) + 0.05 * np.cos(2 * np.pi * y)

    a = picard_solve(SolverParams(T=0.05, n_time=10, tol=1e-12), torus_cone, scal0, lap)
    b = picard_solve(SolverParams(T=0.05 * (m - 1), n_time=10, tol=1e-12,
                                  time_convention="rescaled"), torus_cone, scal0, lap)
    np.testing.assert_allclose(b.times, (m - 1) * a.times, rtol=1e-14)
    assert np.max(np.abs(a.u.values - b.u.values)) < 1e-10


def test_no_convergence_reports_history(cone6, lap6):
    with pytest.raises(NoConvergenceError) as ei:
        picard_solve(SolverParams(T=0.1, n_time=10, max_iters=2, max_halvings=1, tol=1e-14),
                     cone6, bump_scal, lap6)
    assert len(ei.value.log) == 2


def test_horizon_halving_on_large_data(cone6, lap6):
    st_ = picard_solve(SolverParams(T=0.1, n_time=10, max_iters=6, tol=1e-6), cone6,
                       lambda x, z: 30.0 + 0 * x, lap6)
    assert st_.T == pytest.approx(0.1 / 2**st_.halvings)
    assert st_.diagnostics["attempts"][-1]["converged"]


# estimate audit --------------------------------------------------------------------

@pytest.fixture(scope="module")
def audit_setup(cone6):
    lap = build_laplacian(cone6, 10, n_link=3)
    times = np.linspace(0, 0.05, 7)
    return lap, times, SolverParams(k=1, alpha=0.3, mu=0.5)


def test_ball_samples_stay_in_ball_and_extend(audit_setup):
    lap, times, p = audit_setup
    pairs = ball_samples(lap, times, 20, p, seed=3)
    assert len(pairs) == 20
    for u, v in pairs:
        for w in (u, v):
            assert np.all(w[0] == 0)
            n = higher_holder_norm(SpaceTimeField(w, lap.grid, times), 1, 0.3, lap)
            assert n <= p.mu * (1 + 1e-9)
    more = ball_samples(lap, times, 30, p, seed=3)
    assert all(np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]) for a, b in zip(pairs, more))


def test_audit_skips_identical_pairs(audit_setup):
    lap, times, p = audit_setup
    u = ball_samples(lap, times, 1, p)[0][0]
    out = estimate_audit([(u, u)], p, lap, bump_scal, 2, times)
    assert out["degenerate_skipped"] == 1 and out["lipschitz_Q"] is None
    assert out["quadratic_Q"] is not None


def test_audit_flat_data_has_zero_B(audit_setup):
    lap, times, p = audit_setup
    out = estimate_audit(ball_samples(lap, times, 6, p), p, lap, 0.0, 2, times)
    assert out["lipschitz_B"] == 0.0 and out["bound_B"] == 0.0
    assert out["all_finite"] and out["outside_ball"] == 0


def test_audit_small_pair_finite(audit_setup):
    lap, times, p = audit_setup
    u = ball_samples(lap, times, 1, p)[0][0]
    out = estimate_audit([(1e-3 * u, 0 * u)], p, lap, bump_scal, 2, times)
    assert out["all_finite"]
    # Q is quadratic, so ||Q(eps u)|| / ||eps u||^2 is O(1) rather than O(1/eps)
    big = estimate_audit([(u, 0 * u)], p, lap, bump_scal, 2, times)
    assert out["quadratic_Q"] < 2 * big["quadratic_Q"]
