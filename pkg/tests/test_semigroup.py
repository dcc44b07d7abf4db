import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from edgeflow.errors import FeasibilityError, InvalidInputError, UnsupportedGeometryError
from edgeflow.geometry import Circle, EdgeConfig, FlatTorus, RoundSphere
from edgeflow.grid import FourierAxis, SpaceTimeField, make_grid
from edgeflow.semigroup import (
    DiscreteLaplacian,
    build_laplacian,
    heat_convolve,
    phi1,
    phi_trap,
    semigroup_checks,
)


# grid ------------------------------------------------------------------------------

def test_fourier_axis_orthonormal():
    ax = FourierAxis(2.5, 7)
    gram = ax.basis.T @ (ax.basis * ax.weights[:, None])
    np.testing.assert_allclose(gram, np.eye(7), atol=1e-14)


def test_fourier_derivative_exact_on_trig_polynomials():
    ax = FourierAxis(3.0, 9)
    w = 2 * math.pi / 3.0
    u = np.sin(2 * w * ax.nodes) + 0.5 * np.cos(3 * w * ax.nodes)
    du = 2 * w * np.cos(2 * w * ax.nodes) - 1.5 * w * np.sin(3 * w * ax.nodes)
    np.testing.assert_allclose(ax.derivative @ u, du, atol=1e-12)


def test_fourier_axis_needs_odd_count():
    with pytest.raises(InvalidInputError):
        FourierAxis(1.0, 4)


def test_graded_nodes(cone6):
    g = make_grid(cone6, 10, 2.0)
    np.testing.assert_allclose(g.x, (np.arange(11) / 10) ** 2)
    assert g.spatial_shape == (11, 1)
    with pytest.raises(InvalidInputError):
        make_grid(cone6, 2)


def test_sphere_links_only_link_constant():
    cfg = EdgeConfig(2, RoundSphere(0.5, 2))
    assert make_grid(cfg, 8).link.n == 1
    with pytest.raises(UnsupportedGeometryError):
        make_grid(cfg, 8, n_link=3)


def test_radial_derivative_second_order(cone6):
    errs = []
    for n in (20, 40, 80):
        g = make_grid(cone6, n)
        u = np.cos(g.x)[None, :, None]
        err = np.abs(g.d_x(u)[0, :, 0] + np.sin(g.x))
        errs.append(err[1:-1].max())
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8)


def test_field_validation(cone6):
    g = make_grid(cone6, 4)
    with pytest.raises(InvalidInputError):
        SpaceTimeField(np.zeros((2, 4, 1)), g, [0.0, 1.0])
    with pytest.raises(InvalidInputError):
        SpaceTimeField(np.full((2, 5, 1), np.nan), g, [0.0, 1.0])
    with pytest.raises(InvalidInputError):
        SpaceTimeField(np.zeros((2, 5, 1)), g, [1.0, 0.0])


def test_tip_projection(cone6):
    g = make_grid(cone6, 6, n_link=5)
    f = SpaceTimeField.from_function(lambda t, x, z: np.cos(z) + x + t, g, [0.0])
    assert np.ptp(f.values[0, 0]) == 0.0


# discrete Laplacian ------------------------------------------------------------------

@pytest.mark.parametrize("f,link", [(1, Circle(1.3)), (2, RoundSphere(0.5, 2)), (3, RoundSphere(0.4, 3))])
def test_laplacian_of_x_squared(f, link):
    lap = build_laplacian(EdgeConfig(f, link), 30, allow_infeasible=True)
    x = lap.grid.x
    out = lap.apply((x**2)[None, :, None])[0, :, 0]
    np.testing.assert_allclose(out[1:-1], -2 - 2 * f, rtol=1e-10)


def test_laplacian_kills_constants(torus_cone):
    lap = build_laplacian(torus_cone, 12, n_link=5, n_base=3)
    u = np.full((1, *lap.grid.spatial_shape), 3.0)
    assert np.abs(lap.apply(u)).max() < 1e-10


def test_weighted_symmetry_and_sign(cone6):
    lap = build_laplacian(cone6, 16, n_link=3)
    for blk in lap.blocks.values():
        n = blk.matrix.shape[0]
        # reconstruct the volume weights from the eigenvectors: V^T W V = I
        W = np.linalg.inv(blk.vecs @ blk.vecs.T)
        S = W @ blk.matrix
        np.testing.assert_allclose(S, S.T, atol=1e-8 * np.abs(S).max())
        assert n == blk.evals.size
    assert lap.eigenvalues()[0] > -1e-10


def test_indicial_solution_is_harmonic_in_the_interior(cone6):
    """x^gamma_1 cos(2 pi z / L) is annihilated away from the tip, at second order."""
    gamma = math.sqrt(3.0)
    L = cone6.link.circumference
    errs = []
    for n in (20, 40, 80):
        lap = build_laplacian(cone6, n, 1.0, n_link=3)
        g = lap.grid
        u = SpaceTimeField.from_function(lambda t, x, z: x**gamma * np.cos(2 * np.pi * z / L), g, [0.0])
        res = lap.apply(u.values)[0, :, 0]
        i = np.argmin(np.abs(g.x - 0.5))
        errs.append(abs(res[i]))
    assert errs[-1] < 1e-3
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_propagator_matches_matrix_exponential(cone6, rng):
    lap = build_laplacian(cone6, 20, n_link=3)
    A = lap.matrix()
    u = lap.grid.tip_consistent(rng.standard_normal((1, *lap.grid.spatial_shape)))
    ours = lap.propagate(u, 0.03).ravel()
    ref = expm(-0.03 * A) @ u.ravel()
    np.testing.assert_allclose(ours, ref, atol=1e-10 * np.abs(ref).max())


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-4, 0.5), st.floats(1e-4, 0.5))
def test_semigroup_composition(t1, t2):
    cfg = EdgeConfig(1, Circle.from_cone_angle(math.pi / 6))
    lap = build_laplacian(cfg, 16, n_link=3)
    u = lap.grid.tip_consistent(np.random.default_rng(0).standard_normal((1, *lap.grid.spatial_shape)))
    both = lap.propagate(lap.propagate(u, t1), t2)
    once = lap.propagate(u, t1 + t2)
    assert np.abs(both - once).max() <= 1e-10


def test_semigroup_checks_report(cone6):
    rep = semigroup_checks(build_laplacian(cone6, 40, n_link=3))
    assert rep["eigenmode_decay_rel_error"] <= 1e-4
    assert rep["composition_error"] <= 1e-10
    assert abs(rep["min_eigenvalue"]) < 1e-10


def test_infeasible_geometry_needs_opt_in():
    cfg = EdgeConfig(1, Circle(2 * math.pi))
    with pytest.raises(FeasibilityError):
        build_laplacian(cfg, 8)
    assert isinstance(build_laplacian(cfg, 8, allow_infeasible=True), DiscreteLaplacian)


# Duhamel integration ---------------------------------------------------------------------

def test_phi_functions_continuous_at_series_switch():
    for z in (1e-3, 1e-2):
        a, b = z * (1 - 1e-9), z * (1 + 1e-9)
        assert phi1(a) == pytest.approx(phi1(b), rel=1e-8)
        assert phi_trap(a) == pytest.approx(phi_trap(b), rel=1e-8)
    assert phi1(0.0) == 1.0 and phi_trap(0.0) == 0.5


def test_zero_forcing(cone6):
    lap = build_laplacian(cone6, 10)
    F = SpaceTimeField(np.zeros((5, *lap.grid.spatial_shape)), lap.grid, np.linspace(0, 0.1, 5))
    assert np.all(heat_convolve(lap, F).values == 0)


def test_eigenmode_forcing_matches_scalar_ode(cone6):
    lap = build_laplacian(cone6, 24, n_link=3)
    lam, phi = lap.eigenmode(1, 2)
    times = np.linspace(0, 0.2, 9)
    F = SpaceTimeField(np.broadcast_to(phi, (times.size, *phi.shape)), lap.grid, times)
    u = heat_convolve(lap, F)
    for n, t in enumerate(times):
        np.testing.assert_allclose(u.values[n], (1 - math.exp(-lam * t)) / lam * phi, atol=1e-12)


def test_linear_in_time_forcing_is_integrated_exactly(cone6):
    lap = build_laplacian(cone6, 24)
    lam, phi = lap.eigenmode(0, 3)
    times = np.linspace(0, 0.3, 7)
    F = SpaceTimeField(times[:, None, None] * phi[None], lap.grid, times)
    u = heat_convolve(lap, F)
    exact = (lam * times - 1 + np.exp(-lam * times)) / lam**2
    np.testing.assert_allclose(u.values, exact[:, None, None] * phi[None], atol=1e-12)


def test_constant_forcing_gives_t(torus_cone):
    lap = build_laplacian(torus_cone, 10, n_link=3, n_base=3)
    times = np.linspace(0, 0.5, 6)
    F = SpaceTimeField(np.ones((6, *lap.grid.spatial_shape)), lap.grid, times)
    u = heat_convolve(lap, F)
    np.testing.assert_allclose(u.values, np.broadcast_to(times[:, None, None, None], u.values.shape), atol=1e-12)


def test_convolve_input_checks(cone6):
    lap = build_laplacian(cone6, 10)
    other = make_grid(cone6, 12)
    with pytest.raises(InvalidInputError):
        heat_convolve(lap, SpaceTimeField(np.zeros((3, 13, 1)), other, [0, 0.1, 0.2]))
    with pytest.raises(InvalidInputError):
        heat_convolve(lap, SpaceTimeField(np.zeros((3, 11, 1)), lap.grid, [0, 0.1, 0.3]))
    with pytest.raises(InvalidInputError):
        heat_convolve(lap, SpaceTimeField(np.zeros((2, 11, 1)), lap.grid, [0.1, 0.2]))
