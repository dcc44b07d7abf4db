import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgeflow.errors import DomainError, FeasibilityError, InvalidInputError
from edgeflow.geometry import Circle, EdgeConfig, EdgePoint, FlatTorus, edge_distance
from edgeflow.grid import SpaceTimeField, make_grid
from edgeflow.holder import (
    edge_derivative_set,
    full_report,
    higher_holder_norm,
    holder_norm,
    holder_seminorm,
    schauder_ratio_experiment,
)
from edgeflow.semigroup import DiscreteLaplacian


def brute_seminorm(field, alpha):
    """All-pairs oracle in plain Python on top of edge_distance."""
    g = field.grid
    cfg = g.cfg
    pts = []
    for idx in itertools.product(*(range(n) for n in g.spatial_shape)):
        x = max(g.x[idx[0]], 1e-300)
        y = tuple(g.base[i].nodes[idx[2 + i]] for i in range(len(g.base)))
        pts.append((idx, EdgePoint(x, y, g.link.nodes[idx[1]]), g.x[idx[0]]))
    best = 0.0
    for (i, p, xp), (j, q, xq) in itertools.product(pts, repeat=2):
        d = edge_distance(p, q, cfg) if i != j else 0.0
        if xp == 0.0 or xq == 0.0:
            # EdgePoint needs x > 0; recompute the tip distance from the formula
            dz = min(abs(p.z - q.z) % cfg.link.circumference,
                     cfg.link.circumference - abs(p.z - q.z) % cfg.link.circumference)
            dy2 = sum(min(abs(a - b) % L, L - abs(a - b) % L) ** 2
                      for a, b, L in zip(p.y, q.y, getattr(cfg.base, "lengths", ())))
            d = math.sqrt((xp - xq) ** 2 + (xp + xq) ** 2 * dz**2 + dy2)
        for n, tn in enumerate(field.times):
            for k, tk in enumerate(field.times):
                den = d**alpha + abs(tn - tk) ** (alpha / 2)
                if den > 0:
                    best = max(best, abs(field.values[(n, *i)] - field.values[(k, *j)]) / den)
    return best


@pytest.fixture(scope="module")
def small_grid():
    cfg = EdgeConfig(1, Circle.from_cone_angle(math.pi / 6), FlatTorus((1.5,)))
    return make_grid(cfg, 4, 2.0, n_link=3, n_base=3)


def random_field(grid, rng, nt=3):
    times = np.linspace(0, 0.2, nt)
    vals = grid.tip_consistent(rng.standard_normal((nt, *grid.spatial_shape)))
    return SpaceTimeField(vals, grid, times)


def test_seminorm_matches_brute_force(small_grid, rng):
    f = random_field(small_grid, rng)
    assert holder_seminorm(f, 0.4) == pytest.approx(brute_seminorm(f, 0.4), rel=1e-12)


def test_static_linear_field_brute_force(cone6):
    g = make_grid(cone6, 12, 1.0, n_link=3)
    f = SpaceTimeField.from_function(lambda t, x, z: x + 0 * z, g, [0.0])
    assert holder_seminorm(f, 0.5) == pytest.approx(brute_seminorm(f, 0.5), rel=1e-12)


def test_sampled_scan_is_a_lower_bound(cone6, rng):
    g = make_grid(cone6, 20, n_link=5)
    times = np.linspace(0, 0.1, 6)
    f = SpaceTimeField.from_function(lambda t, x, z: np.sin(3 * x) * np.cos(2 * np.pi * z / 3.6) + t, g, times)
    exact = holder_seminorm(f, 0.3)
    sampled = holder_seminorm(f, 0.3, max_exact_points=10)
    assert sampled <= exact * (1 + 1e-12)
    assert sampled >= 0.9 * exact


def test_constant_field(cone6):
    g = make_grid(cone6, 8)
    f = SpaceTimeField(np.full((4, *g.spatial_shape), -2.5), g, np.linspace(0, 0.1, 4))
    rep = holder_norm(f, 0.3)
    assert (rep.sup_norm, rep.seminorm_alpha, rep.norm_alpha) == (2.5, 0.0, 2.5)
    # iterated Laplacians amplify round-off by ~N^2 per level, so stop at k = 2
    for k in (1, 2):
        assert higher_holder_norm(f, k, 0.3) == pytest.approx(2.5, rel=1e-6)


def test_alpha_domain(cone6):
    g = make_grid(cone6, 4)
    f = SpaceTimeField(np.zeros((1, *g.spatial_shape)), g, [0.0])
    for a in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(DomainError):
            holder_norm(f, a)


@settings(max_examples=30, deadline=None)
@given(st.floats(-50, 50), st.integers(0, 2**31 - 1))
def test_homogeneity(c, seed):
    cfg = EdgeConfig(1, Circle.from_cone_angle(math.pi / 6))
    g = make_grid(cfg, 6, n_link=3)
    f = random_field(g, np.random.default_rng(seed))
    a = holder_norm(c * f, 0.35).norm_alpha
    b = abs(c) * holder_norm(f, 0.35).norm_alpha
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_triangle_and_product_inequalities(seed):
    cfg = EdgeConfig(1, Circle.from_cone_angle(math.pi / 6))
    g = make_grid(cfg, 6, n_link=3)
    rng = np.random.default_rng(seed)
    u, v = random_field(g, rng), random_field(g, rng)
    nu, nv = holder_norm(u, 0.5), holder_norm(v, 0.5)
    assert holder_norm(u + v, 0.5).norm_alpha <= nu.norm_alpha + nv.norm_alpha + 1e-12
    bound = nu.sup_norm * nv.norm_alpha + nv.sup_norm * nu.norm_alpha
    assert holder_norm(u * v, 0.5).norm_alpha <= bound + 1e-12


def test_divergence_detector():
    """u = x^0.25 is not 0.5-Hölder: the grid seminorm grows by >= 2^0.25 per halving."""
    cfg = EdgeConfig(1, Circle.from_cone_angle(math.pi / 6))
    semis = []
    for n in (8, 16, 32, 64, 128):
        g = make_grid(cfg, n, 1.0)
        f = SpaceTimeField.from_function(lambda t, x, z: x**0.25 + 0 * z, g, [0.0])
        semis.append(holder_seminorm(f, 0.5))
    growth = np.array(semis[1:]) / np.array(semis[:-1])
    assert np.all(growth >= 2**0.25 * (1 - 1e-12))


def test_smooth_field_does_not_diverge():
    cfg = EdgeConfig(1, Circle.from_cone_angle(math.pi / 6))
    semis = []
    for n in (8, 16, 32, 64):
        g = make_grid(cfg, n, 1.0)
        semis.append(holder_seminorm(SpaceTimeField.from_function(lambda t, x, z: x**2 + 0 * z, g, [0.0]), 0.5))
    assert semis[-1] / semis[0] < 1.05


# derivative set and higher norms ---------------------------------------------------

def test_derivatives_of_x_squared(cone6):
    g = make_grid(cone6, 20)
    f = SpaceTimeField.from_function(lambda t, x, z: x**2 + 0 * z + 0 * t, g, np.linspace(0, 0.1, 3))
    d = edge_derivative_set(f)
    assert set(d) == {"dt", "laplacian", "dx"}
    np.testing.assert_allclose(d["dx"].values[:, :-1, 0], np.broadcast_to(2 * g.x[:-1], (3, g.n_x - 1)), atol=1e-12)
    assert d["dx"].values[0, -1, 0] == 0.0  # Neumann cap
    np.testing.assert_allclose(d["laplacian"].values[:, 1:-1], -4.0, rtol=1e-10)
    assert np.abs(d["dt"].values).max() < 1e-12


def test_derivative_set_labels(torus_cone):
    g = make_grid(torus_cone, 6, n_link=3, n_base=3)
    f = SpaceTimeField(np.zeros((3, *g.spatial_shape)), g, [0, 0.1, 0.2])
    d = edge_derivative_set(f)
    assert set(d) == {"dt", "laplacian", "dx", "dz_over_x", "dy0"}
    assert all(np.all(v.values == 0) for v in d.values())


def test_derivative_set_needs_resolution(cone6):
    g = make_grid(cone6, 6)
    with pytest.raises(InvalidInputError):
        edge_derivative_set(SpaceTimeField(np.zeros((2, *g.spatial_shape)), g, [0, 0.1]))


def test_link_derivative_first_order_at_first_node(cone6):
    L = cone6.link.circumference
    errs = []
    for n in (10, 20, 40):
        g = make_grid(cone6, n, 1.0, n_link=5)
        f = SpaceTimeField.from_function(lambda t, x, z: x**2 * np.sin(2 * np.pi * z / L), g, [0.0])
        got = g.d_link_over_x(f.values)[0, 1]
        want = g.x[1] * (2 * np.pi / L) * np.cos(2 * np.pi * g.link.nodes / L)
        errs.append(np.abs(got - want).max())
    assert max(errs) < 1e-12


def test_higher_norm_decomposition(cone6):
    """k = 1: ||u|| + ||d_t u|| + ||Delta u|| + ||d_x u|| with each term brute forced."""
    g = make_grid(cone6, 10)
    lap = DiscreteLaplacian(g)
    f = SpaceTimeField.from_function(lambda t, x, z: x**2 + 0 * z, g, [0.0])
    terms = [f, f.like(lap.apply(f.values)), f.like(g.d_x(f.values))]
    expected = sum(np.abs(t.values).max() + brute_seminorm(t, 0.5) for t in terms)
    assert higher_holder_norm(f, 1, 0.5, lap) == pytest.approx(expected, rel=1e-12)


def test_time_derivative_term(cone6):
    g = make_grid(cone6, 8)
    times = np.linspace(0, 0.2, 5)
    f = SpaceTimeField.from_function(lambda t, x, z: t + 0 * x, g, times)
    extra = higher_holder_norm(f, 1, 0.3) - holder_norm(f, 0.3).norm_alpha
    assert extra == pytest.approx(1.0, abs=1e-12)


def test_norms_nondecreasing_in_k(cone6, rng):
    g = make_grid(cone6, 8, n_link=3)
    f = random_field(g, rng, nt=4)
    rep = full_report(f, 0.3, max_k=3)
    vals = [rep.norm_alpha] + [rep.higher_norms[k] for k in (1, 2, 3)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert rep.to_dict()["higher_norms"]["1"] == rep.higher_norms[1]


# Schauder ratios -------------------------------------------------------------------------

def bump(t, x, z):
    return np.exp(-(((x - 0.5) / 0.15) ** 2)) + 0 * z + 0 * t


def test_schauder_zero_forcing_is_degenerate(cone6):
    rows = schauder_ratio_experiment(lambda t, x, z: 0 * x + 0 * t, 0.3, 0, cone6, refinements=(1,), n_radial=8, n_time=8)
    assert rows[0]["degenerate"] and rows[0]["ratio_2k_plus_2"] is None


def test_schauder_needs_alpha_below_alpha0(cone6):
    with pytest.raises(FeasibilityError):
        schauder_ratio_experiment(bump, 0.8, 0, cone6, refinements=(1,))
    with pytest.raises(FeasibilityError):
        schauder_ratio_experiment(bump, 0.3, 0, EdgeConfig(1, Circle(2 * math.pi)), refinements=(1,))


def test_schauder_bump_ratios_settle(cone6):
    rows = schauder_ratio_experiment(bump, 0.3, 0, cone6, refinements=(1, 2))
    for key in ("ratio_2k_plus_2", "ratio_sqrt_t"):
        a, b = rows[0][key], rows[1][key]
        assert abs(b - a) / a <= 0.2


def test_schauder_critical_stress_case_bounded(cone6):
    # x^{alpha0/2} phi_1(z): just inside the critical regularity
    a0 = math.sqrt(3) - 1
    L = cone6.link.circumference
    rows = schauder_ratio_experiment(lambda t, x, z: x ** (a0 / 2) * np.cos(2 * np.pi * z / L) + 0 * t,
                                     0.3, 0, cone6, refinements=(1, 2), n_link=3)
    r = [row["ratio_2k_plus_2"] for row in rows]
    assert all(np.isfinite(r)) and r[1] / r[0] < 1.5
