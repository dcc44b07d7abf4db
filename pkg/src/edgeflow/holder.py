"""Parabolic Hölder norms of sampled space-time functions on the edge grid.

The seminorm is a maximum of ``|u(p,t) - u(p',t')| / (d(p,p')^a + |t-t'|^(a/2))``
over sample pairs, with ``d`` the edge distance.  Up to ``max_exact_points``
space-time samples every pair is scanned; above that a fixed-seed random pair
set is scanned together with all nearest-neighbour pairs, which is where the
quotient of a resolved field peaks.  Grid norms bound the continuum norm from
below.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .errors import DomainError, FeasibilityError, InvalidInputError
from .grid import Grid, SpaceTimeField, make_grid
from .semigroup import DiscreteLaplacian
from .spectral import check_feasibility

__all__ = [
    "HolderReport",
    "holder_seminorm",
    "holder_norm",
    "edge_derivative_set",
    "higher_holder_norm",
    "schauder_ratio_experiment",
]

# numba probes for TBB first and warns when the installed one is too old; it
# then falls back to another threading layer, so the warning is noise
warnings.filterwarnings("ignore", message=".*TBB.*", category=numba.NumbaWarning)

MAX_EXACT_POINTS = 50_000
RANDOM_PAIRS = 1_000_000


@numba.njit(cache=True)
def _spatial_dist(p, q, px, pz, py, ylen, zdist):
    dz = zdist[pz[p], pz[q]]
    d2 = (px[p] - px[q]) ** 2 + (px[p] + px[q]) ** 2 * dz * dz
    for i in range(py.shape[1]):
        dy = abs(py[p, i] - py[q, i]) % ylen[i]
        dy = min(dy, ylen[i] - dy)
        d2 += dy * dy
    return math.sqrt(d2)


@numba.njit(parallel=True, cache=True)
def _all_pairs(vals, px, pz, py, ylen, zdist, tpow, alpha):
    P, nt = vals.shape
    best = np.zeros(P)
    for p in numba.prange(P):
        m = 0.0
        for q in range(p, P):
            da = _spatial_dist(p, q, px, pz, py, ylen, zdist) ** alpha
            for n in range(nt):
                v = vals[p, n]
                start = n + 1 if q == p else 0
                for k in range(start, nt):
                    den = da + tpow[n, k]
                    if den > 0.0:
                        r = abs(v - vals[q, k]) / den
                        if r > m:
                            m = r
        best[p] = m
    return best.max()


@numba.njit(cache=True)
def _listed_pairs(vals, px, pz, py, ylen, zdist, times, alpha, ip, it, jp, jt):
    m = 0.0
    for s in range(ip.size):
        p, n, q, k = ip[s], it[s], jp[s], jt[s]
        den = _spatial_dist(p, q, px, pz, py, ylen, zdist) ** alpha + abs(times[n] - times[k]) ** (alpha / 2)
        if den > 0.0:
            r = abs(vals[p, n] - vals[q, k]) / den
            if r > m:
                m = r
    return m


def _neighbour_pairs(shape_st):
    """Index pairs differing by one step along any single axis (space or time)."""
    idx = np.arange(int(np.prod(shape_st))).reshape(shape_st)
    a, b = [], []
    for ax in range(len(shape_st)):
        lo = [slice(None)] * len(shape_st)
        hi = [slice(None)] * len(shape_st)
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        a.append(idx[tuple(lo)].ravel())
        b.append(idx[tuple(hi)].ravel())
    return np.concatenate(a), np.concatenate(b)


def holder_seminorm(field: SpaceTimeField, alpha: float, max_exact_points: int = MAX_EXACT_POINTS,
                    seed: int = 0) -> float:
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    grid = field.grid
    px, pz, py, ylen, zdist = grid.coordinates()
    nt = field.times.size
    vals = np.ascontiguousarray(field.values.reshape(nt, -1).T)
    P = vals.shape[0]
    if P * nt <= max_exact_points:
        tpow = np.abs(field.times[:, None] - field.times[None, :]) ** (alpha / 2)
        return float(_all_pairs(vals, px, pz, py, ylen, zdist, tpow, alpha))
    # sampled scan: random pairs plus every nearest-neighbour pair
    rng = np.random.default_rng(seed)
    total = P * nt
    ra = rng.integers(0, total, RANDOM_PAIRS)
    rb = rng.integers(0, total, RANDOM_PAIRS)
    na, nb = _neighbour_pairs((nt, *grid.spatial_shape))
    # flat space-time index is (time, point); vals is laid out (point, time)
    a = np.concatenate([ra, na])
    b = np.concatenate([rb, nb])
    it, ip = np.divmod(a, P)
    jt, jp = np.divmod(b, P)
    return float(_listed_pairs(vals, px, pz, py, ylen, zdist, field.times, alpha,
                               ip, it, jp, jt))


@dataclass
class HolderReport:
    sup_norm: float
    seminorm_alpha: float
    norm_alpha: float
    alpha: float
    higher_norms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["higher_norms"] = {str(k): v for k, v in self.higher_norms.items()}
        return out


def holder_norm(field: SpaceTimeField, alpha: float, **kwargs) -> HolderReport:
    """Sup norm plus parabolic ``alpha``-seminorm."""
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if field.values.size == 0:
        raise InvalidInputError("empty field")
    sup = float(np.max(np.abs(field.values)))
    semi = holder_seminorm(field, alpha, **kwargs)
    return HolderReport(sup, semi, sup + semi, alpha)


def _laplacian_for(grid: Grid, lap: DiscreteLaplacian | None) -> DiscreteLaplacian:
    if lap is not None:
        return lap
    cached = getattr(grid, "_laplacian", None)
    if cached is None:
        cached = DiscreteLaplacian(grid)
        grid._laplacian = cached
    return cached


def _time_derivative(field: SpaceTimeField) -> np.ndarray:
    if field.is_static:
        return np.zeros_like(field.values)
    return np.gradient(field.values, field.times, axis=0, edge_order=2)


def edge_derivative_set(field: SpaceTimeField, lap: DiscreteLaplacian | None = None) -> dict:
    """Discrete ``d_t``, ``Delta``, ``d_x``, ``x^-1 d_z`` and ``d_y`` of ``field``.

    These are ``x^-1 V`` for the edge generators ``x d_x, x d_y, d_z``.
    """
    grid = field.grid
    if grid.n_x < 3 or field.times.size == 2 or grid.link.n == 2:
        raise InvalidInputError("need at least 3 nodes in every resolved direction")
    lap = _laplacian_for(grid, lap)
    out = {"dt": field.like(_time_derivative(field)),
           "laplacian": field.like(lap.apply(field.values))}
    for name, vals in grid.edge_gradients(field.values).items():
        out[name] = field.like(vals)
    return out


def higher_holder_norm(field: SpaceTimeField, k: int, alpha: float,
                       lap: DiscreteLaplacian | None = None, **kwargs) -> float:
    """``||u||_a + sum_{1<=j<k} ||Delta^j u||_a + sum_{j<k} sum_X ||X Delta^j u||_a``.

    ``k = 0`` gives the plain ``alpha`` norm.
    """
    if k < 0:
        raise DomainError("order k must be >= 0")
    total = holder_norm(field, alpha, **kwargs).norm_alpha
    lap = _laplacian_for(field.grid, lap)
    power = field
    for j in range(k):
        if j > 0:
            total += holder_norm(power, alpha, **kwargs).norm_alpha
        for deriv in edge_derivative_set(power, lap).values():
            total += holder_norm(deriv, alpha, **kwargs).norm_alpha
        power = power.like(lap.apply(power.values))
    return total


def full_report(field: SpaceTimeField, alpha: float, max_k: int = 1,
                lap: DiscreteLaplacian | None = None) -> HolderReport:
    report = holder_norm(field, alpha)
    for k in range(1, max_k + 1):
        report.higher_norms[k] = higher_holder_norm(field, k, alpha, lap)
    return report


def schauder_ratio_experiment(forcing, alpha: float, k: int, cfg, refinements=(1, 2, 4),
                              n_radial: int = 16, n_time: int = 16, T: float = 0.1,
                              grading: float = 2.0, n_link: int = 1, n_base: int = 1) -> list[dict]:
    """Norm ratios of ``u = int_0^t exp(-(t-s) Delta) F ds`` across grid refinements.

    ``forcing`` is a callable ``F(t, x, z, *y)``; each refinement factor ``r``
    resamples it with ``r * n_radial`` radial intervals and ``r * n_time`` time
    steps.  Reported ratios are ``||u||_{2k+2+a} / ||F||_{2k+a}`` and
    ``||u||_{2k+a} / (sqrt(T) ||F||_{2k+a})``.
    """
    report = check_feasibility(cfg)
    if not report.gap_ok or report.alpha0 <= 0:
        raise FeasibilityError("experiment is meaningless for alpha0 <= 0")
    if not alpha < report.alpha0:
        raise FeasibilityError(f"alpha = {alpha} must be below alpha0 = {report.alpha0:.6g}")
    from .semigroup import heat_convolve

    rows = []
    for r in refinements:
        grid = make_grid(cfg, r * n_radial, grading, n_link, n_base)
        lap = DiscreteLaplacian(grid)
        times = np.linspace(0.0, T, r * n_time + 1)
        F = SpaceTimeField.from_function(forcing, grid, times)
        fnorm = higher_holder_norm(F, k, alpha, lap)
        row = {"refinement": r, "n_radial": r * n_radial, "n_time": r * n_time,
               "forcing_norm": fnorm}
        if fnorm == 0.0:
            row.update(ratio_2k_plus_2=None, ratio_sqrt_t=None, degenerate=True)
        else:
            u = heat_convolve(lap, F)
            row.update(
                ratio_2k_plus_2=higher_holder_norm(u, k + 1, alpha, lap) / fnorm,
                ratio_sqrt_t=higher_holder_norm(u, k, alpha, lap) / (math.sqrt(T) * fnorm),
                degenerate=False,
            )
        rows.append(row)
    return rows
