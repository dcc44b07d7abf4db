"""Solver grid: graded radial nodes, Fourier link/base nodes, space-time fields.

Field arrays have shape ``(n_times, n_x, n_z, *n_y)``.  Node ``x = 0`` is the
cone tip; its ``n_z`` copies always carry the same value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidInputError, UnsupportedGeometryError
from .geometry import Circle, EdgeConfig, FlatTorus, RoundSphere

__all__ = ["FourierAxis", "ConstantAxis", "Grid", "SpaceTimeField", "make_grid"]


class FourierAxis:
    """Periodic axis of length ``length`` with ``n = 2K + 1`` equispaced nodes.

    The real Fourier basis is orthonormal for the nodal trapezoid weights, so
    modal transforms are exact for trigonometric polynomials of degree ``<= K``.
    """

    def __init__(self, length: float, n: int):
        if n < 1 or n % 2 == 0:
            raise InvalidInputError(f"Fourier axes need an odd node count, got {n}")
        self.length = float(length)
        self.n = n
        self.nodes = self.length * np.arange(n) / n
        self.weights = np.full(n, self.length / n)
        K = (n - 1) // 2
        omega = 2 * math.pi * np.arange(1, K + 1) / self.length
        cols = [np.full(n, 1 / math.sqrt(self.length))]
        dcols = [np.zeros(n)]
        eig = [0.0]
        amp = math.sqrt(2 / self.length)
        for w in omega:
            cols += [amp * np.cos(w * self.nodes), amp * np.sin(w * self.nodes)]
            dcols += [-w * amp * np.sin(w * self.nodes), w * amp * np.cos(w * self.nodes)]
            eig += [w * w, w * w]
        self.basis = np.column_stack(cols)
        self.eigenvalues = np.array(eig)
        # nodal derivative: d/dz of the modal interpolant
        self.derivative = np.column_stack(dcols) @ self.basis.T * self.weights[None, :]

    def distance_table(self) -> np.ndarray:
        d = np.abs(self.nodes[:, None] - self.nodes[None, :]) % self.length
        return np.minimum(d, self.length - d)


class ConstantAxis:
    """Single-node axis: only the constant mode of the link is retained."""

    def __init__(self, volume: float):
        self.n = 1
        self.length = float(volume)
        self.nodes = np.zeros(1)
        self.weights = np.array([volume], dtype=float)
        self.basis = np.array([[1 / math.sqrt(volume)]])
        self.eigenvalues = np.zeros(1)
        self.derivative = np.zeros((1, 1))

    def distance_table(self) -> np.ndarray:
        return np.zeros((1, 1))


def _apply_axis(mat: np.ndarray, u: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(mat, u, axes=([1], [axis])), 0, axis)


@dataclass(eq=False)
class Grid:
    """Tensor grid for the product geometry ``[0, 1]_x x F x B``."""

    cfg: EdgeConfig
    x: np.ndarray
    link: object
    base: list = field(default_factory=list)
    grading: float = 2.0

    @property
    def n_x(self) -> int:
        return self.x.size

    @property
    def spatial_shape(self) -> tuple:
        return (self.n_x, self.link.n, *(a.n for a in self.base))

    @property
    def n_points(self) -> int:
        return int(np.prod(self.spatial_shape))

    @cached_property
    def base_eigenvalues(self) -> np.ndarray:
        """Sum of base Laplace eigenvalues over the tensor product of base modes."""
        if not self.base:
            return np.zeros(())
        lam = np.zeros([a.n for a in self.base])
        for i, a in enumerate(self.base):
            shape = [1] * len(self.base)
            shape[i] = a.n
            lam = lam + a.eigenvalues.reshape(shape)
        return lam

    @cached_property
    def radial_derivative(self) -> np.ndarray:
        """Second-order ``d/dx`` on the graded nodes.

        One-sided at the tip, reflected (zero) at the Neumann cap ``x = 1``.
        """
        x = self.x
        n = x.size
        D = np.zeros((n, n))
        h1, h2 = x[1] - x[0], x[2] - x[1]
        D[0, :3] = [-(2 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2))]
        for i in range(1, n - 1):
            h1, h2 = x[i] - x[i - 1], x[i + 1] - x[i]
            D[i, i - 1 : i + 2] = [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))]
        return D

    def to_modal(self, u: np.ndarray, first_axis: int = 1) -> np.ndarray:
        """Nodal values -> link/base modal coefficients along the trailing axes."""
        c = _apply_axis((self.link.basis * self.link.weights[:, None]).T, u, first_axis + 1)
        for i, a in enumerate(self.base):
            c = _apply_axis((a.basis * a.weights[:, None]).T, c, first_axis + 2 + i)
        return c

    def from_modal(self, c: np.ndarray, first_axis: int = 1) -> np.ndarray:
        u = _apply_axis(self.link.basis, c, first_axis + 1)
        for i, a in enumerate(self.base):
            u = _apply_axis(a.basis, u, first_axis + 2 + i)
        return u

    def d_x(self, u: np.ndarray) -> np.ndarray:
        return _apply_axis(self.radial_derivative, u, 1)

    def d_link_over_x(self, u: np.ndarray) -> np.ndarray:
        """``x^-1 d_z u``; zero at the tip, where regular fields have no link dependence."""
        du = _apply_axis(self.link.derivative, u, 2)
        shape = [1] * u.ndim
        shape[1] = self.n_x
        inv = np.zeros(self.n_x)
        inv[1:] = 1 / self.x[1:]
        return du * inv.reshape(shape)

    def d_base(self, u: np.ndarray, i: int) -> np.ndarray:
        return _apply_axis(self.base[i].derivative, u, 3 + i)

    def edge_gradients(self, u: np.ndarray) -> dict:
        """The rescaled edge derivatives ``d_x``, ``x^-1 d_z``, ``d_y``."""
        out = {"dx": self.d_x(u)}
        if self.link.n > 1:
            out["dz_over_x"] = self.d_link_over_x(u)
        for i, a in enumerate(self.base):
            if a.n > 1:
                out[f"dy{i}"] = self.d_base(u, i)
        return out

    def grad_sq(self, u: np.ndarray) -> np.ndarray:
        """``|grad u|^2`` for the rigid metric, built from the edge derivatives."""
        return sum(g * g for g in self.edge_gradients(u).values())

    def tip_consistent(self, u: np.ndarray) -> np.ndarray:
        """Project so that all tip copies hold their link average."""
        u = np.array(u, dtype=float, copy=True)
        w = self.link.weights / self.link.weights.sum()
        mean = np.tensordot(u[:, 0], w, axes=([1], [0]))
        u[:, 0] = np.expand_dims(mean, 1)
        return u

    def coordinates(self):
        """Flattened point coordinates for pair scans: ``x``, link index, base coordinates."""
        shape = self.spatial_shape
        idx = np.indices(shape).reshape(len(shape), -1)
        px = self.x[idx[0]]
        pz = idx[1].astype(np.int64)
        if self.base:
            py = np.column_stack([self.base[i].nodes[idx[2 + i]] for i in range(len(self.base))])
            ylen = np.array([a.length for a in self.base])
        else:
            py = np.zeros((px.size, 0))
            ylen = np.zeros(0)
        return px, pz, py, ylen, self.link.distance_table()


def make_grid(cfg: EdgeConfig, n_radial: int = 40, grading: float = 2.0,
              n_link: int = 1, n_base: int = 1) -> Grid:
    """Graded radial nodes ``x_i = (i/N)^p`` plus link and base node sets."""
    if n_radial < 3:
        raise InvalidInputError("need at least 3 radial intervals")
    x = (np.arange(n_radial + 1) / n_radial) ** grading
    link = cfg.link
    if isinstance(link, Circle):
        link_axis = FourierAxis(link.circumference, n_link)
    elif n_link == 1:
        volume = link.volume if isinstance(link, RoundSphere) else 1.0
        link_axis = ConstantAxis(volume)
    else:
        raise UnsupportedGeometryError(
            f"only link-constant fields (n_link = 1) are supported for {type(link).__name__} links"
        )
    base_axes = []
    if isinstance(cfg.base, FlatTorus):
        base_axes = [FourierAxis(ell, n_base) for ell in cfg.base.lengths]
    return Grid(cfg, x, link_axis, base_axes, grading)


@dataclass(eq=False)
class SpaceTimeField:
    """Samples ``values[n, i, j, ...]`` of a function at ``times[n]`` on ``grid``."""

    values: np.ndarray
    grid: Grid
    times: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        if self.values.shape != (self.times.size, *self.grid.spatial_shape):
            raise InvalidInputError(
                f"field shape {self.values.shape} does not match "
                f"{(self.times.size, *self.grid.spatial_shape)}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("field values must be finite")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("times must be increasing")

    @classmethod
    def from_function(cls, fn, grid: Grid, times) -> "SpaceTimeField":
        """Sample ``fn(t, x, z, *y)`` with broadcasting over the tensor grid."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        axes = [times, grid.x, grid.link.nodes] + [a.nodes for a in grid.base]
        mesh = np.meshgrid(*axes, indexing="ij", sparse=True)
        vals = np.broadcast_to(fn(*mesh), (times.size, *grid.spatial_shape))
        return cls(grid.tip_consistent(vals), grid, times)

    def like(self, values) -> "SpaceTimeField":
        return SpaceTimeField(values, self.grid, self.times)

    def __add__(self, other):
        return self.like(self.values + (other.values if isinstance(other, SpaceTimeField) else other))

    def __sub__(self, other):
        return self.like(self.values - (other.values if isinstance(other, SpaceTimeField) else other))

    def __mul__(self, other):
        return self.like(self.values * (other.values if isinstance(other, SpaceTimeField) else other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.values)

    @property
    def is_static(self) -> bool:
        return self.times.size == 1
