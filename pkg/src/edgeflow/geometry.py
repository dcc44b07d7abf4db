"""Rigid incomplete edge metrics ``dx^2 + h_B + x^2 kappa`` in declarative form.

Only product geometries are modelled: an isolated cone (``b = 0``) over a round
sphere or circle link, or a flat torus times such a cone.  The Laplacian is the
nonnegative (geometer's) one throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Union

import numpy as np

from .errors import DomainError, InvalidInputError, UnsupportedGeometryError

__all__ = [
    "RoundSphere",
    "Circle",
    "ExplicitSpectrum",
    "Point",
    "FlatTorus",
    "PerturbationDecay",
    "EdgeConfig",
    "EdgePoint",
    "link_distance",
    "edge_distance",
    "scal_rigid",
    "LaplacianCoefficients",
    "laplacian_coefficients",
    "conformal_scal",
]


@dataclass(frozen=True)
class RoundSphere:
    """Round sphere ``S^dim`` of radius ``radius``; points are unit vectors in R^(dim+1)."""

    radius: float
    dim: int

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidInputError(f"sphere radius must be > 0, got {self.radius}")
        if self.dim < 1:
            raise InvalidInputError(f"sphere dimension must be >= 1, got {self.dim}")

    @property
    def scal_kappa(self) -> float:
        return self.dim * (self.dim - 1) / self.radius**2

    @property
    def volume(self) -> float:
        n = self.dim
        return 2 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2) * self.radius**n

    def rescaled(self, c: float) -> "RoundSphere":
        """Link with metric ``c^-2 kappa``."""
        return RoundSphere(self.radius / c, self.dim)


@dataclass(frozen=True)
class Circle:
    """Circle of circumference ``circumference``; points are arclength coordinates."""

    circumference: float
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if not self.circumference > 0:
            raise InvalidInputError(
                f"circle circumference must be > 0, got {self.circumference}"
            )

    @classmethod
    def from_cone_angle(cls, theta: float) -> "Circle":
        """Circle whose first eigenvalue is ``cot(theta)^2``.

        The metric ``c^2 dz^2`` on ``[0, 2 pi)`` with ``c = tan(theta)`` has
        ``lambda_1 = 1/c^2``, i.e. circumference ``2 pi tan(theta)``.
        """
        if not 0 < theta < math.pi / 2:
            raise InvalidInputError(f"cone angle must lie in (0, pi/2), got {theta}")
        return cls(2 * math.pi * math.tan(theta))

    @property
    def cone_angle(self) -> float:
        return math.atan(self.circumference / (2 * math.pi))

    @property
    def scal_kappa(self) -> float:
        return 0.0

    @property
    def volume(self) -> float:
        return self.circumference

    def rescaled(self, c: float) -> "Circle":
        return Circle(self.circumference / c)


@dataclass(frozen=True)
class ExplicitSpectrum:
    """Link known only through its Laplace spectrum.

    ``scal_kappa`` is optional; when unknown the curvature obstruction is
    reported as unsatisfied.
    """

    eigenvalues: tuple
    dim: int
    multiplicities: tuple | None = None
    scal_kappa: float | None = None

    def __post_init__(self):
        ev = tuple(float(v) for v in self.eigenvalues)
        object.__setattr__(self, "eigenvalues", ev)
        if not ev or ev[0] != 0.0:
            raise InvalidInputError("explicit spectrum must start with eigenvalue 0")
        if any(b < a for a, b in zip(ev, ev[1:])):
            raise InvalidInputError("explicit spectrum must be nondecreasing")
        if self.multiplicities is None:
            object.__setattr__(self, "multiplicities", (1,) * len(ev))
        else:
            mult = tuple(int(m) for m in self.multiplicities)
            if len(mult) != len(ev) or any(m < 1 for m in mult):
                raise InvalidInputError("multiplicities must be positive, one per eigenvalue")
            object.__setattr__(self, "multiplicities", mult)
        if self.dim < 1:
            raise InvalidInputError("link dimension must be >= 1")

    def rescaled(self, c: float) -> "ExplicitSpectrum":
        scal = None if self.scal_kappa is None else self.scal_kappa * c**2
        return ExplicitSpectrum(
            tuple(c**2 * v for v in self.eigenvalues), self.dim, self.multiplicities, scal
        )


LinkSpec = Union[RoundSphere, Circle, ExplicitSpectrum]


@dataclass(frozen=True)
class Point:
    """Zero-dimensional base: an isolated conical singularity."""

    dim: int = field(default=0, init=False)

    @property
    def scal_base(self) -> float:
        return 0.0


@dataclass(frozen=True)
class FlatTorus:
    lengths: tuple

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.lengths)
        object.__setattr__(self, "lengths", lengths)
        if not lengths:
            raise InvalidInputError("flat torus needs at least one side length")
        if any(not v > 0 for v in lengths):
            raise InvalidInputError(f"torus side lengths must be > 0, got {lengths}")

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def scal_base(self) -> float:
        return 0.0


BaseSpec = Union[Point, FlatTorus]


class PerturbationDecay(str, Enum):
    """Decay of the perturbation tensor ``h`` at the edge; ``none`` means ``h = 0``."""

    NONE = "none"
    O_X2 = "O(x2)"
    O_X4 = "O(x4)"


@dataclass(frozen=True)
class EdgeConfig:
    """Dimensions and model data of the edge metric ``g0 = dx^2 + h_B + x^2 kappa``."""

    f: int
    link: LinkSpec
    base: BaseSpec = field(default_factory=Point)
    perturbation_decay: PerturbationDecay = PerturbationDecay.NONE

    def __post_init__(self):
        if self.f < 1:
            raise InvalidInputError(f"fiber dimension f must be >= 1, got {self.f}")
        if not isinstance(self.link, (RoundSphere, Circle, ExplicitSpectrum)):
            raise UnsupportedGeometryError(f"unsupported link {self.link!r}")
        if not isinstance(self.base, (Point, FlatTorus)):
            raise UnsupportedGeometryError(f"unsupported base {self.base!r}")
        if self.link.dim != self.f:
            raise InvalidInputError(
                f"link dimension {self.link.dim} does not match f = {self.f}"
            )
        object.__setattr__(
            self, "perturbation_decay", PerturbationDecay(self.perturbation_decay)
        )

    @property
    def b(self) -> int:
        return self.base.dim

    @property
    def m(self) -> int:
        return 1 + self.f + self.b

    @property
    def scal_kappa(self):
        return self.link.scal_kappa

    @property
    def scal_base(self) -> float:
        return self.base.scal_base


@dataclass(frozen=True)
class EdgePoint:
    """Point ``(x, y, z)`` in the singular neighbourhood.

    ``z`` is an arclength coordinate for circle links and a unit vector in
    ``R^(f+1)`` for sphere links.
    """

    x: float
    y: tuple = ()
    z: object = 0.0

    def __post_init__(self):
        if not 0 < self.x <= 1:
            raise DomainError(f"radial coordinate must lie in (0, 1], got {self.x}")
        object.__setattr__(self, "y", tuple(float(v) for v in np.atleast_1d(self.y)))


def _torus_delta(a: float, b: float, length: float) -> float:
    d = abs(a - b) % length
    return min(d, length - d)


def link_distance(z1, z2, link: LinkSpec) -> float:
    """Intrinsic geodesic distance between two link points."""
    if isinstance(link, Circle):
        return _torus_delta(float(z1), float(z2), link.circumference)
    if isinstance(link, RoundSphere):
        a = np.asarray(z1, dtype=float)
        b = np.asarray(z2, dtype=float)
        if a.shape != (link.dim + 1,) or b.shape != (link.dim + 1,):
            raise InvalidInputError(
                f"sphere link points must be unit vectors in R^{link.dim + 1}"
            )
        # atan2 form stays accurate for nearly coincident points
        cross = np.linalg.norm(a[:, None] * b[None, :] - b[:, None] * a[None, :]) / math.sqrt(2)
        return link.radius * math.atan2(cross, float(a @ b))
    raise UnsupportedGeometryError("explicit-spectrum links carry no point geometry")


def edge_distance(p: EdgePoint, q: EdgePoint, cfg: EdgeConfig) -> float:
    """``sqrt(|x-x'|^2 + (x+x')^2 |z-z'|^2 + |y-y'|^2)`` with geodesic link and base distances."""
    if len(p.y) != cfg.b or len(q.y) != cfg.b:
        raise InvalidInputError(
            f"points carry base coordinates of length {len(p.y)}/{len(q.y)}, expected b = {cfg.b}"
        )
    dz = link_distance(p.z, q.z, cfg.link)
    if isinstance(cfg.base, FlatTorus):
        dy2 = sum(
            _torus_delta(a, b, ell) ** 2 for a, b, ell in zip(p.y, q.y, cfg.base.lengths)
        )
    else:
        dy2 = 0.0
    return math.sqrt((p.x - q.x) ** 2 + (p.x + q.x) ** 2 * dz**2 + dy2)


def scal_rigid(cfg: EdgeConfig, x):
    """Scalar curvature ``x^-2 (scal(kappa) - f(f-1)) + scal(h_B)`` of the rigid metric."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("scal_rigid needs x > 0")
    scal_kappa = cfg.scal_kappa
    if scal_kappa is None:
        raise UnsupportedGeometryError("link scalar curvature is unknown")
    out = (scal_kappa - cfg.f * (cfg.f - 1)) / x**2 + cfg.scal_base
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LaplacianCoefficients:
    """Coefficients of ``Delta = a2 d_x^2 + a1 d_x + link_factor Delta_F + base_factor Delta_B``."""

    radial_second: float
    radial_first: float
    link_factor: float
    base_factor: float


def laplacian_coefficients(cfg: EdgeConfig, x: float) -> LaplacianCoefficients:
    if not x > 0:
        raise DomainError("laplacian_coefficients needs x > 0")
    return LaplacianCoefficients(
        radial_second=-1.0,
        radial_first=-cfg.f / x,
        link_factor=x**-2,
        base_factor=1.0,
    )


def conformal_scal(cfg: EdgeConfig, u, grad_sq, lap_u, scal0):
    """Scalar curvature of ``e^{2u} g`` from colocated samples of ``u``, ``|grad u|^2``, ``Delta u``.

    Works elementwise on arrays.
    """
    m = cfg.m
    u, grad_sq, lap_u, scal0 = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (u, grad_sq, lap_u, scal0))
    )
    out = np.exp(-2 * u) * (scal0 + 2 * (m - 1) * lap_u - (m - 2) * (m - 1) * grad_sq)
    if not np.all(np.isfinite(out)):
        raise InvalidInputError("conformal_scal received non-finite samples")
    return float(out) if out.ndim == 0 else out
