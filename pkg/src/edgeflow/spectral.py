"""Link spectra, indicial roots, the critical Hölder exponent and the feasibility audit."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, InvalidInputError, UnsupportedGeometryError
from .geometry import (
    Circle,
    EdgeConfig,
    ExplicitSpectrum,
    FlatTorus,
    PerturbationDecay,
    Point,
    RoundSphere,
)

__all__ = [
    "LinkSpectrum",
    "FeasibilityReport",
    "sphere_multiplicity",
    "link_eigenvalues",
    "indicial_roots",
    "alpha0",
    "check_feasibility",
]


@dataclass(frozen=True)
class LinkSpectrum:
    """Distinct eigenvalues of the link Laplacian with their multiplicities."""

    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    source: object = None

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        mult = np.asarray(self.multiplicities, dtype=int)
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "multiplicities", mult)
        if ev.ndim != 1 or ev.shape != mult.shape or ev.size == 0:
            raise InvalidInputError("eigenvalues and multiplicities must be equal-length 1-d")
        if ev[0] != 0.0:
            raise InvalidInputError("first link eigenvalue must be exactly 0")
        if np.any(np.diff(ev) < 0):
            raise InvalidInputError("link eigenvalues must be nondecreasing")
        if np.any(mult < 1):
            raise InvalidInputError("multiplicities must be positive")
        if ev.size > 1 and not ev[1] > 0:
            raise InvalidInputError("link spectrum needs a positive gap lambda_1 > 0")

    def __len__(self):
        return self.eigenvalues.size

    @property
    def lambda1(self) -> float:
        if self.eigenvalues.size < 2:
            raise InvalidInputError("spectrum holds only the zero eigenvalue")
        return float(self.eigenvalues[1])


def sphere_multiplicity(k: int, n: int) -> int:
    """Dimension of degree-``k`` spherical harmonics on ``S^n``."""
    if k == 0:
        return 1
    return math.comb(k + n, n) - math.comb(k + n - 2, n)


def link_eigenvalues(link, count: int) -> LinkSpectrum:
    """First ``count`` distinct eigenvalues of the link Laplacian."""
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    k = np.arange(count)
    if isinstance(link, RoundSphere):
        f = link.dim
        ev = k * (k + f - 1) / link.radius**2
        mult = [sphere_multiplicity(int(j), f) for j in k]
    elif isinstance(link, Circle):
        ev = (2 * math.pi * k / link.circumference) ** 2
        mult = np.where(k == 0, 1, 2)
    elif isinstance(link, ExplicitSpectrum):
        if count > len(link.eigenvalues):
            raise InvalidInputError(
                f"explicit spectrum has {len(link.eigenvalues)} entries, {count} requested"
            )
        ev = np.asarray(link.eigenvalues[:count])
        mult = np.asarray(link.multiplicities[:count])
    else:
        raise UnsupportedGeometryError(f"no spectrum available for link {link!r}")
    return LinkSpectrum(ev, mult, link)


def indicial_roots(f: int, spectrum: LinkSpectrum, count: int | None = None) -> np.ndarray:
    """Roots ``-(f-1)/2 + sqrt((f-1)^2/4 + lambda)`` for the retained eigenvalues."""
    ev = spectrum.eigenvalues if count is None else spectrum.eigenvalues[:count]
    a = (f - 1) / 2
    # lambda / (sqrt(a^2 + lambda) + a): same value, no cancellation for small lambda
    return ev / (np.sqrt(a * a + ev) + a) if a > 0 else np.sqrt(ev)


def alpha0(f: int, lambda1: float) -> float:
    """Critical Hölder exponent ``-(f-1)/2 + sqrt((f-1)^2/4 + lambda1) - 1``.

    Evaluated as ``(lambda1 - f) / (sqrt((f-1)^2/4 + lambda1) + (f+1)/2)`` so that
    its sign is exactly that of ``lambda1 - f``.
    """
    if not lambda1 > 0:
        raise DomainError(f"lambda1 must be > 0, got {lambda1}")
    a = (f - 1) / 2
    return (lambda1 - f) / (math.sqrt(a * a + lambda1) + a + 1)


@dataclass
class Condition:
    name: str
    ok: bool
    note: str


@dataclass
class FeasibilityReport:
    lambda1: float
    gap_ok: bool
    obstruction_ok: bool
    alpha0: float
    rescale_hint: float
    conditions: list = field(default_factory=list)
    hypothesis_ok: bool = False

    @property
    def feasible(self) -> bool:
        return all(c.ok for c in self.conditions)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["feasible"] = self.feasible
        return out


def check_feasibility(cfg: EdgeConfig) -> FeasibilityReport:
    """Audit the five feasibility conditions plus the curvature obstruction.

    Conditions (ii)-(iv) are certified from the geometry variant: trivial
    product fibrations over a point or a flat torus.  Anything else is rejected.
    """
    if not isinstance(cfg.base, (Point, FlatTorus)):
        raise UnsupportedGeometryError(f"cannot certify base {cfg.base!r}")
    if not isinstance(cfg.link, (RoundSphere, Circle, ExplicitSpectrum)):
        raise UnsupportedGeometryError(f"cannot certify link {cfg.link!r}")

    spec = link_eigenvalues(cfg.link, 2)
    lam1 = spec.lambda1
    f = cfg.f
    gap_ok = lam1 > f
    scal_kappa = cfg.scal_kappa
    obstruction_ok = scal_kappa is not None and math.isclose(
        scal_kappa, f * (f - 1), rel_tol=1e-12, abs_tol=1e-12
    )
    a0 = alpha0(f, lam1)
    hint = math.sqrt(f / lam1)

    decay = cfg.perturbation_decay
    structural = "trivial product fibration " + (
        "over a point (isolated cone)" if isinstance(cfg.base, Point) else "over a flat torus"
    )
    conditions = [
        Condition("(i) |h| = O(x^2)", True, f"perturbation decay {decay.value}"),
        Condition("(ii) Riemannian submersion", True, structural),
        Condition("(iii) isospectral fibres", True, structural),
        Condition("(iv) fibrewise constants preserved", True, structural),
        Condition(
            "(v) Spec\\{0} > dim F",
            gap_ok,
            f"lambda_1 = {lam1:.12g} vs f = {f}" + ("" if gap_ok else f"; rescale with c > {hint:.6g}"),
        ),
    ]
    hypothesis_ok = obstruction_ok and decay in (PerturbationDecay.NONE, PerturbationDecay.O_X4)
    return FeasibilityReport(
        lambda1=lam1,
        gap_ok=gap_ok,
        obstruction_ok=obstruction_ok,
        alpha0=a0,
        rescale_hint=hint,
        conditions=conditions,
        hypothesis_ok=hypothesis_ok,
    )
