"""Numerical laboratory for the Yamabe flow near incomplete edge singularities.

Modules
-------
geometry    rigid edge metrics, links, bases, distances and curvature
spectral    link spectra, indicial roots, the critical exponent and feasibility
heat_kernel Bessel-series heat kernel of the exact cone and its checks
grid        graded radial / Fourier link grids and space-time fields
semigroup   discrete Laplacian, exact heat propagator and Duhamel integrals
holder      parabolic Hölder norms and the Schauder ratio experiment
solver      Picard and implicit-Euler solvers for the conformal factor
config, cli experiment configs, presets and the command line
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DomainError,
    EdgeFlowError,
    FeasibilityError,
    InvalidInputError,
    NoConvergenceError,
    NumericalFailureError,
    TruncationError,
    UnsupportedGeometryError,
)
from .geometry import (  # noqa: E402
    Circle,
    EdgeConfig,
    EdgePoint,
    ExplicitSpectrum,
    FlatTorus,
    PerturbationDecay,
    Point,
    RoundSphere,
    conformal_scal,
    edge_distance,
    laplacian_coefficients,
    scal_rigid,
)
from .spectral import alpha0, check_feasibility, indicial_roots, link_eigenvalues  # noqa: E402
