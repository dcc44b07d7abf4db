"""Exception hierarchy shared across the package."""


class EdgeFlowError(Exception):
    """Base class for all package errors."""


class InvalidInputError(EdgeFlowError, ValueError):
    """Inputs are inconsistent with each other or with the configuration."""


class DomainError(EdgeFlowError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class UnsupportedGeometryError(EdgeFlowError):
    """The requested link/base variant is not handled by this operation."""


class FeasibilityError(EdgeFlowError):
    """The edge configuration fails the feasibility audit."""


class TruncationError(EdgeFlowError):
    """A series truncation cannot meet the requested tail tolerance."""

    def __init__(self, message, required_modes=None):
        super().__init__(message)
        self.required_modes = required_modes


class NumericalFailureError(EdgeFlowError):
    """A numerical procedure did not converge; carries its refinement trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class NoConvergenceError(EdgeFlowError):
    """An iterative solver exhausted its budget."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = list(log or [])


class ConfigError(EdgeFlowError, ValueError):
    """Configuration document failed validation; ``errors`` lists every violation."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
