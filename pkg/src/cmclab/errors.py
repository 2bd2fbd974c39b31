"""Exception types shared across the package."""

from __future__ import annotations


class CmclabError(Exception):
    """Base class for all package-specific errors."""


class DomainError(CmclabError, ValueError):
    """A point was queried inside a metric's excluded region."""

    def __init__(self, message: str, radius: float | None = None):
        super().__init__(message)
        self.radius = radius


class CapacityError(CmclabError, ValueError):
    """Quadrature grid too coarse for the requested harmonic degree."""


class EmbeddingError(CmclabError, ValueError):
    """Graph violates the C1 smallness bound needed for embeddedness."""

    def __init__(self, message: str, c1_norm: float | None = None):
        super().__init__(message)
        self.c1_norm = c1_norm


class GeometryError(CmclabError, RuntimeError):
    """Degenerate induced metric or normal at some grid node."""

    def __init__(self, message: str, node_index: int | None = None):
        super().__init__(message)
        self.node_index = node_index


class NormalizationError(CmclabError, RuntimeError):
    """Moment normalization fixed point failed to contract."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class PreconditionError(CmclabError, ValueError):
    """An operation was called outside its stated domain of validity."""


class UndefinedRatioError(PreconditionError):
    """Denominator of a measured ratio vanishes (e.g. round spheres)."""


class FitError(CmclabError, RuntimeError):
    """A regression/extrapolation had degenerate input."""


class ConfigError(CmclabError, ValueError):
    """Bad configuration file, key, value, or command usage."""
