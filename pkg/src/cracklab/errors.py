"""Exception taxonomy used across the package."""


class CracklabError(Exception):
    """Base class for all package errors."""


class DomainError(CracklabError):
    """A point lies outside the validity region of an operation."""


class ConstructionError(CracklabError):
    """An object could not be built (invalid geometry, degenerate mesh, ...)."""


class NumericalError(CracklabError):
    """A numerical procedure failed (solver stagnation, singular Jacobian, ...)."""


class AccuracyError(CracklabError):
    """A result is available but its estimated error exceeds its contract."""


class ConfigError(CracklabError):
    """Invalid or missing configuration."""
