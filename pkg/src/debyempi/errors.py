"""Exception hierarchy shared by all stages."""


class DebyeMPIError(Exception):
    """Base class for all package errors."""


class DomainError(DebyeMPIError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(DebyeMPIError, ValueError):
    """Inconsistent or invalid configuration (grids, fractions, manifests)."""


class ConditioningError(DomainError):
    """The relaxation recurrence is numerically singular (alpha too close to 1)."""


class NumericalError(DebyeMPIError, RuntimeError):
    """A solver broke down, e.g. CG met non-positive curvature."""
