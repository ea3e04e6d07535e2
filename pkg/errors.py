"""
Exception types for the axisymmetric simulator and certificate harness.

Every error carries a diagnostic category so the command line front end can
map it to an exit code without inspecting messages:
- config:    malformed or out-of-range configuration values (exit 2)
- artifacts: missing or unreadable run directories (exit 2)
- numerical: solver failures and step-size violations (exit 3)
"""

from typing import Optional


class SimulationError(Exception):
    """Base class for all errors raised by this package."""

    category = "internal"


class ConfigError(SimulationError, ValueError):
    """A configuration value is missing, unknown or out of range."""

    category = "config"

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class DimensionError(SimulationError, ValueError):
    """Array shape does not match the grid."""

    category = "config"


class DomainError(SimulationError, ValueError):
    """Parameters fall outside the range where an operation is defined."""

    category = "config"


class UndefinedRatioError(DomainError):
    """A normalized quantity has a vanishing denominator."""


class ContractError(SimulationError, ValueError):
    """An operation was called with inputs violating its preconditions."""

    category = "config"


class ArtifactError(SimulationError, OSError):
    """A run directory is missing files or holds unreadable data."""

    category = "artifacts"


class NumericalError(SimulationError, RuntimeError):
    """A numerical procedure failed to deliver a usable result."""

    category = "numerical"

    def __init__(self, message: str, t: Optional[float] = None, step: Optional[int] = None,
                 residual: Optional[float] = None):
        super().__init__(message)
        self.t = t
        self.step = step
        self.residual = residual
        # Filled by the run loop so callers can persist what was computed before the failure
        self.series = None


class StepSizeError(NumericalError):
    """The advective CFL condition is violated for the requested time step."""
