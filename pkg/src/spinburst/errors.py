"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration and parameter problems
exit 2, integrator failures exit 3, invariant violations exit 4.
"""

from __future__ import annotations


class SpinburstError(Exception):
    """Base class for package errors."""


class ParameterError(SpinburstError, ValueError):
    """A physical or numerical parameter is out of its documented domain."""


class CapacityError(SpinburstError):
    """Requested system size exceeds what a solver is built for."""


class ConfigError(SpinburstError):
    """A run configuration failed validation."""


class IntegrationError(SpinburstError):
    """The ODE integrator failed before reaching t_max."""

    def __init__(self, message: str, last_good_time: float | None = None):
        super().__init__(message)
        self.last_good_time = last_good_time


class InvariantViolation(SpinburstError):
    """A physics invariant broke beyond its abort tolerance mid-run."""

    def __init__(self, message: str, snapshot: dict | None = None):
        super().__init__(message)
        self.snapshot = snapshot or {}


class ClosureGapError(SpinburstError):
    """A moment shape reached the factorizer that the closure cannot expand."""
