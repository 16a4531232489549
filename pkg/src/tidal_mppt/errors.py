"""Exception types shared across the package."""

from __future__ import annotations


class TidalError(Exception):
    """Base class for all package errors."""


class DomainError(TidalError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConvergenceError(TidalError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context


class InvalidPolarError(TidalError, ValueError):
    """A foil polar is malformed or was queried outside its angle grid."""


class DivergenceError(TidalError):
    """Network training blew up."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class SimulationFault(TidalError):
    """A closed-loop run left the physically meaningful region."""

    def __init__(self, message: str, time_s: float, state: dict):
        super().__init__(f"{message} at t={time_s:.6f} s; state={state}")
        self.time_s = time_s
        self.state = state


class ControllerFault(TidalError):
    """MPPT controller bookkeeping was violated (e.g. time went backwards)."""


class ConfigError(TidalError, ValueError):
    """Scenario or CLI configuration is invalid."""


class MetricsError(TidalError, ValueError):
    """A metric could not be computed from the given series."""
