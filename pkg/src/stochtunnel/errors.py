"""Exception types raised by the simulator."""

from __future__ import annotations


class StochTunnelError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(StochTunnelError):
    """Invalid or incomplete run configuration."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class NumericalGuardError(StochTunnelError):
    """A numerical safety guard tripped (CLI exit code 2)."""


class DegenerateDenominator(NumericalGuardError):
    pass


class NodeRegion(NumericalGuardError):
    """The wave function is below the density floor at the evaluation point."""


class StepTooLarge(NumericalGuardError):
    pass


class ClampExceeded(NumericalGuardError):
    pass


class CFLViolation(NumericalGuardError):
    pass


class GridMismatch(StochTunnelError):
    pass


class GridTooCoarse(NumericalGuardError):
    pass


class EmptyEnsemble(StochTunnelError):
    pass


class NoCrossing(NumericalGuardError):
    """Too many backward paths failed to reach x = 0 inside the run window."""
