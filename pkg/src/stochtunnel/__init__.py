"""Tunneling times from Nelson-type stochastic paths across a square barrier
with optical absorption or two-channel coupling."""

from .errors import (ConfigError, NumericalGuardError, StochTunnelError)
from .wavefield import BarrierSpec, PacketSpec, QuadratureSpec, WaveField
from .channels import ChannelField, ChannelSpec
from .dynamics import StepConfig, run_backward, run_ensemble

__version__ = "0.1.0"

__all__ = [
    "BarrierSpec", "ChannelField", "ChannelSpec", "ConfigError", "NumericalGuardError",
    "PacketSpec", "QuadratureSpec", "StepConfig", "StochTunnelError", "WaveField",
    "run_backward", "run_ensemble",
]
