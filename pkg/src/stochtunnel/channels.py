"""Two coupled channels sharing a square barrier V and a real coupling U.

The coupled equations decouple in the rotated basis psi_pm = (psi_1 +- psi_2)/sqrt(2),
each of which sees the single barrier V0 +- U0.  The incident packet starts
entirely in channel 1, so psi_+ = psi_- = packet/sqrt(2) before the collision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NodeRegion
from .wavefield import (BarrierSpec, PacketSpec, QuadratureSpec, WaveField, compute_kappa,
                        nelson_drifts)

SQRT_HALF = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class ChannelSpec:
    V0: float
    U0: float
    d: float
    packet: PacketSpec
    m: float = 1.0
    hbar: float = 1.0

    def coupling(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x > 0) & (x < self.d), self.U0, 0.0)

    def rotated_barrier(self, sign: int) -> BarrierSpec:
        return BarrierSpec(self.V0 + sign * self.U0, 0.0, self.d, self.m, self.hbar)


def kappa_pm(spec: ChannelSpec, E: float, sign: int):
    """kappa_pm = sqrt(2m(V0 +- U0 - E))/hbar; imaginary branch when propagating."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return compute_kappa(spec.rotated_barrier(sign), E)


class ChannelField:
    def __init__(self, spec: ChannelSpec, quad: QuadratureSpec | None = None):
        self.spec = spec
        half_packet = spec.packet.scaled(SQRT_HALF)
        quad = quad or QuadratureSpec.around(spec.packet)
        self.plus_field = WaveField(spec.rotated_barrier(+1), half_packet, quad)
        self.minus_field = WaveField(spec.rotated_barrier(-1), half_packet, quad)
        self.density_bound = 0.5 * (math.sqrt(self.plus_field.density_bound)
                                    + math.sqrt(self.minus_field.density_bound)) ** 2
        self.density_floor = 1e-12 * self.density_bound

    @property
    def d(self) -> float:
        return self.spec.d

    def components(self, x, t: float):
        """(psi_1, psi_1', psi_2, psi_2') at the points x."""
        pp, dp = self.plus_field.psi_and_dpsi(x, t)
        pm, dm = self.minus_field.psi_and_dpsi(x, t)
        return ((pp + pm) * SQRT_HALF, (dp + dm) * SQRT_HALF,
                (pp - pm) * SQRT_HALF, (dp - dm) * SQRT_HALF)


def rotate(psi_1, psi_2):
    """(psi_1, psi_2) -> (psi_+, psi_-)."""
    return (psi_1 + psi_2) * SQRT_HALF, (psi_1 - psi_2) * SQRT_HALF


def unrotate(psi_plus, psi_minus):
    return (psi_plus + psi_minus) * SQRT_HALF, (psi_plus - psi_minus) * SQRT_HALF


def _check_channel(i: int) -> None:
    if i not in (1, 2):
        raise ValueError("channel index must be 1 or 2")


def _scalar(x_in, arr):
    return arr.reshape(()).item() if np.ndim(x_in) == 0 else arr


def channel_psi(field: ChannelField, i: int, x, t: float):
    _check_channel(i)
    p1, _, p2, _ = field.components(x, t)
    return _scalar(x, p1 if i == 1 else p2)


def jump_rate_from_values(psi_i, psi_j, v_ij, hbar: float = 1.0):
    """W_(i->j) = -(2/hbar) Im(psi_i^* V_ij psi_j) / |psi_i|^2."""
    psi_i = np.asarray(psi_i)
    return -2.0 / hbar * np.imag(np.conj(psi_i) * v_ij * np.asarray(psi_j)) / np.abs(psi_i) ** 2


def jump_rate_W(field: ChannelField, i: int, x, t: float):
    """Signed rate W_(i->j) for leaving channel i at (x, t)."""
    _check_channel(i)
    p1, _, p2, _ = field.components(x, t)
    psi_i, psi_j = (p1, p2) if i == 1 else (p2, p1)
    if np.any(np.abs(psi_i) ** 2 <= field.density_floor):
        raise NodeRegion(f"|psi_{i}|^2 below density floor at t={t:.6g}")
    W = jump_rate_from_values(psi_i, psi_j, field.spec.coupling(x), field.spec.hbar)
    return _scalar(x, np.asarray(W))


def channel_drift(field: ChannelField, i: int, x, t: float, direction: str = "forward"):
    _check_channel(i)
    p1, d1, p2, d2 = field.components(x, t)
    p, q = (p1, d1) if i == 1 else (p2, d2)
    if np.any(np.abs(p) ** 2 <= field.density_floor):
        raise NodeRegion(f"|psi_{i}|^2 below density floor at t={t:.6g}")
    b, bs = nelson_drifts(p, q, field.spec.hbar, field.spec.m)
    out = b if direction == "forward" else bs
    return _scalar(x, np.asarray(out))
