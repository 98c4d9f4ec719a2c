"""Analytic scattering states and Gaussian wave packets for a square barrier.

The barrier occupies 0 < x < d with complex potential ``V0 - i*U0`` (``U0 > 0``
absorbs).  Stationary states are matched analytically at both edges and the
packet is the Gauss-Legendre quadrature of ``A(k) phi_k(x) exp(-i E t / hbar)``.
Everything needed by the Nelson drifts (psi and its x-derivative) is evaluated
in closed form per region.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DegenerateDenominator, NodeRegion

DENSITY_FLOOR_FACTOR = 1e-12


@dataclass(frozen=True)
class BarrierSpec:
    V0: float
    U0: float = 0.0
    d: float = 3.0
    m: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("barrier width d must be >= 0")
        if self.m <= 0 or self.hbar <= 0:
            raise ValueError("m and hbar must be positive")

    def energy(self, k):
        return self.hbar**2 * np.asarray(k) ** 2 / (2 * self.m)

    def wavenumber(self, E: float) -> float:
        return math.sqrt(2 * self.m * E) / self.hbar


@dataclass(frozen=True)
class PacketSpec:
    """Gaussian momentum amplitude centred on ``k0``.

    ``norm_C`` defaults to the value that normalises the incident packet in
    position space at t = 0, ``((2 pi)^(3/2) sigma)^(-1/2)``.
    """

    k0: float = 1.0
    sigma: float = 0.01
    x_center0: float = -250.0
    norm_C: float | None = None

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.norm_C is None:
            object.__setattr__(self, "norm_C", ((2 * math.pi) ** 1.5 * self.sigma) ** -0.5)

    @property
    def width_x(self) -> float:
        """Standard deviation of |psi|^2 in position at t = 0."""
        return 1.0 / (2.0 * self.sigma)

    def scaled(self, factor: float) -> "PacketSpec":
        return PacketSpec(self.k0, self.sigma, self.x_center0, self.norm_C * factor)


@dataclass(frozen=True)
class QuadratureSpec:
    k_min: float
    k_max: float
    n_nodes: int = 257
    rule: Literal["gauss-legendre", "midpoint"] = "gauss-legendre"

    def __post_init__(self):
        if not self.k_min < self.k_max:
            raise ValueError("k_min must be below k_max")
        if self.n_nodes < 64:
            raise ValueError("n_nodes must be >= 64")
        if self.rule not in ("gauss-legendre", "midpoint"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")

    @classmethod
    def around(cls, packet: PacketSpec, half_width: float = 12.0, n_nodes: int = 257,
               rule: str = "gauss-legendre") -> "QuadratureSpec":
        # k must stay positive: only left-incident states are in the superposition
        k_min = max(packet.k0 - half_width * packet.sigma, 1e-3 * packet.k0)
        return cls(k_min, packet.k0 + half_width * packet.sigma, n_nodes, rule)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_nodes
        half = 0.5 * (self.k_max - self.k_min)
        mid = 0.5 * (self.k_max + self.k_min)
        if self.rule == "gauss-legendre":
            s, w = np.polynomial.legendre.leggauss(n)
        else:
            s = -1.0 + (2.0 * np.arange(n) + 1.0) / n
            w = np.full(n, 2.0 / n)
        return mid + half * s, half * w


@dataclass(frozen=True)
class ScatteringState:
    k: float
    kappa: complex
    R: complex
    T: complex
    C: complex
    D: complex
    B: complex

    def phi(self, x: float, d: float) -> complex:
        return complex(_phi_scalar(self, x, d)[0])

    def dphi(self, x: float, d: float) -> complex:
        return complex(_phi_scalar(self, x, d)[1])


def _phi_scalar(s: ScatteringState, x: float, d: float):
    k, kap = s.k, s.kappa
    if x < 0:
        e = cmath.exp(1j * k * x)
        return e + s.R / e, 1j * k * (e - s.R / e)
    if x <= d:
        ep, em = cmath.exp(kap * x), cmath.exp(-kap * x)
        return s.C * ep + s.D * em, kap * (s.C * ep - s.D * em)
    e = cmath.exp(1j * k * x)
    return s.T * e, 1j * k * s.T * e


def _complex(re, im) -> np.ndarray:
    # built component-wise so that im == -0.0 survives (selects the -i branch)
    re = np.asarray(re, dtype=float)
    out = np.empty(np.broadcast(re, np.asarray(im)).shape, dtype=complex)
    out.real = re
    out.imag = im
    return out


def compute_kappa(barrier: BarrierSpec, E):
    """Principal root of 2m(V0 - i U0 - E)/hbar^2 (Re >= 0, Im <= 0)."""
    E = np.asarray(E, dtype=float)
    arg = _complex(2 * barrier.m * (barrier.V0 - E), -2.0 * barrier.m * barrier.U0)
    kap = np.sqrt(arg) / barrier.hbar
    return complex(kap) if kap.ndim == 0 else kap


def _coefficients(barrier: BarrierSpec, k: np.ndarray):
    k = np.asarray(k, dtype=float)
    d = barrier.d
    kap = np.asarray(compute_kappa(barrier, barrier.energy(k)), dtype=complex)
    if np.any(kap == 0):
        raise DegenerateDenominator("kappa = 0 (E equals the real barrier height)")
    sh, ch = np.sinh(kap * d), np.cosh(kap * d)
    den = 2 * k * kap * ch + 1j * (kap**2 - k**2) * sh
    if np.any(np.abs(den) < 1e-300):
        raise DegenerateDenominator("matching denominator underflowed")
    B = 1.0 / den
    R = B * (-1j * (kap**2 + k**2) * sh)
    T = B * (2 * k * kap * np.exp(-1j * k * d))
    C = B * (k * (kap + 1j * k) * np.exp(-kap * d))
    D = B * (k * (kap - 1j * k) * np.exp(kap * d))
    return kap, R, T, C, D, B


def stationary_coefficients(barrier: BarrierSpec, k: float) -> ScatteringState:
    if k <= 0:
        raise ValueError("k must be positive")
    kap, R, T, C, D, B = (complex(v[0]) for v in _coefficients(barrier, np.array([float(k)])))
    return ScatteringState(float(k), kap, R, T, C, D, B)


def matching_residual(state: ScatteringState, d: float) -> float:
    """Largest mismatch of phi and phi' across x = 0 and x = d."""
    k, kap = state.k, state.kappa
    r = [
        (1 + state.R) - (state.C + state.D),
        1j * k * (1 - state.R) - kap * (state.C - state.D),
    ]
    ep, em, et = cmath.exp(kap * d), cmath.exp(-kap * d), cmath.exp(1j * k * d)
    r += [
        state.C * ep + state.D * em - state.T * et,
        kap * (state.C * ep - state.D * em) - 1j * k * state.T * et,
    ]
    return max(abs(v) for v in r)


def packet_amplitude(packet: PacketSpec, k):
    """Real Gaussian amplitude ``C exp(-(k0 - k)^2 / 4 sigma^2)``.

    The shift to ``x_center0`` is applied as a separate phase factor by the
    wave field, so this stays real and positive.
    """
    k = np.asarray(k, dtype=float)
    out = packet.norm_C * np.exp(-((packet.k0 - k) ** 2) / (4 * packet.sigma**2))
    return float(out) if out.ndim == 0 else out


class WaveField:
    """Quadrature superposition of stationary states for one barrier.

    Per-node coefficients are computed once at construction; evaluation is a
    pure function of (x, t).
    """

    def __init__(self, barrier: BarrierSpec, packet: PacketSpec,
                 quad: QuadratureSpec | None = None):
        self.barrier = barrier
        self.packet = packet
        self.quad = quad or QuadratureSpec.around(packet)
        k, w = self.quad.nodes()
        self.k = k
        self.weights = w
        self.E = barrier.energy(k)
        self.kappa, self.R, self.T, self.C, self.D, self.B = _coefficients(barrier, k)
        self.amp = w * packet_amplitude(packet, k) * np.exp(-1j * k * packet.x_center0)
        # static bound on max_x |psi|^2; |phi_k| <= 2 for these states
        bound = 2.0 * np.sum(np.abs(self.amp))
        self.density_bound = float(bound**2)
        self.density_floor = DENSITY_FLOOR_FACTOR * self.density_bound

    def state(self, n: int) -> ScatteringState:
        return ScatteringState(float(self.k[n]), complex(self.kappa[n]), complex(self.R[n]),
                               complex(self.T[n]), complex(self.C[n]), complex(self.D[n]),
                               complex(self.B[n]))

    @property
    def d(self) -> float:
        return self.barrier.d

    def node_weights(self, t: float, drop_energy: float = 0.0) -> np.ndarray:
        """Complex weights c_n(t); ``drop_energy`` removes a global phase."""
        return self.amp * np.exp(-1j * (self.E - drop_energy) * t / self.barrier.hbar)

    def psi_and_dpsi(self, x, t: float, chunk: int = 4096):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        c = self.node_weights(t)
        psi = np.empty(x.shape, dtype=complex)
        dpsi = np.empty(x.shape, dtype=complex)
        flat_x, flat_p, flat_d = x.ravel(), psi.ravel(), dpsi.ravel()
        for s in range(0, flat_x.size, chunk):
            p, q = self._eval(flat_x[s:s + chunk], c)
            flat_p[s:s + chunk] = p
            flat_d[s:s + chunk] = q
        return flat_p.reshape(x.shape), flat_d.reshape(x.shape)

    def _eval(self, x: np.ndarray, c: np.ndarray):
        d = self.d
        k, kap = self.k, self.kappa
        psi = np.zeros(x.shape, dtype=complex)
        dpsi = np.zeros(x.shape, dtype=complex)
        m1 = x < 0
        m3 = x > d
        m2 = ~(m1 | m3)
        if m1.any():
            e = np.exp(1j * np.outer(x[m1], k))
            inc = e @ c
            ref = (1.0 / e) @ (c * self.R)
            psi[m1] = inc + ref
            dpsi[m1] = e @ (1j * k * c) - (1.0 / e) @ (1j * k * c * self.R)
        if m2.any():
            ep = np.exp(np.outer(x[m2], kap))
            em = 1.0 / ep
            psi[m2] = ep @ (c * self.C) + em @ (c * self.D)
            dpsi[m2] = ep @ (c * kap * self.C) - em @ (c * kap * self.D)
        if m3.any():
            e = np.exp(1j * np.outer(x[m3], k))
            psi[m3] = e @ (c * self.T)
            dpsi[m3] = e @ (1j * k * c * self.T)
        return psi, dpsi


def _maybe_scalar(x_in, arr):
    return arr.reshape(()).item() if np.ndim(x_in) == 0 else arr


def psi(field: WaveField, x, t: float):
    p, _ = field.psi_and_dpsi(x, t)
    return _maybe_scalar(x, p)


def dpsi_dx(field: WaveField, x, t: float):
    _, q = field.psi_and_dpsi(x, t)
    return _maybe_scalar(x, q)


def density(field: WaveField, x, t: float):
    p, _ = field.psi_and_dpsi(x, t)
    return _maybe_scalar(x, np.abs(p) ** 2)


def nelson_drifts(psi_val, dpsi_val, hbar: float = 1.0, m: float = 1.0):
    """Forward and backward drifts from psi and its derivative.

    ``b = (hbar/m)(Im + Re) psi'/psi`` and ``b* = (hbar/m)(Im - Re) psi'/psi``.
    """
    z = np.asarray(dpsi_val) / np.asarray(psi_val)
    b = hbar / m * (z.imag + z.real)
    bs = hbar / m * (z.imag - z.real)
    if np.ndim(b) == 0:
        return float(b), float(bs)
    return b, bs


def _drifts_checked(field: WaveField, x, t: float):
    p, q = field.psi_and_dpsi(x, t)
    P = np.abs(p) ** 2
    low = P <= field.density_floor
    if low.any():
        where = np.atleast_1d(np.asarray(x, dtype=float)).ravel()[low.ravel()][0]
        raise NodeRegion(f"|psi|^2 below density floor at x={where:.6g}, t={t:.6g}")
    return nelson_drifts(p, q, field.barrier.hbar, field.barrier.m)


def drift_forward(field: WaveField, x, t: float):
    b, _ = _drifts_checked(field, x, t)
    return _maybe_scalar(x, np.asarray(b))


def drift_backward(field: WaveField, x, t: float):
    _, bs = _drifts_checked(field, x, t)
    return _maybe_scalar(x, np.asarray(bs))


def free_packet(packet: PacketSpec, x, t: float, hbar: float = 1.0, m: float = 1.0):
    """Closed-form free evolution of the Gaussian packet (no barrier)."""
    X = np.asarray(x, dtype=float) - packet.x_center0
    beta = hbar * t / (2 * m)
    a = 1.0 / (4 * packet.sigma**2) + 1j * beta
    k0 = packet.k0
    return (packet.norm_C * np.sqrt(np.pi / a)
            * np.exp(-((X - 2 * beta * k0) ** 2) / (4 * a))
            * np.exp(1j * (k0 * X - beta * k0**2)))


def norm_on_grid(field: WaveField, t: float, x_min: float, x_max: float, n: int = 20001) -> float:
    """Integral of |psi|^2 by Simpson's rule on a uniform grid."""
    from scipy.integrate import simpson

    x = np.linspace(x_min, x_max, n)
    return float(simpson(density(field, x, t), x=x))


def packet_extent(packet: PacketSpec, t: float, hbar: float = 1.0, m: float = 1.0,
                  n_widths: float = 8.0) -> tuple[float, float]:
    """Interval that holds the incident packet (free-evolution estimate)."""
    sx = packet.width_x * math.sqrt(1 + (hbar * t / (2 * m * packet.width_x**2)) ** 2)
    c = packet.x_center0 + hbar * packet.k0 * t / m
    return c - n_widths * sx, c + n_widths * sx
