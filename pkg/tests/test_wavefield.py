import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochtunnel.errors import DegenerateDenominator, NodeRegion
from stochtunnel.wavefield import (BarrierSpec, QuadratureSpec, WaveField,
                                   compute_kappa, drift_backward, drift_forward,
                                   free_packet, matching_residual, nelson_drifts,
                                   norm_on_grid, packet_amplitude, psi,
                                   stationary_coefficients)


def test_kappa_examples():
    assert compute_kappa(BarrierSpec(2.5, 0.0), 0.5) == pytest.approx(2.0)
    kap = compute_kappa(BarrierSpec(2.5, 1.0), 0.5)
    assert kap.real == pytest.approx(2.058, abs=1e-3)
    assert kap.imag == pytest.approx(-0.486, abs=1e-3)
    # propagating branch below the barrier top
    assert compute_kappa(BarrierSpec(0.0, 0.0), 0.5) == pytest.approx(-1j)


@given(V0=st.floats(0.0, 5.0), U0=st.floats(0.0, 3.0), E=st.floats(0.01, 5.0))
def test_kappa_is_principal_root(V0, U0, E):
    kap = compute_kappa(BarrierSpec(V0, U0), E)
    assert kap.real >= 0 and kap.imag <= 0
    assert kap**2 == pytest.approx(complex(2 * (V0 - E), -2 * U0), abs=1e-9)


def test_kappa_zero_is_degenerate():
    with pytest.raises(DegenerateDenominator):
        stationary_coefficients(BarrierSpec(0.5, 0.0), 1.0)


def test_thick_barrier_transmission_matches_closed_form():
    # |T|^2 = 1 / (1 + (k^2 + kap^2)^2 sinh^2(kap d) / (4 k^2 kap^2))
    s = stationary_coefficients(BarrierSpec(2.5, 0.0, 3.0), 1.0)
    k, kap = 1.0, 2.0
    ref = 1.0 / (1 + (k**2 + kap**2) ** 2 * math.sinh(kap * 3) ** 2 / (4 * k**2 * kap**2))
    assert abs(s.T) ** 2 == pytest.approx(ref, rel=1e-12)


@settings(max_examples=60)
@given(V0=st.floats(0.0, 5.0), U0=st.floats(0.0, 2.0), d=st.floats(0.0, 6.0),
       k=st.floats(0.05, 3.0))
def test_matching_conditions_hold(V0, U0, d, k):
    barrier = BarrierSpec(V0, U0, d)
    if U0 == 0 and abs(V0 - barrier.energy(k)) < 1e-6:
        return
    s = stationary_coefficients(barrier, k)
    scale = 1.0 + abs(s.C) * abs(cmath.exp(s.kappa * d)) + abs(s.D)
    assert matching_residual(s, d) < 1e-10 * scale


@settings(max_examples=60)
@given(V0=st.floats(0.0, 5.0), d=st.floats(0.0, 6.0), k=st.floats(0.05, 3.0))
def test_real_barrier_is_unitary(V0, d, k):
    barrier = BarrierSpec(V0, 0.0, d)
    if abs(V0 - barrier.energy(k)) < 1e-6:
        return
    s = stationary_coefficients(barrier, k)
    assert abs(abs(s.R) ** 2 + abs(s.T) ** 2 - 1) < 1e-12


@settings(max_examples=40)
@given(U0=st.floats(0.01, 2.0), k=st.floats(0.2, 2.0))
def test_optical_barrier_absorbs(U0, k):
    s = stationary_coefficients(BarrierSpec(2.5, U0, 3.0), k)
    assert abs(s.R) ** 2 + abs(s.T) ** 2 < 1.0


def test_zero_width_is_transparent():
    s = stationary_coefficients(BarrierSpec(2.5, 0.3, 0.0), 1.0)
    assert abs(s.T - 1) < 1e-14 and abs(s.R) < 1e-14


def test_packet_amplitude_peak_and_decay(packet):
    assert packet_amplitude(packet, packet.k0) == pytest.approx(packet.norm_C)
    assert packet_amplitude(packet, packet.k0 + 12 * packet.sigma) < 1e-15 * packet.norm_C


def test_quadrature_integrates_polynomials():
    q = QuadratureSpec(0.5, 1.5, 64)
    k, w = q.nodes()
    assert np.sum(w * k**5) == pytest.approx((1.5**6 - 0.5**6) / 6, rel=1e-13)


def test_initial_packet_normalised(packet):
    field = WaveField(BarrierSpec(2.5, 0.0, 3.0), packet)
    assert norm_on_grid(field, 0.0, -650, 150, 40001) == pytest.approx(1.0, abs=1e-8)


def test_free_evolution_matches_closed_form(broad_packet):
    field = WaveField(BarrierSpec(0.0, 0.0, 3.0), broad_packet)
    x = np.linspace(-80, 60, 1401)
    for t in (0.0, 20.0, 45.0):
        got = psi(field, x, t)
        ref = free_packet(broad_packet, x, t)
        assert np.max(np.abs(got - ref)) < 1e-6


def test_norm_conserved_without_absorption(broad_packet):
    field = WaveField(BarrierSpec(2.5, 0.0, 3.0), broad_packet)
    for t in (10.0, 30.0, 45.0):
        assert norm_on_grid(field, t, -120, 80, 40001) == pytest.approx(1.0, abs=1e-6)


def test_absorption_reduces_norm(broad_packet):
    lossless = WaveField(BarrierSpec(2.5, 0.0, 3.0), broad_packet)
    lossy = WaveField(BarrierSpec(2.5, 0.5, 3.0), broad_packet)
    n0 = norm_on_grid(lossless, 45.0, -120, 80, 40001)
    n1 = norm_on_grid(lossy, 45.0, -120, 80, 40001)
    assert n1 < n0 - 1e-3


def test_drifts_of_plane_wave():
    # psi = e^{ikx}: b = b* = hbar k / m
    b, bs = nelson_drifts(np.exp(0.7j), 1j * 1.3 * np.exp(0.7j))
    assert b == pytest.approx(1.3) and bs == pytest.approx(1.3)


def test_drifts_of_decaying_exponential():
    # WKB interior psi ~ exp(-(kR - i kI) x): b* = kR + kI, b = kI - kR
    kR, kI = 2.058, 0.486
    p = np.exp(-(kR - 1j * kI) * 0.4)
    b, bs = nelson_drifts(p, -(kR - 1j * kI) * p)
    assert bs == pytest.approx(kR + kI) and b == pytest.approx(kI - kR)


def test_drift_raises_at_node(optical_field):
    far = optical_field.packet.x_center0 + 400.0   # no mass here at t = 0
    with pytest.raises(NodeRegion):
        drift_forward(optical_field, far, 0.0)
    with pytest.raises(NodeRegion):
        drift_backward(optical_field, far, 0.0)


def test_osmotic_velocity_is_log_gradient(broad_packet):
    field = WaveField(BarrierSpec(2.5, 0.0, 3.0), broad_packet)
    x, h, t = np.array([-31.0, -29.5, -28.0]), 1e-5, 2.0
    u = 0.5 * (drift_forward(field, x, t) - drift_backward(field, x, t))
    lnP = lambda y: np.log(np.abs(psi(field, y, t)) ** 2)
    assert np.allclose(u, 0.5 * (lnP(x + h) - lnP(x - h)) / (2 * h), rtol=1e-5)
