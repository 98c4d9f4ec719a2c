import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochtunnel.errors import CFLViolation, GridMismatch
from stochtunnel.fporacle import (GridDensity, compare_density, empty_grid, evolve_fp,
                                  evolve_wkb, histogram_density, max_stable_dt,
                                  mean_exit_time, peak_position, wavefunction_density,
                                  wkb_closed_form, wkb_velocity)
from stochtunnel.wavefield import BarrierSpec, WaveField, free_packet


def _gauss(grid, mu, s):
    x = grid.centers
    return GridDensity(grid.x_min, grid.x_max, np.exp(-(x - mu) ** 2 / (2 * s * s))
                       / math.sqrt(2 * math.pi * s * s))


def test_mass_conserved_without_source():
    g = _gauss(empty_grid(-20, 20, 800), 0.0, 1.0)
    dt = max_stable_dt(g.dx, 1.0)
    P = g
    for _ in range(200):
        P = evolve_fp(P, 1.0, 0.0, dt)
    assert P.mass() == pytest.approx(g.mass(), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(rate=st.floats(-2.0, 0.0), v=st.floats(-2.0, 2.0))
def test_uniform_source_decays_mass_exponentially(rate, v):
    g = _gauss(empty_grid(-30, 30, 600), 0.0, 2.0)
    dt = max_stable_dt(g.dx, abs(v))
    P = g
    for _ in range(50):
        P = evolve_fp(P, v, rate, dt)
    assert P.mass() == pytest.approx(g.mass() * math.exp(rate * 50 * dt), rel=1e-9)


def test_diffusion_matches_heat_kernel():
    grid = empty_grid(-20, 20, 1600)
    P = _gauss(grid, 0.0, 1.0)
    dt = max_stable_dt(grid.dx, 0.0)
    n = int(round(2.0 / dt))
    for _ in range(n):
        P = evolve_fp(P, 0.0, 0.0, dt)
    # variance 1 + (hbar/m) t
    ref = _gauss(grid, 0.0, math.sqrt(1 + n * dt))
    assert compare_density(P, ref) < 2e-3


def test_cfl_and_grid_guards():
    g = _gauss(empty_grid(-5, 5, 100), 0.0, 1.0)
    with pytest.raises(CFLViolation):
        evolve_fp(g, 0.0, 0.0, 1.0)
    with pytest.raises(CFLViolation):
        evolve_fp(g, 100.0, 0.0, max_stable_dt(g.dx, 0.0))
    with pytest.raises(GridMismatch):
        evolve_fp(g, np.zeros(5), 0.0, 1e-4)
    with pytest.raises(GridMismatch):
        compare_density(g, _gauss(empty_grid(-5, 5, 50), 0, 1))


def test_backward_direction_reverses_transport():
    g = _gauss(empty_grid(-20, 20, 800), 0.0, 1.0)
    dt = max_stable_dt(g.dx, 1.0)
    P = g
    for _ in range(400):
        P = evolve_fp(P, 1.0, 0.0, dt, "backward")
    assert peak_position(P) == pytest.approx(-400 * dt, abs=0.05)
    assert P.t == pytest.approx(-400 * dt)


@pytest.mark.parametrize("U0", [0.0, 0.5])
def test_wkb_grid_solution_matches_closed_form(U0):
    barrier = BarrierSpec(2.5, U0, 6.0)
    grid = empty_grid(-6.0, 8.0, 1400)
    c = wkb_velocity(barrier, 0.5)
    t = -6.0 / c
    num = evolve_wkb(barrier, 0.5, grid, t)
    ref = wkb_closed_form(barrier, 0.5, t, grid)
    assert compare_density(num, ref) < 0.015 * ref.mass()
    assert num.mass() == pytest.approx(math.exp(-2 * U0 * abs(t)), rel=1e-3)
    # the peak leaves x = d and reaches x = 0 at t = -t_c
    assert peak_position(ref) == pytest.approx(0.0, abs=0.05)


def test_wkb_velocity_includes_absorption_factor():
    assert wkb_velocity(BarrierSpec(2.5, 0.0, 6.0), 0.5) == pytest.approx(2.0)
    assert wkb_velocity(BarrierSpec(2.5, 0.5, 6.0), 0.5) > 2.0


def test_mean_exit_time_constant_drift():
    x = np.linspace(0, 60, 6001)
    T = mean_exit_time(x, np.full(x.size, -0.8))[0]
    assert T[np.searchsorted(x, 3.0)] == pytest.approx(3.0 / 0.8, rel=1e-6)


def test_mean_exit_time_pure_diffusion_in_a_box():
    # T(x) = x (2L - x) / (2D), D = 1/2; the reflecting end is first order in h
    x = np.linspace(0, 4, 4001)
    T = mean_exit_time(x, np.zeros(x.size))[0]
    assert T[2000] == pytest.approx(2.0 * 6.0, rel=1e-3)


def test_histogram_density_normalisation(rng):
    grid = empty_grid(-5, 5, 50)
    h = histogram_density(rng.normal(size=10000), grid, 20000)
    assert h.mass() == pytest.approx(0.5, abs=1e-3)


def test_wavefunction_density_of_free_packet(broad_packet):
    field = WaveField(BarrierSpec(0.0, 0.0, 3.0), broad_packet)
    grid = empty_grid(-60, 20, 800)
    P = wavefunction_density(field, grid, 10.0)
    ref = np.abs(free_packet(broad_packet, grid.centers, 10.0)) ** 2
    assert np.max(np.abs(P.values - ref)) < 1e-3 * ref.max()
    assert P.coarsen(10).mass() == pytest.approx(P.mass())
    with pytest.raises(GridMismatch):
        P.coarsen(7)
