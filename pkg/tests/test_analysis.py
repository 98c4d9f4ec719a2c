import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochtunnel.analysis import (TimeStatistics, arrival_time, channel_times,
                                  conditional_mean, hesitating_time, interacting_time,
                                  passing_time, wkb_times)
from stochtunnel.channels import ChannelSpec
from stochtunnel.dynamics import PathRecord
from stochtunnel.errors import EmptyEnsemble, NoCrossing
from stochtunnel.wavefield import BarrierSpec, PacketSpec


def _path(x, dt=0.1):
    x = np.asarray(x, dtype=float)
    return PathRecord(0, -dt * np.arange(x.size), x, np.zeros(x.size, int))


def test_monotone_crossing():
    p = _path([3.0, 2.5, 2.0, 1.5, 1.0, 0.5, -0.1])
    assert passing_time(p, 3.0) == pytest.approx(0.5)
    assert interacting_time(p, 3.0) == pytest.approx(passing_time(p, 3.0))
    assert hesitating_time(p, 3.0) == pytest.approx(0.0, abs=1e-12)


def test_return_past_exit_restarts_passing_clock():
    p = _path([2.9, 2.0, 3.2, 3.5, 2.8, 1.0, -0.2])
    # last sample at or beyond d is index 3; crossing at index 6
    assert passing_time(p, 3.0) == pytest.approx(0.2)
    assert interacting_time(p, 3.0) == pytest.approx(0.4)
    assert hesitating_time(p, 3.0) == pytest.approx(0.2)


def test_no_crossing():
    with pytest.raises(NoCrossing):
        passing_time(_path([3.0, 2.0, 1.0]), 3.0)
    assert interacting_time(_path([-1.0, -2.0]), 3.0) == 0.0


def test_zero_width_barrier():
    assert passing_time(_path([0.0, -0.1]), 0.0) == 0.0


def test_deterministic_drift_limit():
    b, dt, d = 1.7, 1e-3, 3.0
    n = int(d / (b * dt)) + 2
    x = d - b * dt * np.arange(n)
    assert passing_time(_path(x, dt), d) == pytest.approx(d / b, abs=dt)


@settings(max_examples=80)
@given(st.lists(st.floats(-1.0, 5.0), min_size=2, max_size=60))
def test_time_decomposition(xs):
    x = np.array([2.99] + xs + [-0.5])
    p = _path(x)
    tp, ti = passing_time(p, 3.0), interacting_time(p, 3.0)
    assert tp >= 0 and ti >= tp - 1e-12
    assert hesitating_time(p, 3.0) == pytest.approx(ti - tp)


def test_statistics_from_paths():
    paths = [_path([3.0, 1.0, -0.1]), _path([3.0, 2.0, 1.0, -0.1]), _path([3.0, 2.0])]
    st_ = TimeStatistics.from_paths(paths, 3.0)
    assert st_.n == 2 and st_.n_flagged == 1
    assert st_.mean() == pytest.approx(0.15)
    assert st_.flagged_fraction == pytest.approx(1 / 3)
    with pytest.raises(EmptyEnsemble):
        TimeStatistics(np.empty(0), np.empty(0)).mean()


def test_stderr_scaling(rng):
    v = rng.exponential(2.0, 80000)
    a = TimeStatistics(v[:20000], v[:20000]).stderr()
    b = TimeStatistics(v[:40000], v[:40000]).stderr()
    assert a / b == pytest.approx(math.sqrt(2), rel=0.2)


def test_conditional_mean(rng):
    x = rng.normal(size=1000)
    lab = rng.integers(0, 2, 1000)
    assert conditional_mean(x, lab, np.ones_like, 1) == 1.0
    assert conditional_mean(x, lab, lambda y: y, [0, 1]) == pytest.approx(np.mean(x))
    assert conditional_mean(x, lab, lambda y: y, 0) == pytest.approx(np.mean(x[lab == 0]))
    with pytest.raises(EmptyEnsemble):
        conditional_mean(x, np.zeros(1000, int), lambda y: y, 1)


def test_wkb_reference_times():
    r = wkb_times(BarrierSpec(2.5, 0.0, 3.0), 0.5)
    assert r.t_c == pytest.approx(1.5) and r.t_d == pytest.approx(9.0)
    assert r.t_classical is None
    r1 = wkb_times(BarrierSpec(2.5, 1.0, 3.0), 0.5)
    assert r1.t_c == pytest.approx(1.213, abs=2e-3)
    assert wkb_times(BarrierSpec(0.2, 0.0, 3.0), 0.5).t_c is None


@given(V0=st.floats(0.6, 6.0), U0=st.floats(0.0, 2.0), d=st.floats(0.5, 10.0))
def test_diffusion_time_exceeds_current_time_for_thick_barriers(V0, U0, d):
    r = wkb_times(BarrierSpec(V0, U0, d), 0.5)
    kbar = math.sqrt(2 * (V0 - 0.5))
    if kbar * d > 1:
        assert r.t_d > r.t_c


def test_channel_reference_times():
    packet = PacketSpec()
    r = channel_times(ChannelSpec(2.5, 2.2, 3.0, packet), 0.5)
    assert r.t_classical == pytest.approx(4.743, abs=1e-3) and r.t_c is None
    r = channel_times(ChannelSpec(2.5, 1.5, 6.0, packet), 0.5)
    assert r.t_c == pytest.approx(6.0) and r.t_classical is None


def test_arrival_time():
    assert arrival_time(PacketSpec(), 3.0) == pytest.approx(253.0)
