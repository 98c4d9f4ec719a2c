"""Tunneling-time estimators, conditional averages and reference times."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .channels import ChannelField, ChannelSpec
from .dynamics import (BackwardLaw, BackwardResult, PathRecord, StepConfig, default_dt,
                       run_backward)
from .errors import EmptyEnsemble, NoCrossing
from .wavefield import BarrierSpec, PacketSpec, QuadratureSpec, WaveField, compute_kappa

NO_CROSSING_WINDOW = 50.0     # backward window in units of the diffusion time


def _crossing_index(x: np.ndarray) -> int | None:
    hits = np.flatnonzero(x <= 0.0)
    return int(hits[0]) if hits.size else None


def _sample_weights(t: np.ndarray) -> np.ndarray:
    if t.size < 2:
        return np.zeros(t.size)
    w = np.abs(np.diff(t))
    return np.append(w, w[-1])


def passing_time(path: PathRecord, d: float) -> float:
    """Backward first passage from the exit face to the entry face.

    Measured from the last sample at or beyond x = d to the first sample at or
    below x = 0, so that returns to the exit face restart the clock.
    """
    c = _crossing_index(path.x)
    if c is None:
        raise NoCrossing(f"path {path.path_id} never reaches x <= 0")
    beyond = np.flatnonzero(path.x[:c] >= d)
    start = int(beyond[-1]) + 1 if beyond.size else 0
    return float(abs(path.t[c] - path.t[start]))


def interacting_time(path: PathRecord, d: float) -> float:
    """Time spent inside 0 <= x <= d, up to the first crossing of x = 0 if any."""
    c = _crossing_index(path.x)
    stop = c if c is not None else path.x.size
    x = path.x[:stop]
    w = _sample_weights(path.t)[:stop]
    return float(np.sum(w[(x >= 0) & (x < d)]))


def hesitating_time(path: PathRecord, d: float) -> float:
    return interacting_time(path, d) - passing_time(path, d)


def _mean_or_nan(st: "TimeStatistics") -> float:
    return st.mean() if st.n else float("nan")


def _stderr(v: np.ndarray) -> float:
    return float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")


@dataclass
class TimeStatistics:
    """Per-path passing, interacting and hesitating times of the crossing paths."""

    tau_p: np.ndarray
    tau_int: np.ndarray
    n_flagged: int = 0

    @property
    def tau_h(self) -> np.ndarray:
        return self.tau_int - self.tau_p

    @property
    def n(self) -> int:
        return int(self.tau_p.size)

    @property
    def flagged_fraction(self) -> float:
        total = self.n + self.n_flagged
        return self.n_flagged / total if total else 0.0

    def mean(self, which: str = "tau_p") -> float:
        v = getattr(self, which)
        if v.size == 0:
            raise EmptyEnsemble("no crossing paths")
        return float(np.mean(v))

    def stderr(self, which: str = "tau_p") -> float:
        return _stderr(getattr(self, which))

    def histogram(self, which: str = "tau_p"):
        """Counts and Freedman-Diaconis bin edges."""
        v = getattr(self, which)
        edges = np.histogram_bin_edges(v, bins="fd")
        counts, _ = np.histogram(v, edges)
        return counts, edges

    @classmethod
    def from_backward(cls, result: BackwardResult, label: int | None = None) -> "TimeStatistics":
        """Crossing paths of a backward run, optionally only those crossing with ``label``."""
        ok = result.crossed
        if label is not None:
            ok = ok & (result.label_at_crossing == label)
        return cls(result.tau_p[ok], result.tau_int[ok], int(np.count_nonzero(~result.crossed)))

    @classmethod
    def from_paths(cls, paths: Iterable[PathRecord], d: float) -> "TimeStatistics":
        tp, ti, flagged = [], [], 0
        for p in paths:
            try:
                tp.append(passing_time(p, d))
            except NoCrossing:
                flagged += 1
                continue
            ti.append(interacting_time(p, d))
        return cls(np.array(tp), np.array(ti), flagged)


def conditional_mean(positions: np.ndarray, labels: np.ndarray, f: Callable,
                     condition: int | Iterable[int]) -> float:
    """Sample mean of f(x) over walkers whose label is in ``condition``.

    This is the ensemble estimate of the integral of f against the density of
    that label.
    """
    allowed = {int(condition)} if np.isscalar(condition) else {int(c) for c in condition}
    mask = np.isin(labels, list(allowed))
    if not mask.any():
        raise EmptyEnsemble(f"no walkers with label in {sorted(allowed)}")
    return float(np.mean(f(np.asarray(positions)[mask])))


@dataclass(frozen=True)
class ReferenceTimes:
    """Closed-form time scales; an entry is None where its formula does not apply."""

    t_c: float | None
    t_d: float
    t_classical: float | None


def wkb_times(barrier: BarrierSpec, E0: float) -> ReferenceTimes:
    """Current time md/(hbar kbar0 (1 + kI0/kR0)), diffusion time md^2/hbar and the
    over-barrier classical time md/(hbar k), for a single optical barrier."""
    m, hbar, d = barrier.m, barrier.hbar, barrier.d
    t_d = m * d * d / hbar
    t_c = None
    t_cl = None
    if barrier.V0 > E0:
        kbar = math.sqrt(2 * m * (barrier.V0 - E0)) / hbar
        kap = compute_kappa(barrier, E0)
        t_c = m * d / (hbar * kbar * (1.0 + abs(kap.imag) / kap.real))
    elif E0 > barrier.V0:
        t_cl = m * d / (hbar * math.sqrt(2 * m * (E0 - barrier.V0)) / hbar)
    return ReferenceTimes(t_c, t_d, t_cl)


def channel_times(spec: ChannelSpec, E0: float) -> ReferenceTimes:
    """Reference times of the lower rotated channel V0 - U0.

    Above that barrier top the classical time md/(hbar k_-0) applies; below it
    the tunneling time md/(hbar kappa_-0) is returned as ``t_c``.  Each formula
    is used only where its wavenumber is real.
    """
    m, hbar, d = spec.m, spec.hbar, spec.d
    gap = spec.V0 - spec.U0 - E0
    t_d = m * d * d / hbar
    if gap < 0:
        return ReferenceTimes(None, t_d, m * d / (hbar * math.sqrt(-2 * m * gap) / hbar))
    if gap > 0:
        return ReferenceTimes(m * d / (hbar * math.sqrt(2 * m * gap) / hbar), t_d, None)
    return ReferenceTimes(None, t_d, None)


def channel_reference_time(spec: ChannelSpec, E0: float) -> float | None:
    r = channel_times(spec, E0)
    return r.t_classical if r.t_classical is not None else r.t_c


# ----------------------------------------------------------------------------
# backward runs and sweeps


def arrival_time(packet: PacketSpec, d: float, hbar: float = 1.0, m: float = 1.0) -> float:
    """Time at which the free packet centre would reach the exit face."""
    return (d - packet.x_center0) * m / (hbar * packet.k0)


def plateau_time(field: WaveField | ChannelField, t_lo: float, t_hi: float,
                 tol: float = 1e-4, n_grid: int = 8001, span: float | None = None) -> float:
    """First time the transmitted mass changes by less than ``tol`` (relative)
    per unit time.  Searched on a unit-spaced time grid in [t_lo, t_hi]."""
    d = field.d
    packet = field.spec.packet if isinstance(field, ChannelField) else field.packet
    span = span or 12.0 * packet.width_x
    x = np.linspace(d, d + span + (t_hi - packet.x_center0) * packet.k0, n_grid)

    def mass(t):
        if isinstance(field, ChannelField):
            p1, _, p2, _ = field.components(x, t)
            P = np.abs(p1) ** 2 + np.abs(p2) ** 2
        else:
            p, _ = field.psi_and_dpsi(x, t)
            P = np.abs(p) ** 2
        return float(np.trapezoid(P, x))

    prev = mass(t_lo)
    t = t_lo
    while t < t_hi:
        cur = mass(t + 1.0)
        if prev > 0 and abs(cur - prev) / prev < tol:
            return t
        prev = cur
        t += 1.0
    return t_hi


def backward_times(field, n_walkers: int, seed: int, *, t_final: float | None = None,
                   dt: float | None = None, window: float | None = None, label: int = 0,
                   record_paths: int = 0, threads: int | None = None,
                   refine_tol: float = 0.02, max_substeps: int = 64) -> BackwardResult:
    """Backward ensemble from the exit face with default time step and window."""
    if isinstance(field, ChannelField):
        spec = field.spec
        packet, hbar, m, d = spec.packet, spec.hbar, spec.m, spec.d
        E0 = hbar**2 * packet.k0**2 / (2 * m)
        kap = math.sqrt(2 * m * abs(spec.V0 - spec.U0 - E0)) / hbar
    else:
        b = field.barrier
        packet, hbar, m, d = field.packet, b.hbar, b.m, b.d
        E0 = hbar**2 * packet.k0**2 / (2 * m)
        kap = math.sqrt(2 * m * abs(b.V0 - E0)) / hbar
    if t_final is None:
        t_final = arrival_time(packet, d, hbar, m)
    if dt is None:
        dt = default_dt(d, kap, hbar, m)
    if window is None:
        window = NO_CROSSING_WINDOW * m * d * d / hbar
    cfg = StepConfig(dt, "backward", hbar=hbar, m=m, refine_tol=refine_tol,
                     max_substeps=max_substeps)
    return run_backward(field, n_walkers, seed, cfg, BackwardLaw(t_final, label), window,
                        record_paths=record_paths, threads=threads)


@dataclass(frozen=True)
class SweepRow:
    series: str
    param: float
    mean: float
    stderr: float
    n_effective: int
    n_flagged: int
    reference: float | None


def sweep_optical(V0: float, d: float, packet: PacketSpec, ratios: Sequence[float],
                  n_walkers: int, seed: int, quad: QuadratureSpec | None = None,
                  **kw) -> list[SweepRow]:
    """Mean passing time against U0/E0 for the optical barrier."""
    E0 = packet.k0**2 / 2
    rows = []
    for r in ratios:
        barrier = BarrierSpec(V0, r * E0, d)
        field = WaveField(barrier, packet, quad)
        res = backward_times(field, n_walkers, seed, **kw)
        st = TimeStatistics.from_backward(res)
        rows.append(SweepRow("tau_p", float(r), _mean_or_nan(st), st.stderr(), st.n, st.n_flagged,
                             wkb_times(barrier, E0).t_c))
    return rows


def sweep_channel(V0: float, packet: PacketSpec, points: Sequence[tuple[float, float]],
                  n_walkers: int, seed: int, quad: QuadratureSpec | None = None,
                  **kw) -> list[SweepRow]:
    """Mean channel-1 and channel-2 passing times against (V0 - U0)/E0.

    ``points`` holds (ratio, d) pairs; U0 = V0 - ratio E0.
    """
    E0 = packet.k0**2 / 2
    rows = []
    for r, d in points:
        spec = ChannelSpec(V0, V0 - r * E0, d, packet)
        field = ChannelField(spec, quad)
        ref = channel_reference_time(spec, E0)
        for ch in (0, 1):
            res = backward_times(field, n_walkers, seed + ch, label=ch, **kw)
            st = TimeStatistics.from_backward(res)
            rows.append(SweepRow(f"t_{ch + 1}", float(r), _mean_or_nan(st), st.stderr(), st.n,
                                 st.n_flagged, ref))
    return rows
