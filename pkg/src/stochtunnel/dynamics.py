"""Forward and backward Ito integration of walkers with sector/channel jumps.

Single-walker operations (``step``, ``sample_jump_optical``,
``sample_jump_channel``) are plain Python and take their random draws as
arguments.  Ensemble runs go through the compiled kernels in ``_engine``, which
apply exactly the same rules; every draw comes from a counter-based stream keyed
by (seed, walker id), so results do not depend on threading or chunking.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from enum import IntEnum
from typing import Literal, Sequence

import numpy as np

from . import _engine
from .channels import ChannelField
from .errors import ClampExceeded, GridTooCoarse, StepTooLarge
from .rng import PURPOSE_DYNAMICS, PURPOSE_INITIAL, uniforms, walker_keys
from .wavefield import packet_extent

Direction = Literal["forward", "backward"]

GUARD_SIGMAS = 5.0
THREADS_ENV = "STOCHTUNNEL_THREADS"
_CHUNK = 4096


class Sector(IntEnum):
    P_SECTOR = 0
    U_SECTOR = 1


class Channel(IntEnum):
    CH1 = 0
    CH2 = 1


@dataclass(frozen=True)
class Walker:
    x: float
    t: float
    label: int = 0
    stream: int = 0
    alive: bool = True


@dataclass(frozen=True)
class StepConfig:
    dt: float
    direction: Direction = "forward"
    jump_clamp: float = 0.1
    hbar: float = 1.0
    m: float = 1.0
    refine_tol: float = 0.02
    max_substeps: int = 64

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.refine_tol > 0 or self.max_substeps < 1:
            raise ValueError("refine_tol must be positive and max_substeps >= 1")
        if self.direction not in ("forward", "backward"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if not 0 < self.jump_clamp <= 1:
            raise ValueError("jump_clamp must lie in (0, 1]")

    @property
    def noise_std(self) -> float:
        return math.sqrt(self.hbar / self.m * self.dt)

    @property
    def forward(self) -> bool:
        return self.direction == "forward"


@dataclass
class PathRecord:
    """Samples (t, x, label) of one walker, ordered in the integration direction."""

    path_id: int
    t: np.ndarray
    x: np.ndarray
    label: np.ndarray

    def region_ii_visits(self, d: float) -> list[tuple[float, float]]:
        """(entry, exit) sample times of each stay inside 0 <= x <= d."""
        inside = (self.x >= 0) & (self.x <= d)
        out = []
        start = None
        for i, flag in enumerate(inside):
            if flag and start is None:
                start = i
            elif not flag and start is not None:
                out.append((float(self.t[start]), float(self.t[i - 1])))
                start = None
        if start is not None:
            out.append((float(self.t[start]), float(self.t[-1])))
        return out


def step(walker: Walker, drift_source, cfg: StepConfig, noise: float) -> Walker:
    """One Euler-Maruyama step; ``noise`` is a standard normal draw.

    ``drift_source`` is either a number or a callable ``(x, t) -> velocity``
    giving b (forward) or b* (backward).
    """
    b = drift_source(walker.x, walker.t) if callable(drift_source) else float(drift_source)
    disp = b * cfg.dt
    if abs(disp) > GUARD_SIGMAS * cfg.noise_std:
        raise StepTooLarge(f"|b dt| = {abs(disp):.3g} at x={walker.x:.6g}, t={walker.t:.6g}")
    dw = cfg.noise_std * noise
    if cfg.forward:
        return Walker(walker.x + disp + dw, walker.t + cfg.dt, walker.label, walker.stream)
    return Walker(walker.x - disp - dw, walker.t - cfg.dt, walker.label, walker.stream)


def _check_clamp(prob: float, cfg: StepConfig) -> None:
    if prob > cfg.jump_clamp:
        raise ClampExceeded(f"jump probability {prob:.3g} exceeds clamp {cfg.jump_clamp}")


def sample_jump_optical(U_value: float, label: int, cfg: StepConfig, uniform_draw: float) -> int:
    """Relabel between the physical and unphysical sectors.

    The optical potential is V + iU; U < 0 absorbs.  Forward: p -> u when U < 0,
    u -> p when U > 0.  Backward: u -> p when U < 0, p -> u when U > 0.  The rate
    is |2U/hbar| in each case.
    """
    prob = abs(2.0 * U_value / cfg.hbar) * cfg.dt
    if prob == 0.0:
        return label
    _check_clamp(prob, cfg)
    absorbing = U_value < 0
    if cfg.forward:
        source = Sector.P_SECTOR if absorbing else Sector.U_SECTOR
    else:
        source = Sector.U_SECTOR if absorbing else Sector.P_SECTOR
    if label == source and uniform_draw < prob:
        return 1 - label
    return label


def sample_jump_channel(W_value: float, label: int, cfg: StepConfig, uniform_draw: float) -> int:
    """Channel jump for a walker whose current channel has leaving rate ``W_value``.

    ``W_value`` is W_(c->o) evaluated for the walker's own channel c.  Forward
    runs leave c with probability W dt where W > 0; backward runs leave with
    probability -W dt where W < 0.
    """
    prob = W_value * cfg.dt if cfg.forward else -W_value * cfg.dt
    if prob <= 0.0:
        return label
    _check_clamp(prob, cfg)
    return 1 - label if uniform_draw < prob else label


# ----------------------------------------------------------------------------
# initial laws


def sample_initial_positions(field, t_I: float, n: int, seed: int, n_grid: int = 20001,
                             bounds: tuple[float, float] | None = None,
                             max_cell_mass: float = 0.01) -> np.ndarray:
    """Inverse-CDF samples of |psi(x, t_I)|^2 (channel 1 for a ChannelField).

    Walker i uses the uniform at counter 0 of its initial-law stream, so the
    positions do not depend on n beyond truncation.
    """
    if n == 0:
        return np.empty(0)
    if bounds is None:
        packet = _packet_of(field)
        bounds = packet_extent(packet, t_I, n_widths=10.0)
    x = np.linspace(bounds[0], bounds[1], n_grid)
    P = _density_on(field, x, t_I)
    cell = 0.5 * (P[1:] + P[:-1]) * (x[1] - x[0])
    cdf = np.concatenate([[0.0], np.cumsum(cell)])
    total = cdf[-1]
    if not total > 0:
        raise GridTooCoarse("packet has no mass on the sampling grid")
    if cell.max() / total > max_cell_mass:
        raise GridTooCoarse(f"one grid cell holds {cell.max() / total:.3g} of the mass")
    u = uniforms(walker_keys(seed, np.arange(n), PURPOSE_INITIAL), 0) * total
    j = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, cell.size - 1)
    frac = np.where(cell[j] > 0, (u - cdf[j]) / np.where(cell[j] > 0, cell[j], 1.0), 0.5)
    return x[j] + frac * (x[1] - x[0])


def _packet_of(field):
    return field.spec.packet if isinstance(field, ChannelField) else field.packet


def _density_on(field, x, t):
    if isinstance(field, ChannelField):
        p1, _, _, _ = field.components(x, t)
        return np.abs(p1) ** 2
    p, _ = field.psi_and_dpsi(x, t)
    return np.abs(p) ** 2


@dataclass(frozen=True)
class ForwardLaw:
    """Walkers drawn from |psi(x, t_start)|^2, all in the physical sector / channel 1."""

    t_start: float
    n_grid: int = 20001


@dataclass(frozen=True)
class BackwardLaw:
    """All walkers at x = d - eps at time t_final (a delta at the exit face)."""

    t_final: float
    label: int = 0
    eps_factor: float = 1e-6


# ----------------------------------------------------------------------------
# ensemble machinery


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        return max(1, int(raw))
    return max(1, os.cpu_count() or 1)


class _Driver:
    """Holds the tables, keys and state arrays of one ensemble run."""

    def __init__(self, field, x, label, seed, cfg: StepConfig, x_range, threads):
        self.field = field
        self.cfg = cfg
        self.x = np.ascontiguousarray(x, dtype=float)
        self.label = np.ascontiguousarray(label, dtype=np.int64)
        self.keys = walker_keys(seed, np.arange(self.x.size), PURPOSE_DYNAMICS)
        self.threads = threads or thread_count()
        lo, hi = x_range
        if isinstance(field, ChannelField):
            self.tables = [_engine.FieldTable(field.plus_field, lo, hi),
                           _engine.FieldTable(field.minus_field, lo, hi)]
            self.U0 = field.spec.U0
            self.kernel = _engine.advance_channel
        else:
            self.tables = [_engine.FieldTable(field, lo, hi)]
            self.U0 = field.barrier.U0
            self.kernel = _engine.advance_optical
        self.floor = field.density_floor
        self.diag = np.zeros(_engine.N_DIAG, dtype=np.int64)
        self.walker_steps = 0
        self.guard_sigmas = GUARD_SIGMAS
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()

    def advance(self, idx: np.ndarray, step_index: int, t: float) -> None:
        for tab in self.tables:
            tab.update(t)
        tab_args = []
        for tab in self.tables:
            tab_args += [tab.meta, tab.env, tab.tab2, tab.nodes]
        cfg = self.cfg
        chunks = [idx] if (self._pool is None or idx.size <= _CHUNK) else np.array_split(
            idx, min(self.threads * 4, -(-idx.size // _CHUNK)))
        diags = [np.zeros(_engine.N_DIAG, dtype=np.int64) for _ in chunks]
        errs = [np.zeros(3) for _ in chunks]

        def run(j):
            self.kernel(chunks[j], self.x, self.label, self.keys, step_index, cfg.dt,
                        cfg.forward, cfg.hbar, cfg.m, self.U0, self.floor, self.guard_sigmas,
                        True, cfg.jump_clamp, cfg.refine_tol, cfg.max_substeps,
                        *tab_args, diags[j], errs[j])

        if len(chunks) == 1:
            run(0)
        else:
            list(self._pool.map(run, range(len(chunks))))
        for dg, er in zip(diags, errs):
            self.diag += dg
            if er[_engine.ERR_FLAG]:
                raise ClampExceeded(
                    f"walker {int(er[_engine.ERR_WALKER])}: jump probability "
                    f"{er[_engine.ERR_VALUE]:.3g} exceeds clamp {cfg.jump_clamp} at t={t:.6g}")
        self.walker_steps += idx.size

    def diagnostics(self) -> dict:
        return {"floor_steps": int(self.diag[_engine.DIAG_FLOOR]),
                "guard_steps": int(self.diag[_engine.DIAG_GUARD]),
                "fallback_evals": int(self.diag[_engine.DIAG_FALLBACK]),
                "extra_substeps": int(self.diag[_engine.DIAG_SUBSTEP]),
                "walker_steps": int(self.walker_steps)}

    def check_guard(self, guard_fraction: float) -> None:
        n = int(self.diag[_engine.DIAG_GUARD])
        if n > max(10, guard_fraction * self.walker_steps):
            raise StepTooLarge(f"{n} of {self.walker_steps} walker steps exceeded the drift "
                               f"guard; reduce dt")


@dataclass
class EnsembleResult:
    """Snapshots and label counts of a forward ensemble run."""

    probe_times: np.ndarray
    positions: list[np.ndarray]
    labels: list[np.ndarray]
    times: np.ndarray
    counts: np.ndarray              # shape (n_steps + 1, 2): label-0 and label-1 counts
    paths: list[PathRecord]
    diagnostics: dict = dc_field(default_factory=dict)

    @property
    def n_walkers(self) -> int:
        return int(self.counts[0].sum()) if self.counts.size else 0

    def snapshot(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        i = int(np.argmin(np.abs(self.probe_times - t)))
        return self.positions[i], self.labels[i]


@dataclass
class BackwardResult:
    """Per-walker first-passage data of a backward run started at the exit face."""

    dt: float
    t_final: float
    crossed: np.ndarray             # bool
    tau_p: np.ndarray               # NaN where not crossed
    tau_int: np.ndarray
    label_at_crossing: np.ndarray   # -1 where not crossed
    counts: np.ndarray              # label counts per step, shape (n_steps + 1, 2)
    paths: list[PathRecord]
    diagnostics: dict = dc_field(default_factory=dict)
    first_passage: np.ndarray | None = None   # c dt, counted from the start

    @property
    def n_walkers(self) -> int:
        return self.crossed.size

    @property
    def non_crossing_fraction(self) -> float:
        return float(np.mean(~self.crossed)) if self.crossed.size else 0.0


def _counts(label: np.ndarray) -> np.ndarray:
    n1 = int(np.count_nonzero(label))
    return np.array([label.size - n1, n1], dtype=np.int64)


def default_dt(d: float, kappa_bar: float, hbar: float = 1.0, m: float = 1.0) -> float:
    """10^-3 of the diffusion time, shortened for thick barriers."""
    d = max(d, 1e-12)
    return 1e-3 * (m * d * d / hbar) / max(1.0, kappa_bar * d) ** 2


def run_ensemble(field, n_walkers: int, seed: int, cfg: StepConfig, t_end: float,
                 probe_times: Sequence[float] = (), law: ForwardLaw | None = None,
                 record_paths: int = 0, record_every: int = 1, threads: int | None = None,
                 guard_fraction: float = 1e-4) -> EnsembleResult:
    """Forward run from ``law.t_start`` to ``t_end`` with snapshots at ``probe_times``.

    Probe times are rounded to the step grid.
    """
    if not cfg.forward:
        raise ValueError("run_ensemble integrates forward; use run_backward for backward runs")
    law = law or ForwardLaw(t_start=0.0)
    t0 = law.t_start
    n_steps = int(round((t_end - t0) / cfg.dt))
    probe_steps = sorted({int(round((tp - t0) / cfg.dt)) for tp in probe_times})
    if any(s < 0 or s > n_steps for s in probe_steps):
        raise ValueError("probe times must lie inside the run")
    if n_walkers == 0:
        return EnsembleResult(np.array([t0 + s * cfg.dt for s in probe_steps]),
                              [np.empty(0) for _ in probe_steps],
                              [np.empty(0, dtype=np.int64) for _ in probe_steps],
                              np.empty(0), np.zeros((0, 2), dtype=np.int64), [], {})
    x = sample_initial_positions(field, t0, n_walkers, seed, n_grid=law.n_grid)
    packet = _packet_of(field)
    lo0, hi0 = packet_extent(packet, t0, n_widths=10.0)
    lo1, hi1 = packet_extent(packet, t_end, n_widths=10.0)
    margin = 20.0 / packet.k0
    x_range = (min(lo0, lo1, -hi1, x.min()) - margin, max(hi1, field.d, x.max()) + margin)
    drv = _Driver(field, x, np.zeros(n_walkers), seed, cfg, x_range, threads)
    try:
        counts = np.empty((n_steps + 1, 2), dtype=np.int64)
        n_rec = min(record_paths, n_walkers)
        rec_steps = list(range(0, n_steps + 1, record_every))
        if rec_steps[-1] != n_steps:
            rec_steps.append(n_steps)
        rec_x = np.empty((len(rec_steps), n_rec))
        rec_l = np.empty((len(rec_steps), n_rec), dtype=np.int64)
        positions, labels = [], []
        all_idx = np.arange(n_walkers)
        ri = 0
        for k in range(n_steps + 1):
            counts[k] = _counts(drv.label)
            if probe_steps and k in probe_steps:
                positions.append(drv.x.copy())
                labels.append(drv.label.copy())
            if ri < len(rec_steps) and rec_steps[ri] == k:
                rec_x[ri] = drv.x[:n_rec]
                rec_l[ri] = drv.label[:n_rec]
                ri += 1
            if k < n_steps:
                drv.advance(all_idx, k, t0 + k * cfg.dt)
        drv.check_guard(guard_fraction)
    finally:
        drv.close()
    rec_t = t0 + cfg.dt * np.asarray(rec_steps, dtype=float)
    paths = [PathRecord(i, rec_t.copy(), rec_x[:, i].copy(), rec_l[:, i].copy())
             for i in range(n_rec)]
    return EnsembleResult(np.array([t0 + s * cfg.dt for s in probe_steps]), positions, labels,
                          t0 + cfg.dt * np.arange(n_steps + 1), counts, paths,
                          drv.diagnostics())


def run_backward(field, n_walkers: int, seed: int, cfg: StepConfig, law: BackwardLaw,
                 window: float, record_paths: int = 0, threads: int | None = None,
                 guard_fraction: float = 1e-4, region_margin: float | None = None
                 ) -> BackwardResult:
    """Backward run from the exit face until each walker first reaches x <= 0.

    With samples x_k at times t_final - k dt, c the first k with x_k <= 0 and L
    the last k < c with x_k >= d (or -1): tau_p = (c - L - 1) dt, the time from
    the final departure from the exit face to the first crossing of the entry
    face.  tau_int counts the samples k < c inside [0, d).  Walkers that have not
    crossed after ``window`` are flagged.
    """
    if cfg.forward:
        raise ValueError("run_backward needs a backward StepConfig")
    d = field.d
    dt = cfg.dt
    n_steps = int(math.ceil(window / dt))
    empty = np.empty(0)
    if n_walkers == 0:
        return BackwardResult(dt, law.t_final, np.zeros(0, bool), empty, empty,
                              np.zeros(0, dtype=np.int64), np.zeros((0, 2), np.int64), [], {})
    packet = _packet_of(field)
    L = region_margin if region_margin is not None else 60.0 / packet.k0
    x0 = d - law.eps_factor * d
    drv = _Driver(field, np.full(n_walkers, x0), np.full(n_walkers, law.label), seed, cfg,
                  (-L, d + L), threads)
    cross = np.full(n_walkers, -1, dtype=np.int64)
    last_d = np.full(n_walkers, -1, dtype=np.int64)
    n_in = np.zeros(n_walkers, dtype=np.int64)
    lab_c = np.full(n_walkers, -1, dtype=np.int64)
    n_rec = min(record_paths, n_walkers)
    rec_x: list[np.ndarray] = []
    rec_l: list[np.ndarray] = []
    counts = []
    active = np.arange(n_walkers)
    try:
        for k in range(n_steps + 1):
            counts.append(_counts(drv.label))
            if n_rec:
                rec_x.append(drv.x[:n_rec].copy())
                rec_l.append(drv.label[:n_rec].copy())
            xa = drv.x[active]
            hit = xa <= 0.0
            if hit.any():
                done = active[hit]
                cross[done] = k
                lab_c[done] = drv.label[done]
                active = active[~hit]
                xa = xa[~hit]
            n_in[active[xa < d]] += 1
            last_d[active[xa >= d]] = k
            if active.size == 0 or k == n_steps:
                break
            drv.advance(active, k, law.t_final - k * dt)
        drv.check_guard(guard_fraction)
    finally:
        drv.close()
    crossed = cross >= 0
    tau_p = np.where(crossed, (cross - last_d - 1) * dt, np.nan)
    tau_int = np.where(crossed, n_in * dt, np.nan)
    paths = []
    if n_rec:
        X = np.array(rec_x)
        Lb = np.array(rec_l)
        ts = law.t_final - dt * np.arange(X.shape[0])
        for i in range(n_rec):
            stop = cross[i] + 1 if crossed[i] else X.shape[0]
            paths.append(PathRecord(i, ts[:stop].copy(), X[:stop, i].copy(), Lb[:stop, i].copy()))
    first = np.where(crossed, cross * dt, np.nan)
    return BackwardResult(dt, law.t_final, crossed, tau_p, tau_int, lab_c,
                          np.array(counts), paths, drv.diagnostics(), first)
