"""Explicit finite-volume solver for drift-diffusion-source equations.

Used as an independent check of the walker ensembles and of the WKB closed
form.  The scheme is first-order upwind advection, centred diffusion and a
pointwise exponential source, with absorbing (zero) ghost cells at both edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numba
import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import spsolve
from scipy.special import ndtr

from .errors import CFLViolation, GridMismatch
from .wavefield import BarrierSpec, WaveField, compute_kappa

CFL_DIFFUSION = 0.4
CFL_ADVECTION = 0.5


@dataclass(frozen=True)
class GridDensity:
    """Cell averages of a density on a uniform grid of ``n_cells`` cells."""

    x_min: float
    x_max: float
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if np.any(self.values < 0):
            raise ValueError("density values must be nonnegative")

    @property
    def n_cells(self) -> int:
        return int(self.values.size)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_cells + 1) * self.dx

    def mass(self) -> float:
        return float(np.sum(self.values) * self.dx)

    def normalized(self) -> "GridDensity":
        m = self.mass()
        return replace(self, values=self.values / m) if m > 0 else self

    def coarsen(self, factor: int) -> "GridDensity":
        """Merge groups of ``factor`` adjacent cells (n_cells must divide evenly)."""
        if self.n_cells % factor:
            raise GridMismatch(f"{self.n_cells} cells do not split into groups of {factor}")
        v = self.values.reshape(-1, factor).mean(axis=1)
        return GridDensity(self.x_min, self.x_max, v, self.t)

    def same_grid(self, other: "GridDensity") -> bool:
        return (self.n_cells == other.n_cells and math.isclose(self.x_min, other.x_min)
                and math.isclose(self.x_max, other.x_max))


def empty_grid(x_min: float, x_max: float, n_cells: int, t: float = 0.0) -> GridDensity:
    return GridDensity(x_min, x_max, np.zeros(n_cells), t)


def max_stable_dt(dx: float, vmax: float, hbar: float = 1.0, m: float = 1.0) -> float:
    lim = CFL_DIFFUSION * dx * dx / (hbar / m)
    if vmax > 0:
        lim = min(lim, CFL_ADVECTION * dx / vmax)
    return lim


@numba.njit(cache=True)
def _fp_step(P, v, rate_dt, dt, dx, D):
    n = P.size
    out = np.empty(n)
    flux = np.empty(n + 1)
    for f in range(n + 1):
        left = P[f - 1] if f > 0 else 0.0
        right = P[f] if f < n else 0.0
        vf = v[f]
        adv = vf * left if vf > 0 else vf * right
        flux[f] = adv - D * (right - left) / dx
    for i in range(n):
        val = P[i] - dt / dx * (flux[i + 1] - flux[i])
        out[i] = val * np.exp(rate_dt[i])
    return out


def _face_values(spec, grid: GridDensity, t: float) -> np.ndarray:
    if callable(spec):
        return np.asarray(spec(grid.faces, t), dtype=float)
    arr = np.asarray(spec, dtype=float)
    return np.full(grid.n_cells + 1, float(arr)) if arr.ndim == 0 else arr


def _cell_values(spec, grid: GridDensity, t: float) -> np.ndarray:
    if callable(spec):
        return np.asarray(spec(grid.centers, t), dtype=float)
    arr = np.asarray(spec, dtype=float)
    return np.full(grid.n_cells, float(arr)) if arr.ndim == 0 else arr


def evolve_fp(density: GridDensity, drift, source_rate, dt: float, direction: str = "forward",
              hbar: float = 1.0, m: float = 1.0) -> GridDensity:
    """One explicit step of dP/ds = -d(vP)/dx + (hbar/2m) d2P/dx2 + rate P.

    ``drift`` is the Nelson drift at the cell faces (array, scalar or callable
    ``(x, t)``): b for forward runs, b* for backward runs, where time runs
    backward and the transport velocity is -b*.  ``source_rate`` is given at cell
    centres.  Raises CFLViolation when dt exceeds the explicit stability limits.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")
    dx = density.dx
    v = _face_values(drift, density, density.t)
    if v.size != density.n_cells + 1:
        raise GridMismatch("drift must be given at the n_cells + 1 faces")
    if direction == "backward":
        v = -v
    rate = _cell_values(source_rate, density, density.t)
    if dt > CFL_DIFFUSION * dx * dx / (hbar / m) * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.3g} exceeds the diffusion limit for dx={dx:.3g}")
    vmax = float(np.max(np.abs(v))) if v.size else 0.0
    if vmax > 0 and dt > CFL_ADVECTION * dx / vmax * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.3g} exceeds the advection limit for |v|={vmax:.3g}")
    new = _fp_step(np.ascontiguousarray(density.values, dtype=float), np.ascontiguousarray(v),
                   np.ascontiguousarray(rate * dt), dt, dx, 0.5 * hbar / m)
    t_new = density.t + dt if direction == "forward" else density.t - dt
    return GridDensity(density.x_min, density.x_max, np.maximum(new, 0.0), t_new)


# ----------------------------------------------------------------------------
# closed form of the thick-barrier (WKB) backward equation


def wkb_velocity(barrier: BarrierSpec, E0: float) -> float:
    """(hbar kbar0 / m)(1 + kI0/kR0): the transport speed from x = d toward 0."""
    kbar = math.sqrt(2 * barrier.m * (barrier.V0 - E0)) / barrier.hbar
    kap = compute_kappa(barrier, E0)
    return barrier.hbar * kbar / barrier.m * (1.0 + abs(kap.imag) / kap.real)


def wkb_closed_form(barrier: BarrierSpec, E0: float, t: float, grid: GridDensity) -> GridDensity:
    """Green's function of the thick-barrier backward equation, started as a
    delta at x = d at t = 0 and evaluated at t < 0, as cell averages on ``grid``.

    With s = -t: mass exp(-2 U0 s / hbar) in a Gaussian of mean d - c s and
    variance (hbar/m) s.
    """
    if t >= 0:
        raise ValueError("the backward solution is defined for t < 0")
    s = -t
    c = wkb_velocity(barrier, E0)
    mean = barrier.d - c * s
    std = math.sqrt(barrier.hbar / barrier.m * s)
    cdf = ndtr((grid.faces - mean) / std)
    vals = np.diff(cdf) / grid.dx * math.exp(-2.0 * barrier.U0 * s / barrier.hbar)
    return GridDensity(grid.x_min, grid.x_max, np.maximum(vals, 0.0), t)


def evolve_wkb(barrier: BarrierSpec, E0: float, grid: GridDensity, t_end: float,
               t_start: float = -1e-3, dt: float | None = None) -> GridDensity:
    """Solve the thick-barrier backward equation on the grid from a narrow
    closed-form start at ``t_start`` down to ``t_end`` (both negative)."""
    c = wkb_velocity(barrier, E0)
    P = wkb_closed_form(barrier, E0, t_start, grid)
    dt = dt or max_stable_dt(grid.dx, c, barrier.hbar, barrier.m)
    rate = -2.0 * barrier.U0 / barrier.hbar
    n = int(math.ceil((t_start - t_end) / dt))
    h = (t_start - t_end) / n
    # backward transport velocity is -b*; b* = c in this limit
    for _ in range(n):
        P = evolve_fp(P, c, rate, h, "backward", barrier.hbar, barrier.m)
    return P


def peak_position(density: GridDensity) -> float:
    """Location of the maximum, refined by a parabola through the top three cells."""
    v = density.values
    i = int(np.argmax(v))
    x = density.centers[i]
    if 0 < i < v.size - 1:
        den = v[i - 1] - 2 * v[i] + v[i + 1]
        if den != 0:
            x += 0.5 * (v[i - 1] - v[i + 1]) / den * density.dx
    return float(x)


# ----------------------------------------------------------------------------
# mean first passage in a frozen field


def mean_exit_time(x: np.ndarray, velocity: np.ndarray, rates: np.ndarray | None = None,
                   hbar: float = 1.0, m: float = 1.0) -> np.ndarray:
    """Mean time to first reach x[0] for a diffusion with state switching.

    Solves D T_i'' + v_i T_i' - r_i T_i + r_i T_j = -1 on the uniform grid ``x``
    with T_i(x[0]) = 0 and a reflecting right end, where D = hbar / 2m,
    ``velocity`` has shape (n_states, n) and ``rates[i]`` is the rate of leaving
    state i for the other state (two states at most).  Returns T with the
    shape of ``velocity``.
    """
    v = np.atleast_2d(np.asarray(velocity, dtype=float))
    n_s, n = v.shape
    if n_s > 2:
        raise ValueError("at most two states")
    r = np.zeros_like(v) if rates is None else np.atleast_2d(np.asarray(rates, dtype=float))
    h = x[1] - x[0]
    D = 0.5 * hbar / m
    rows, cols, vals = [], [], []
    rhs = -np.ones(n_s * n)
    inner = np.arange(1, n - 1)
    for s in range(n_s):
        o = s * n
        rows += [o, o + n - 1, o + n - 1]
        cols += [o, o + n - 1, o + n - 2]
        vals += [1.0, 1.0, -1.0]
        rhs[o] = rhs[o + n - 1] = 0.0
        vi, ri = v[s, inner], r[s, inner]
        rows += [*(o + inner), *(o + inner), *(o + inner)]
        cols += [*(o + inner - 1), *(o + inner + 1), *(o + inner)]
        vals += [*(D / h**2 - vi / (2 * h)), *(D / h**2 + vi / (2 * h)),
                 *(-2 * D / h**2 - ri)]
        if n_s == 2:
            rows += list(o + inner)
            cols += list((1 - s) * n + inner)
            vals += list(ri)
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(n_s * n, n_s * n))
    return spsolve(A, rhs).reshape(n_s, n)


# ----------------------------------------------------------------------------
# comparisons


def compare_density(hist: GridDensity, ref: GridDensity, normalize: bool = False) -> float:
    """L1 distance sum |h - r| dx; with ``normalize`` both are scaled to unit mass."""
    if not hist.same_grid(ref):
        raise GridMismatch("densities live on different grids")
    if normalize:
        hist, ref = hist.normalized(), ref.normalized()
    return float(np.sum(np.abs(hist.values - ref.values)) * hist.dx)


def histogram_density(positions: np.ndarray, grid: GridDensity, n_total: int,
                      t: float | None = None) -> GridDensity:
    """Walker histogram as a density, normalised by the full ensemble size."""
    counts, _ = np.histogram(positions, bins=grid.n_cells, range=(grid.x_min, grid.x_max))
    vals = counts / (max(n_total, 1) * grid.dx)
    return GridDensity(grid.x_min, grid.x_max, vals, grid.t if t is None else t)


def wavefunction_density(field: WaveField, grid: GridDensity, t: float,
                         sub: int = 8) -> GridDensity:
    """Cell averages of |psi|^2 (midpoint rule with ``sub`` points per cell)."""
    offs = (np.arange(sub) + 0.5) / sub
    x = (grid.faces[:-1, None] + offs[None, :] * grid.dx).ravel()
    p, _ = field.psi_and_dpsi(x, t)
    vals = (np.abs(p) ** 2).reshape(grid.n_cells, sub).mean(axis=1)
    return GridDensity(grid.x_min, grid.x_max, vals, t)


@dataclass
class TrackingResult:
    densities: list[GridDensity]
    capped_faces: int
    steps: int


def track_wavefunction(field: WaveField, grid: GridDensity, t_start: float,
                       probe_times, dt: float | None = None, refresh: float = 0.01
                       ) -> TrackingResult:
    """Forward FP evolution seeded with |psi(t_start)|^2, drift b from psi and
    source -2 U0 / hbar inside the barrier.

    The face drift is recomputed every ``refresh`` time units from psi* psi' and
    |psi|^2 at the faces.  Near nodes of psi the drift diverges; there it is
    capped at the advection CFL speed and the number of capped faces is counted.
    """
    b = field.barrier
    hbar, m = b.hbar, b.m
    dx = grid.dx
    dt = dt or CFL_DIFFUSION * dx * dx / (hbar / m)
    vcap = CFL_ADVECTION * dx / dt
    P = wavefunction_density(field, grid, t_start)
    xc = grid.centers
    rate = np.where((xc > 0) & (xc < b.d), -2.0 * b.U0 / hbar, 0.0)
    faces = grid.faces
    probes = sorted(probe_times)
    out = []
    capped = 0
    steps = 0
    t = t_start
    v = None
    t_drift = -np.inf
    for tp in probes:
        while t < tp - 1e-12:
            if v is None or t - t_drift >= refresh - 1e-12:
                p, q = field.psi_and_dpsi(faces, t + 0.5 * min(refresh, tp - t))
                dens = np.abs(p) ** 2
                z = np.conj(p) * q
                with np.errstate(divide="ignore", invalid="ignore"):
                    v = np.where(dens > 0, hbar / m * (z.imag + z.real) / dens, 0.0)
                over = np.abs(v) > vcap
                capped += int(np.count_nonzero(over))
                v = np.clip(v, -vcap, vcap)
                t_drift = t
            h = min(dt, tp - t)
            P = evolve_fp(replace(P, t=t), v, rate, h, "forward", hbar, m)
            t += h
            steps += 1
        out.append(replace(P, t=tp))
    return TrackingResult(out, capped, steps)
