"""Tabulated drift sources and compiled walker kernels.

At each time step the wave field is tabulated on two grids: a coarse uniform
grid of slowly varying envelopes for regions I and III (the carrier
``exp(+-i k0 x)`` is factored out analytically) and a fine grid of psi itself
inside the barrier.  Tables hold psi and d psi/dx from the closed-form
quadrature sums; walkers read them through cubic Hermite interpolation.
Walkers outside the tabulated range fall back to the exact quadrature sum.

All tables drop the common phase exp(-i E0 t / hbar); drifts, densities and
jump rates are insensitive to it.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .rng import SLOTS_PER_STEP, SLOT_JUMP, SLOT_NOISE_A, SLOT_NOISE_B, normal_at, uniform_at

ENV_STEP_FACTOR = 0.1      # envelope grid spacing = factor / max|k - k0|
BARRIER_STEP = 0.02        # grid spacing inside the barrier

# diagnostics slots
DIAG_FLOOR, DIAG_GUARD, DIAG_FALLBACK, DIAG_SUBSTEP = 0, 1, 2, 3
N_DIAG = 4
# error slots: flag, walker index, offending probability
ERR_FLAG, ERR_WALKER, ERR_VALUE = 0, 1, 2


class FieldTable:
    """Per-step tabulation of one WaveField over [x_lo, x_hi]."""

    def __init__(self, field, x_lo: float, x_hi: float):
        self.field = field
        b = field.barrier
        self.k0 = field.packet.k0
        self.E0 = b.hbar**2 * self.k0**2 / (2 * b.m)
        q = field.k - self.k0
        self.q = q
        h = ENV_STEP_FACTOR / max(np.max(np.abs(q)), 1e-12)
        n = int(math.ceil((x_hi - x_lo) / h)) + 2
        self.x_lo, self.h, self.n = float(x_lo), float(h), n
        xg = x_lo + h * np.arange(n)
        self._E = np.exp(1j * np.outer(xg, q))
        d = b.d
        n2 = max(int(math.ceil(d / BARRIER_STEP)), 2) + 1
        self.h2 = d / (n2 - 1)
        x2 = np.linspace(0.0, d, n2)
        ep = np.exp(np.outer(x2, field.kappa))
        self._P2 = np.hstack([ep, 1.0 / ep])
        self.meta = np.array([self.k0, d, self.x_lo, self.h, self.h2, float(n), float(n2)])
        self.env = np.zeros((6, n), dtype=complex)
        self.tab2 = np.zeros((2, n2), dtype=complex)
        self.nodes = np.zeros((7, q.size), dtype=complex)
        self.nodes[0] = field.k
        self.nodes[2] = field.R
        self.nodes[3] = field.T
        self.nodes[4] = field.C
        self.nodes[5] = field.D
        self.nodes[6] = field.kappa
        self._iq = 1j * q
        self.t = None

    def update(self, t: float) -> None:
        f = self.field
        c = f.node_weights(t, drop_energy=self.E0)
        self.nodes[1] = c
        iq = self._iq
        rc = f.R * c
        tc = f.T * c
        V = np.stack([c, iq * c, tc, iq * tc, np.conj(rc), np.conj(-iq * rc)], axis=1)
        Y = self._E @ V
        env = self.env
        env[0] = Y[:, 0]
        env[1] = Y[:, 1]
        env[2] = np.conj(Y[:, 4])
        env[3] = np.conj(Y[:, 5])
        env[4] = Y[:, 2]
        env[5] = Y[:, 3]
        kc = f.kappa * c
        W = np.empty((2 * c.size, 2), dtype=complex)
        W[: c.size, 0] = f.C * c
        W[c.size:, 0] = f.D * c
        W[: c.size, 1] = kc * f.C
        W[c.size:, 1] = -kc * f.D
        self.tab2[:] = (self._P2 @ W).T
        self.t = t

    def evaluate(self, x: np.ndarray):
        """psi, psi' at x from the current tables (for tests and diagnostics)."""
        x = np.ascontiguousarray(np.atleast_1d(x), dtype=float)
        out = np.empty((2, x.size), dtype=complex)
        _evaluate_many(x, self.meta, self.env, self.tab2, self.nodes, out)
        return out[0], out[1]


@numba.njit(inline="always", cache=True)
def _hermite(f0, df0, f1, df1, u, h):
    u2 = u * u
    u3 = u2 * u
    h00 = 2 * u3 - 3 * u2 + 1
    h10 = u3 - 2 * u2 + u
    h01 = -2 * u3 + 3 * u2
    h11 = u3 - u2
    val = h00 * f0 + h10 * h * df0 + h01 * f1 + h11 * h * df1
    g00 = (6 * u2 - 6 * u) / h
    g10 = 3 * u2 - 4 * u + 1
    g01 = (-6 * u2 + 6 * u) / h
    g11 = 3 * u2 - 2 * u
    der = g00 * f0 + g10 * df0 + g01 * f1 + g11 * df1
    return val, der


@numba.njit(cache=True)
def _direct(x, d, nodes):
    k = nodes[0]
    c = nodes[1]
    psi = 0j
    dpsi = 0j
    if x < 0:
        for j in range(k.size):
            e = np.exp(1j * k[j].real * x)
            ei = 1.0 / e
            psi += c[j] * (e + nodes[2, j] * ei)
            dpsi += c[j] * 1j * k[j].real * (e - nodes[2, j] * ei)
    elif x <= d:
        for j in range(k.size):
            kap = nodes[6, j]
            ep = np.exp(kap * x)
            em = 1.0 / ep
            psi += c[j] * (nodes[4, j] * ep + nodes[5, j] * em)
            dpsi += c[j] * kap * (nodes[4, j] * ep - nodes[5, j] * em)
    else:
        for j in range(k.size):
            e = np.exp(1j * k[j].real * x)
            psi += c[j] * nodes[3, j] * e
            dpsi += c[j] * nodes[3, j] * 1j * k[j].real * e
    return psi, dpsi


@numba.njit(cache=True)
def _eval_psi(x, meta, env, tab2, nodes):
    """Returns (psi, psi', fallback_used)."""
    k0 = meta[0]
    d = meta[1]
    if 0.0 <= x <= d:
        h2 = meta[4]
        n2 = int(meta[6])
        s = x / h2
        j = int(s)
        if j >= n2 - 1:
            j = n2 - 2
        u = s - j
        v, g = _hermite(tab2[0, j], tab2[1, j], tab2[0, j + 1], tab2[1, j + 1], u, h2)
        return v, g, False
    x_lo = meta[2]
    h = meta[3]
    n = int(meta[5])
    s = (x - x_lo) / h
    if s < 0.0 or s >= n - 1:
        p, q = _direct(x, d, nodes)
        return p, q, True
    j = int(s)
    u = s - j
    cp = np.exp(1j * k0 * x)
    if x < 0:
        fi, dfi = _hermite(env[0, j], env[1, j], env[0, j + 1], env[1, j + 1], u, h)
        fr, dfr = _hermite(env[2, j], env[3, j], env[2, j + 1], env[3, j + 1], u, h)
        cm = 1.0 / cp
        return (cp * fi + cm * fr,
                cp * (1j * k0 * fi + dfi) + cm * (-1j * k0 * fr + dfr), False)
    ft, dft = _hermite(env[4, j], env[5, j], env[4, j + 1], env[5, j + 1], u, h)
    return cp * ft, cp * (1j * k0 * ft + dft), False


@numba.njit(cache=True)
def _evaluate_many(x, meta, env, tab2, nodes, out):
    for i in range(x.size):
        p, q, _ = _eval_psi(x[i], meta, env, tab2, nodes)
        out[0, i] = p
        out[1, i] = q


@numba.njit(inline="always", cache=True)
def _ito(xi, drift, dt, sdt, forward, guard, clip, key, base, diag):
    disp = drift * dt
    lim = guard * sdt
    if abs(disp) > lim:
        diag[DIAG_GUARD] += 1
        if clip:
            disp = lim if disp > 0 else -lim
        else:
            disp = 0.0
    noise = sdt * normal_at(key, base + np.uint64(SLOT_NOISE_A), base + np.uint64(SLOT_NOISE_B))
    if forward:
        return xi + disp + noise
    return xi - disp - noise


@numba.njit(inline="always", cache=True)
def _drift(psi, dpsi, forward, hbar, m):
    z = dpsi / psi
    if forward:
        return hbar / m * (z.imag + z.real)
    return hbar / m * (z.imag - z.real)


@numba.njit(inline="always", cache=True)
def _substep(z2, P, floor, dt, rem, tol, n_max):
    """Length of the next sub-step: dt / ceil(|psi'/psi|^2 dt / tol), capped at n_max pieces."""
    if n_max <= 1:
        return rem
    if P > floor:
        n = math.ceil(z2 * dt / tol)
        n = max(1, min(n, n_max))
    else:
        n = n_max
    h = dt / n
    return h if h < rem else rem


@numba.njit(cache=True)
def _optical_prob(xi, lab, U0, d, h, forward, hbar):
    # optical potential is V + iU with U = -U0 inside the barrier
    U = -U0 if (xi > 0.0 and xi < d) else 0.0
    if forward:
        if U < 0 and lab == 0:
            return -2.0 * U * h / hbar
        if U > 0 and lab == 1:
            return 2.0 * U * h / hbar
    else:
        if U < 0 and lab == 1:
            return -2.0 * U * h / hbar
        if U > 0 and lab == 0:
            return 2.0 * U * h / hbar
    return 0.0


@numba.njit(nogil=True, cache=True)
def advance_optical(idx, x, label, keys, step, dt, forward, hbar, m, U0, floor, guard,
                    clip, clamp, tol, n_max, meta, env, tab2, nodes, diag, err):
    """Advance walkers ``idx`` of a single barrier over one step of length dt.

    label 0 = physical sector, 1 = unphysical sector.  Each sub-step applies the
    jump rule with the pre-step state, then the Ito step.  Sub-step lengths
    follow ``_substep`` using the field tabulated at the start of the step.
    """
    d = meta[1]
    for ii in range(idx.size):
        i = idx[ii]
        xi = x[i]
        lab = label[i]
        key = keys[i]
        rem = dt
        j = 0
        while rem > 1e-12 * dt and j < n_max:
            psi, dpsi, fb = _eval_psi(xi, meta, env, tab2, nodes)
            if fb:
                diag[DIAG_FALLBACK] += 1
            P = psi.real * psi.real + psi.imag * psi.imag
            drift = 0.0
            z2 = 0.0
            if P > floor:
                z = dpsi / psi
                z2 = z.real * z.real + z.imag * z.imag
                drift = _drift(psi, dpsi, forward, hbar, m)
            else:
                diag[DIAG_FLOOR] += 1
            h = _substep(z2, P, floor, dt, rem, tol, n_max)
            base = np.uint64((step * n_max + j) * SLOTS_PER_STEP)
            prob = _optical_prob(xi, lab, U0, d, h, forward, hbar)
            if prob > 0.0:
                if prob > clamp:
                    err[ERR_FLAG] = 1.0
                    err[ERR_WALKER] = i
                    err[ERR_VALUE] = prob
                    return
                if uniform_at(key, base + np.uint64(SLOT_JUMP)) < prob:
                    lab = 1 - lab
            xi = _ito(xi, drift, h, np.sqrt(hbar * h / m), forward, guard, clip, key, base, diag)
            rem -= h
            j += 1
        if j > 1:
            diag[DIAG_SUBSTEP] += j - 1
        x[i] = xi
        label[i] = lab


@numba.njit(nogil=True, cache=True)
def advance_channel(idx, x, label, keys, step, dt, forward, hbar, m, U0, floor, guard,
                    clip, clamp, tol, n_max, meta_p, env_p, tab2_p, nodes_p,
                    meta_m, env_m, tab2_m, nodes_m, diag, err):
    """As ``advance_optical`` for the two-channel system (label 0/1 = channel 1/2).

    A walker in channel c leaves it with probability W_(c->o) h where that rate
    is positive (forward) or -W_(c->o) h where it is negative (backward).
    """
    d = meta_p[1]
    r = 1.0 / np.sqrt(2.0)
    for ii in range(idx.size):
        i = idx[ii]
        xi = x[i]
        lab = label[i]
        key = keys[i]
        rem = dt
        j = 0
        while rem > 1e-12 * dt and j < n_max:
            pp, dp, fb1 = _eval_psi(xi, meta_p, env_p, tab2_p, nodes_p)
            pm, dm, fb2 = _eval_psi(xi, meta_m, env_m, tab2_m, nodes_m)
            if fb1 or fb2:
                diag[DIAG_FALLBACK] += 1
            if lab == 0:
                psi = (pp + pm) * r
                dpsi = (dp + dm) * r
                other = (pp - pm) * r
            else:
                psi = (pp - pm) * r
                dpsi = (dp - dm) * r
                other = (pp + pm) * r
            P = psi.real * psi.real + psi.imag * psi.imag
            drift = 0.0
            z2 = 0.0
            W = 0.0
            if P > floor:
                z = dpsi / psi
                z2 = z.real * z.real + z.imag * z.imag
                drift = _drift(psi, dpsi, forward, hbar, m)
                if xi > 0.0 and xi < d:
                    W = -2.0 / hbar * U0 * (np.conj(psi) * other).imag / P
            else:
                diag[DIAG_FLOOR] += 1
            h = _substep(z2, P, floor, dt, rem, tol, n_max)
            base = np.uint64((step * n_max + j) * SLOTS_PER_STEP)
            prob = W * h if forward else -W * h
            if prob > 0.0:
                if prob > clamp:
                    err[ERR_FLAG] = 1.0
                    err[ERR_WALKER] = i
                    err[ERR_VALUE] = prob
                    return
                if uniform_at(key, base + np.uint64(SLOT_JUMP)) < prob:
                    lab = 1 - lab
            xi = _ito(xi, drift, h, np.sqrt(hbar * h / m), forward, guard, clip, key, base, diag)
            rem -= h
            j += 1
        if j > 1:
            diag[DIAG_SUBSTEP] += j - 1
        x[i] = xi
        label[i] = lab
