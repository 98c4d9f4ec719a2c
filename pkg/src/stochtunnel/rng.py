"""Counter-based random streams.

Every draw is a pure function of (master seed, walker id, counter), so the
result does not depend on how walkers are split across threads or in which
order they are advanced.  The mixer is the SplitMix64 finaliser, applied twice.
"""

from __future__ import annotations

import numba
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# stream purposes
PURPOSE_DYNAMICS = 1
PURPOSE_INITIAL = 2

# counter slots inside one time step
SLOT_NOISE_A, SLOT_NOISE_B, SLOT_JUMP = 0, 1, 2
SLOTS_PER_STEP = 4


@numba.njit(inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit(cache=True)
def stream_key(seed, walker, purpose):
    k = mix64(np.uint64(seed) + GOLDEN * np.uint64(purpose))
    return mix64(k ^ mix64(np.uint64(walker) * GOLDEN + np.uint64(0x632BE59BD9B4E019)))


@numba.njit(inline="always", cache=True)
def uniform_at(key, counter):
    z = mix64(mix64(key + GOLDEN * (np.uint64(counter) + np.uint64(1))))
    return (z >> _S11) * _INV53


@numba.njit(inline="always", cache=True)
def normal_at(key, counter_a, counter_b):
    u1 = uniform_at(key, counter_a)
    u2 = uniform_at(key, counter_b)
    # 1 - u1 lies in (0, 1]
    return np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2)


@numba.njit(cache=True)
def _keys(seed, walker_ids, purpose):
    out = np.empty(walker_ids.size, dtype=np.uint64)
    for i in range(walker_ids.size):
        out[i] = stream_key(seed, walker_ids[i], purpose)
    return out


@numba.njit(cache=True)
def _uniforms(keys, counter):
    out = np.empty(keys.size)
    for i in range(keys.size):
        out[i] = uniform_at(keys[i], counter)
    return out


@numba.njit(cache=True)
def _normals(keys, counter_a, counter_b):
    out = np.empty(keys.size)
    for i in range(keys.size):
        out[i] = normal_at(keys[i], counter_a, counter_b)
    return out


def walker_keys(seed: int, walker_ids, purpose: int = PURPOSE_DYNAMICS) -> np.ndarray:
    ids = np.asarray(walker_ids, dtype=np.uint64).ravel()
    return _keys(np.uint64(seed), ids, purpose)


def uniforms(keys: np.ndarray, counter: int) -> np.ndarray:
    return _uniforms(keys, np.uint64(counter))


def normals(keys: np.ndarray, step: int) -> np.ndarray:
    base = np.uint64(step * SLOTS_PER_STEP)
    return _normals(keys, base + np.uint64(SLOT_NOISE_A), base + np.uint64(SLOT_NOISE_B))


def step_counters(step: int) -> tuple[int, int, int]:
    base = step * SLOTS_PER_STEP
    return base + SLOT_NOISE_A, base + SLOT_NOISE_B, base + SLOT_JUMP
