"""Splittable random streams for reproducible parallel Monte Carlo.

Each stream is a xoshiro256** state seeded through SplitMix64 from the pair
(master seed, stream index).  The state is a ``uint64[4]`` array so it can be
passed to and advanced inside numba kernels; stream ``k`` of a given seed is
the same no matter which worker draws from it or in which order.
"""

import math

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MASK64 = (1 << 64) - 1


@nb.njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@nb.njit(cache=True)
def splitmix64(x):
    """One SplitMix64 output for the 64-bit counter value ``x``."""
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def seed_state(seed, index, state):
    """Fill ``state`` with the stream for (seed, index)."""
    key = splitmix64(seed) ^ splitmix64(index * _GOLDEN + np.uint64(1))
    x = key
    for i in range(4):
        x = x + _GOLDEN
        state[i] = splitmix64(x)
    if state[0] == 0 and state[1] == 0 and state[2] == 0 and state[3] == 0:
        state[0] = np.uint64(1)


@nb.njit(cache=True)
def next_u64(state):
    s0 = state[0]
    s1 = state[1]
    s2 = state[2]
    s3 = state[3]
    result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
    t = s1 << np.uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3
    return result


@nb.njit(cache=True)
def uniform(state):
    """Uniform double on the open-closed interval (0, 1]."""
    return ((next_u64(state) >> np.uint64(11)) + 1) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True)
def exponential(state, rate):
    return -math.log(uniform(state)) / rate


def make_state(seed, index=0):
    """Return a fresh stream state for (seed, index) as a numpy array."""
    state = np.empty(4, dtype=np.uint64)
    seed_state(np.uint64(int(seed) & _MASK64), np.uint64(int(index) & _MASK64), state)
    return state


def stream_uniforms(seed, index, n):
    """First ``n`` uniforms of stream (seed, index); handy for tests."""
    return _fill_uniform(make_state(seed, index), n)


@nb.njit(cache=True)
def _fill_uniform(state, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform(state)
    return out
