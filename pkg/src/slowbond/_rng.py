"""Random streams.

Two families are used:

* Grid samples come from numpy's counter-based Philox generator keyed by
  ``(seed, replica)``; sites are consumed in row-major order, so a grid can be
  materialized at once or streamed in row blocks with identical values.
* Poisson clocks of the particle system are addressed by ``(seed, bond,
  epoch_number)`` through a SplitMix64-style hash, which lets any process read
  epoch ``c`` of bond ``i`` without generating the others. This is what makes
  shifted clock sharing (the auxiliary interface processes) free.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MASK64 = (1 << 64) - 1
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SALT = np.uint64(0xD1B54A32D192ED03)
# streams may be negative bond indices; shift into uint64 range
_STREAM_OFFSET = 1 << 40
_INV_2_53 = 1.0 / 9007199254740992.0


def grid_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """Generator for one LPP grid, keyed by ``(seed, replica)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replica),))
    return np.random.Generator(np.random.Philox(ss))


def as_uint64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & _MASK64)


@njit(inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def stream_key(seed, stream):
    s = np.uint64(stream + _STREAM_OFFSET)
    return _mix64(_mix64(seed ^ _SALT) + s * _GOLDEN)


@njit(cache=True)
def stream_keys(seed, streams):
    out = np.empty(streams.shape[0], dtype=np.uint64)
    for a in range(streams.shape[0]):
        out[a] = stream_key(seed, streams[a])
    return out


@njit(cache=True)
def unit_exponential(key, counter):
    """Mean-one exponential number ``counter`` (1-based) of the stream ``key``."""
    bits = _mix64(_mix64(key + np.uint64(counter) * _GOLDEN) ^ key)
    u = (float(bits >> np.uint64(11)) + 0.5) * _INV_2_53
    return -np.log(u)
