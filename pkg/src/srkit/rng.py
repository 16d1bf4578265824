"""Counter-based Gaussian stream.

Noise must be reproducible across runs, platforms and degrees of
parallelism, so instead of a stateful generator each variate is a pure
function of (seed, index):

  state_k = (seed + (k + 1) * 0x9E3779B97F4A7C15) mod 2^64
  mix(z):  z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
           z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31

Variate i draws counters k = 2i and 2i+1, maps them to
u1 = ((mix >> 11) + 1) * 2^-53 in (0, 1] and u2 = (mix >> 11) * 2^-53
in [0, 1), and returns sqrt(-2 ln u1) * cos(2 pi u2).
"""
from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(counter: np.ndarray, seed: int) -> np.ndarray:
    z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + (counter + np.uint64(1)) * _GAMMA
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def standard_gaussian(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Variates `offset .. offset+count-1` of stream `seed`, as float64.

    Slices of the same stream are position-stable: element i of the
    result equals variate offset+i no matter how the range is chunked.
    """
    idx = np.arange(offset, offset + count, dtype=np.uint64)
    w1 = _mix(idx * np.uint64(2), seed)
    w2 = _mix(idx * np.uint64(2) + np.uint64(1), seed)
    u1 = ((w1 >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = (w2 >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def gaussian_field(seed: int, shape: tuple[int, ...]) -> np.ndarray:
    """Standard-normal array of the given shape, row-major variate order."""
    n = int(np.prod(shape))
    return standard_gaussian(seed, n).reshape(shape)
