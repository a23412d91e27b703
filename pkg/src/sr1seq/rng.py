"""Counter-based splitmix64 stream with Box-Muller normals.

The stream is fixed bit-for-bit: output ``i`` (0-based) of a generator seeded
with ``s`` is ``mix(s + (i + 1) * GOLDEN)``; uniforms take the top 53 bits.
Because outputs are a pure function of the counter, blocks of draws can be
produced with vectorized uint64 arithmetic and still match one-at-a-time use.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TWO_POW_M53 = 2.0 ** -53


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *indices: int) -> int:
    """Hash a base seed and a path of indices into an independent stream seed."""
    h = mix64(seed ^ 0x5851F42D4C957F2D)
    for i in indices:
        h = mix64(h ^ mix64((int(i) + 1) * GOLDEN))
    return h


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


class SeededRng:
    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._counter = 0
        self._spare: float | None = None

    def next_u64(self) -> int:
        self._counter += 1
        return mix64(self.seed + self._counter * GOLDEN)

    def u64_array(self, n: int) -> np.ndarray:
        counters = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _mix64_array(np.uint64(self.seed) + counters * np.uint64(GOLDEN))

    def next_uniform01(self) -> float:
        """Uniform on [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _TWO_POW_M53

    def uniform_array(self, n: int) -> np.ndarray:
        return (self.u64_array(n) >> np.uint64(11)).astype(float) * _TWO_POW_M53

    def next_gaussian(self) -> float:
        """Standard normal.  Each Box-Muller pair is produced at once; the
        second value is returned by the following call."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.next_uniform01()
        u2 = self.next_uniform01()
        radius = math.sqrt(-2.0 * math.log(u1))
        angle = 2.0 * math.pi * u2
        self._spare = radius * math.sin(angle)
        return radius * math.cos(angle)

    def gaussian_array(self, n: int) -> np.ndarray:
        return np.array([self.next_gaussian() for _ in range(n)])
