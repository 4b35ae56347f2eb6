"""Portable counter-based random streams built on SplitMix64.

Every draw is a pure function of ``(key, counter)``: the i-th 64-bit word of a
stream is ``splitmix64(key + (i + 1) * 0x9E3779B97F4A7C15)``. Uniforms take the
top 53 bits; normals use Box-Muller on consecutive uniform pairs. Nothing here
depends on numpy's bit generators, so the streams can be reproduced exactly
in any language with 64-bit unsigned arithmetic.
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def splitmix64(key: int, counters) -> np.ndarray:
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(np.uint64(key & _MASK) + (c + np.uint64(1)) * GOLDEN)


def stream_key(seed: int, *parts: int) -> int:
    """Derive a sub-stream key from a seed and a tuple of small non-negative ints."""
    key = seed & _MASK
    for p in parts:
        key = int(splitmix64(key ^ (int(p) & _MASK), [0])[0])
    return key


class CounterStream:
    """Sequential reader over one keyed stream."""

    def __init__(self, key: int):
        self.key = key & _MASK
        self.counter = 0

    def words(self, n: int) -> np.ndarray:
        out = splitmix64(self.key, np.arange(self.counter, self.counter + n, dtype=np.uint64))
        self.counter += n
        return out

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        u = (self.words(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return low + (high - low) * u

    def normal(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return z[:n]
