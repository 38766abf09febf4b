"""Deterministic random number generation.

All randomness in this package (noise synthesis, crop placement) comes from
SplitMix64 used in counter mode: output ``i`` of stream ``seed`` is

    mix64(seed + (i + 1) * 0x9E3779B97F4A7C15)

with the standard SplitMix64 finalizer ``mix64``.  Gaussian samples are
produced from consecutive output pairs by the Box-Muller transform.  The
generator is fully specified here so that any run with the same seed
produces the same sample stream, independent of library RNG internals.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO53 = float(1 << 53)


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-mode SplitMix64 stream over a 64-bit seed."""

    def __init__(self, seed):
        self._seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    def next_uint64(self, n):
        """Next ``n`` raw 64-bit outputs of the stream."""
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        return _mix64(self._seed + idx * _GOLDEN)

    def uniform(self, n):
        """``n`` doubles uniform on [0, 1), 53-bit resolution."""
        return (self.next_uint64(n) >> np.uint64(11)).astype(np.float64) / _TWO53

    def gaussian(self, n):
        """``n`` standard normal doubles via Box-Muller.

        Each output pair consumes two raw outputs: u1 in (0, 1] (so the log
        is finite) and u2 in [0, 1).
        """
        pairs = (n + 1) // 2
        raw = self.next_uint64(2 * pairs)
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) / _TWO53
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) / _TWO53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:n]

    def integers(self, lo, hi, n):
        """``n`` integers uniform on [lo, hi) by rejection-free modulo.

        The modulo bias is below 2**-40 for the ranges used here (crop
        offsets), which is irrelevant for sampling purposes but keeps the
        stream consumption exactly ``n`` outputs.
        """
        span = int(hi) - int(lo)
        if span <= 0:
            raise ValueError("empty integer range")
        return lo + (self.next_uint64(n) % np.uint64(span)).astype(np.int64)
