"""Deterministic random number generation.

The generator is SplitMix64 (Steele, Lea & Flood): a 64-bit counter that
advances by the golden-gamma constant 0x9E3779B97F4A7C15 modulo 2**64,
finalized with the murmur-style mix

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

All arithmetic is modulo 2**64. Because the state at step t is simply
``seed + t * gamma``, batches of draws are generated with vectorized
uint64 numpy arithmetic; scalar and vector paths produce the same stream.
The same seed yields the same sequence on every platform.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _fold_key(key) -> int:
    """Map an int or str key to a 64-bit value, deterministically."""
    if isinstance(key, (int, np.integer)):
        return int(key) & _MASK
    if isinstance(key, str):
        h = len(key) & _MASK
        for b in key.encode("utf-8"):
            h = _mix64((h + _GAMMA + b) & _MASK)
        return h
    raise ParameterError(f"rng keys must be int or str, got {type(key).__name__}")


class Rng:
    """SplitMix64 stream with uniform, normal, and permutation draws."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self._state = self.seed

    @classmethod
    def from_keys(cls, seed: int, *keys) -> "Rng":
        """Derive an independent stream from a base seed and a key path.

        Each key is folded into the seed via the SplitMix64 finalizer, so
        streams for distinct key paths are decorrelated and independent of
        the order in which they are created.
        """
        h = int(seed) & _MASK
        for key in keys:
            h = _mix64((h + _GAMMA) & _MASK ^ _fold_key(key))
        return cls(h)

    # -- core draws ------------------------------------------------------

    def next_uint64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _mix64(self._state)

    def _uint64_array(self, n: int) -> np.ndarray:
        base = self._state
        steps = np.arange(1, n + 1, dtype=np.uint64)
        z = steps * np.uint64(_GAMMA) + np.uint64(base)  # wraps mod 2**64
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        self._state = (base + n * _GAMMA) & _MASK
        return z

    # -- distributions ---------------------------------------------------

    def uniform01(self, size=None):
        """Uniform in [0, 1): top 53 bits of the output word."""
        if size is None:
            return (self.next_uint64() >> 11) * _INV_2_53
        n = int(np.prod(size))
        out = (self._uint64_array(n) >> np.uint64(11)).astype(np.float64)
        return (out * _INV_2_53).reshape(size)

    def uniform(self, low: float, high: float, size=None):
        return low + (high - low) * self.uniform01(size)

    def normal(self, size=None):
        """Standard normal via Box-Muller on consecutive uniform pairs."""
        scalar = size is None
        n = 1 if scalar else int(np.prod(size))
        m = (n + 1) // 2
        u1 = (self._uint64_array(m) >> np.uint64(11)).astype(np.float64)
        u1 = (u1 + 1.0) * _INV_2_53  # in (0, 1], keeps log finite
        u2 = (self._uint64_array(m) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        pairs = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return float(pairs[0]) if scalar else pairs.reshape(size)

    def integer(self, bound: int) -> int:
        """Integer in [0, bound). Modulo bias is below 2**-50 for small bounds."""
        if bound <= 0:
            raise ParameterError("bound must be positive")
        return self.next_uint64() % bound

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of arange(n)."""
        idx = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integer(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx
