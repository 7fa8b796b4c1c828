"""Real channel-stacked tensors and the complex <-> channel packing.

Complex multi-coil k-space is carried as float64 arrays of shape
(2 * coils, H, W): channel 2c holds the real part of coil c and channel
2c + 1 the imaginary part. All network layers operate on this packing.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def as_tensor3(a) -> np.ndarray:
    """Validate and return a (channels, H, W) float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"expected a (channels, H, W) array, got ndim={arr.ndim}")
    return arr


def complex_to_channels(c) -> np.ndarray:
    """Pack a complex (P, H, W) array into interleaved real channels (2P, H, W)."""
    c = np.asarray(c, dtype=np.complex128)
    if c.ndim == 2:
        c = c[None]
    if c.ndim != 3:
        raise ShapeError(f"expected a (coils, H, W) complex array, got ndim={c.ndim}")
    out = np.empty((2 * c.shape[0], c.shape[1], c.shape[2]), dtype=np.float64)
    out[0::2] = c.real
    out[1::2] = c.imag
    return out


def channels_to_complex(t) -> np.ndarray:
    """Inverse of complex_to_channels; channel count must be even."""
    t = as_tensor3(t)
    if t.shape[0] % 2 != 0:
        raise ShapeError(
            f"channel pairing requires an even channel count, got {t.shape[0]}"
        )
    return t[0::2] + 1j * t[1::2]
