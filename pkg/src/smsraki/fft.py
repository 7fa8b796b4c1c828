"""Centered 2D discrete Fourier transforms, radix-2, power-of-two sizes only.

Conventions:
  * DC sits at index (H//2, W//2) in both domains (centered arrays).
  * Orthonormal scaling: 1/sqrt(N) per axis in both directions, so the
    round trip is the identity and Parseval holds without extra factors.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import ShapeError
from .tensor import as_tensor3, channels_to_complex, complex_to_channels


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=32)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


@lru_cache(maxsize=64)
def _twiddles(m: int, sign: int) -> np.ndarray:
    half = m // 2
    return np.exp(sign * 2j * np.pi * np.arange(half) / m)


def _fft_lastaxis(a: np.ndarray, sign: int) -> np.ndarray:
    """Iterative radix-2 transform along the last axis; sign -1 forward, +1 inverse.

    Unscaled: forward computes sum x[n] exp(-2 pi i n k / N).
    """
    n = a.shape[-1]
    out = np.ascontiguousarray(a[..., _bit_reverse(n)], dtype=np.complex128)
    m = 2
    while m <= n:
        half = m // 2
        tw = _twiddles(m, sign)
        view = out.reshape(out.shape[:-1] + (n // m, m))
        t = view[..., half:] * tw
        view[..., half:] = view[..., :half] - t
        view[..., :half] += t
        m *= 2
    return out


def _check_grid(h: int, w: int):
    if not (_is_pow2(h) and _is_pow2(w)):
        raise ShapeError(f"grid dims must be powers of two, got {h}x{w}")


def _centered_2d(x: np.ndarray, sign: int) -> np.ndarray:
    h, w = x.shape[-2], x.shape[-1]
    _check_grid(h, w)
    y = np.fft.ifftshift(x, axes=(-2, -1))
    y = _fft_lastaxis(y, sign)
    y = _fft_lastaxis(y.swapaxes(-1, -2), sign).swapaxes(-1, -2)
    y = np.fft.fftshift(y, axes=(-2, -1))
    return y / np.sqrt(h * w)


def fft2c(x) -> np.ndarray:
    """Centered orthonormal 2D DFT of a complex array (..., H, W)."""
    return _centered_2d(np.asarray(x, dtype=np.complex128), -1)


def ifft2c(x) -> np.ndarray:
    """Inverse of fft2c."""
    return _centered_2d(np.asarray(x, dtype=np.complex128), +1)


def dft2_centered(t) -> np.ndarray:
    """Centered 2D DFT of a channel-packed tensor (2P, H, W) -> (2P, H, W)."""
    t = as_tensor3(t)
    return complex_to_channels(fft2c(channels_to_complex(t)))


def idft2_centered(t) -> np.ndarray:
    """Inverse of dft2_centered."""
    t = as_tensor3(t)
    return complex_to_channels(ifft2c(channels_to_complex(t)))
