"""Independent reference implementations used as test oracles.

These are deliberately naive (nested loops, direct summation) and stay
separate from the library code paths they check.
"""

import numpy as np


def naive_dft2_centered(x: np.ndarray) -> np.ndarray:
    """Direct O(N^4) centered orthonormal 2D DFT of a complex (H, W) array."""
    h, w = x.shape
    ys = np.arange(h) - h // 2
    xs = np.arange(w) - w // 2
    out = np.zeros((h, w), dtype=np.complex128)
    for ky in range(h):
        for kx in range(w):
            acc = 0.0 + 0.0j
            for iy in range(h):
                for ix in range(w):
                    phase = (ys[ky] * ys[iy]) / h + (xs[kx] * xs[ix]) / w
                    acc += x[iy, ix] * np.exp(-2j * np.pi * phase)
            out[ky, kx] = acc
    return out / np.sqrt(h * w)


def naive_conv2d(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Six-nested-loop same-size cross-correlation with zero padding."""
    c, h, wd = x.shape
    o, ci, k, _ = w.shape
    assert c == ci
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    out = np.zeros((o, h, wd))
    for oc in range(o):
        for ic in range(c):
            for iy in range(h):
                for ix in range(wd):
                    acc = 0.0
                    for a in range(k):
                        for b in range(k):
                            acc += xp[ic, iy + a, ix + b] * w[oc, ic, a, b]
                    out[oc, iy, ix] += acc
    return out


def finite_diff_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function wrt every element of x."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-30)
    return float(np.max(np.abs(a - b)) / denom)
