"""Closed-form slice-GRAPPA and split-slice-GRAPPA kernels.

Kernels are complex convolutional operators fit by Tikhonov-regularized
least squares on calibration k-space. Fitting uses only interior points
(where the full k x k neighborhood exists); application zero-pads so the
output grid matches the input. The split-slice fit stacks one block per
single-band slice with a zero target for every non-target slice, which
penalizes inter-slice leakage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericalError, ParameterError, ShapeError


@dataclass
class GrappaKernel:
    target_slice: int
    target_coil: int
    size: int
    weights: np.ndarray  # (coils, k, k) complex, correlation orientation
    lam: float


def _interior_features(ks: np.ndarray, k: int) -> np.ndarray:
    """Rows of flattened k x k multi-coil neighborhoods at interior points.

    Returns ((H-k+1)*(W-k+1), coils*k*k); column order is (coil, dy, dx).
    """
    c, h, w = ks.shape
    win = sliding_window_view(ks, (k, k), axis=(1, 2))  # (C, H-k+1, W-k+1, k, k)
    return np.ascontiguousarray(win.transpose(1, 2, 0, 3, 4)).reshape(
        (h - k + 1) * (w - k + 1), c * k * k
    )


def _check_fit_args(ks: np.ndarray, k: int):
    if ks.ndim != 3:
        raise ShapeError(f"input must be (coils, H, W), got ndim={ks.ndim}")
    if k % 2 == 0 or k < 1:
        raise ParameterError(f"kernel size must be odd and positive, got {k}")
    if ks.shape[1] < k or ks.shape[2] < k:
        raise ShapeError(f"grid {ks.shape[1:]} smaller than kernel {k}")


def _cholesky_solve(g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Solve the Hermitian positive-definite system g x = h."""
    try:
        low = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "normal matrix is singular; refit with lam > 0"
        ) from exc
    n = g.shape[0]
    y = np.zeros(n, dtype=np.complex128)
    for i in range(n):
        y[i] = (h[i] - low[i, :i] @ y[:i]) / low[i, i]
    upper = low.conj().T
    x = np.zeros(n, dtype=np.complex128)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - upper[i, i + 1 :] @ x[i + 1 :]) / upper[i, i]
    return x


def _solve_ridge(gram, rhs, rows, lam):
    if lam is None:
        lam = 1e-6 * float(np.real(np.trace(gram))) / rows
    g = gram + lam * np.eye(gram.shape[0])
    return _cholesky_solve(g, rhs), lam


def fit_slice_grappa(
    aliased: np.ndarray, target: np.ndarray, k: int, lam: float | None = None
) -> GrappaKernel:
    """Fit one kernel mapping the aliased multi-coil frame to one slice/coil.

    aliased: (coils, H, W) calibration-frame input; target: (H, W).
    lam defaults to 1e-6 * trace(A^H A) / rows.
    """
    aliased = np.asarray(aliased, dtype=np.complex128)
    target = np.asarray(target, dtype=np.complex128)
    _check_fit_args(aliased, k)
    if target.shape != aliased.shape[1:]:
        raise ShapeError(f"target {target.shape} does not match grid {aliased.shape[1:]}")
    p = k // 2
    a = _interior_features(aliased, k)
    b = target[p : target.shape[0] - p, p : target.shape[1] - p].reshape(-1)
    w, lam = _solve_ridge(a.conj().T @ a, a.conj().T @ b, a.shape[0], lam)
    c = aliased.shape[0]
    return GrappaKernel(
        target_slice=-1, target_coil=-1, size=k, weights=w.reshape(c, k, k), lam=lam
    )


def fit_split_slice_grappa(
    calib: np.ndarray,
    target_slice: int,
    target_coil: int,
    k: int,
    lam: float | None = None,
) -> GrappaKernel:
    """Fit with one block per single-band slice; non-target blocks have
    zero targets, so the kernel suppresses leakage from other slices.

    calib: (n, coils, H, W) CAIPI-shifted single-band k-space.
    """
    calib = np.asarray(calib, dtype=np.complex128)
    if calib.ndim != 4:
        raise ShapeError(f"calib must be (slices, coils, H, W), got ndim={calib.ndim}")
    n = calib.shape[0]
    if not 0 <= target_slice < n:
        raise ParameterError(f"target_slice {target_slice} out of range [0, {n})")
    if not 0 <= target_coil < calib.shape[1]:
        raise ParameterError(
            f"target_coil {target_coil} out of range [0, {calib.shape[1]})"
        )
    _check_fit_args(calib[0], k)
    p = k // 2
    h, w = calib.shape[2], calib.shape[3]
    gram = None
    rows = 0
    for s in range(n):
        a = _interior_features(calib[s], k)
        gram = a.conj().T @ a if gram is None else gram + a.conj().T @ a
        rows += a.shape[0]
        if s == target_slice:
            b = calib[target_slice, target_coil, p : h - p, p : w - p].reshape(-1)
            rhs = a.conj().T @ b
    wts, lam = _solve_ridge(gram, rhs, rows, lam)
    return GrappaKernel(
        target_slice=target_slice,
        target_coil=target_coil,
        size=k,
        weights=wts.reshape(calib.shape[1], k, k),
        lam=lam,
    )


def apply_kernel(kernel: GrappaKernel, frame: np.ndarray) -> np.ndarray:
    """Complex correlation of the multi-coil frame with the kernel,
    zero-padded to preserve the grid: (coils, H, W) -> (H, W)."""
    frame = np.asarray(frame, dtype=np.complex128)
    if frame.ndim != 3 or frame.shape[0] != kernel.weights.shape[0]:
        raise ShapeError(
            f"frame {frame.shape} does not match kernel coils "
            f"{kernel.weights.shape[0]}"
        )
    k = kernel.size
    p = k // 2
    fp = np.pad(frame, ((0, 0), (p, p), (p, p)))
    win = sliding_window_view(fp, (k, k), axis=(1, 2))
    return np.einsum("chwab,cab->hw", win, kernel.weights, optimize=True)


def kernel_as_conv_weights(kernel: GrappaKernel) -> np.ndarray:
    """Express the complex kernel as real channel-stacked conv weights.

    Output (2, 2*coils, k, k) matches the network representation: input
    channel 2c is Re(coil c), 2c+1 is Im(coil c); output channels are
    (Re, Im) of the estimate.
    """
    c, k, _ = kernel.weights.shape
    wr = kernel.weights.real
    wi = kernel.weights.imag
    out = np.zeros((2, 2 * c, k, k))
    out[0, 0::2] = wr
    out[0, 1::2] = -wi
    out[1, 0::2] = wi
    out[1, 1::2] = wr
    return out
