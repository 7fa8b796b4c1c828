"""Network building blocks with explicit forward and backward passes.

Convolutions are cross-correlations over channel-stacked real tensors,
zero-padded by floor(k/2) so spatial dims are preserved, with a single
group (every input channel feeds every output channel) and no bias terms.
Tensors are (C, H, W) or batched (B, C, H, W) float64 arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, ParameterError, ShapeError
from .rng import Rng

# -- convolution ---------------------------------------------------------


def check_conv_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4:
        raise ShapeError(f"weights must be (out, in, k, k), got ndim={w.ndim}")
    if w.shape[2] != w.shape[3]:
        raise ShapeError(f"kernel must be square, got {w.shape[2]}x{w.shape[3]}")
    if w.shape[2] % 2 == 0:
        raise ParameterError(f"kernel size must be odd, got {w.shape[2]}")
    return w


def conv_init(out_channels: int, in_channels: int, kernel: int, rng: Rng) -> np.ndarray:
    """Fan-in scaled uniform init: bounds +/- sqrt(1 / (in * k * k))."""
    bound = np.sqrt(1.0 / (in_channels * kernel * kernel))
    return rng.uniform(-bound, bound, (out_channels, in_channels, kernel, kernel))


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected (C, H, W) or (B, C, H, W), got ndim={x.ndim}")


def _im2col(x4: np.ndarray, k: int) -> np.ndarray:
    """Zero-pad by k//2 and unfold to (B*H*W, C*k*k) patch rows."""
    b, c, h, w = x4.shape
    if k == 1:
        return np.ascontiguousarray(x4.transpose(0, 2, 3, 1)).reshape(b * h * w, c)
    p = k // 2
    xp = np.pad(x4, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (B, C, H, W, k, k)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        b * h * w, c * k * k
    )


def _conv_forward(x4: np.ndarray, w: np.ndarray):
    b, c, h, wd = x4.shape
    o, ci, k, _ = w.shape
    if c != ci:
        raise ShapeError(f"input has {c} channels but weights expect {ci}")
    cols = _im2col(x4, k)
    out = cols @ w.reshape(o, ci * k * k).T
    return out.reshape(b, h, wd, o).transpose(0, 3, 1, 2), cols


def _conv_backward_cached(cols, w, g4, need_grad_x=True):
    """Backward pass reusing the forward's im2col rows."""
    o, ci, k, _ = w.shape
    b, oc, h, wd = g4.shape
    if oc != o or cols.shape != (b * h * wd, ci * k * k):
        raise ShapeError(
            f"grad_out {g4.shape} / cols {cols.shape} inconsistent with "
            f"weights {w.shape}"
        )
    gmat = np.ascontiguousarray(g4.transpose(0, 2, 3, 1)).reshape(b * h * wd, o)
    grad_w = (gmat.T @ cols).reshape(o, ci, k, k)
    grad_x = None
    if need_grad_x:
        # grad wrt input is a conv of grad_out with channel-transposed,
        # spatially flipped weights.
        wt = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
        grad_x, _ = _conv_forward(g4, wt)
    return grad_x, grad_w


def _conv_backward(x4, w, g4, cols=None, need_grad_x=True):
    b, c, h, wd = x4.shape
    o, ci, k, _ = w.shape
    if g4.shape != (b, o, h, wd):
        raise ShapeError(
            f"grad_out shape {g4.shape} does not match output {(b, o, h, wd)}"
        )
    if cols is None:
        cols = _im2col(x4, k)
    return _conv_backward_cached(cols, w, g4, need_grad_x)


def conv2d_forward(x, w) -> np.ndarray:
    """Same-size single-group convolution; x (C,H,W) or (B,C,H,W)."""
    w = check_conv_weights(w)
    x4, squeeze = _as_batch(x)
    out, _ = _conv_forward(x4, w)
    return out[0] if squeeze else out


def conv2d_backward(x, w, grad_out):
    """Gradients of sum(grad_out * conv2d_forward(x, w)) wrt x and w."""
    w = check_conv_weights(w)
    x4, squeeze = _as_batch(x)
    g4, gsq = _as_batch(grad_out)
    if squeeze != gsq:
        raise ShapeError("x and grad_out must both be batched or both unbatched")
    grad_x, grad_w = _conv_backward(x4, w, g4)
    return (grad_x[0] if squeeze else grad_x), grad_w


# -- relu ----------------------------------------------------------------


def relu_forward(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x, grad_out) -> np.ndarray:
    """Subgradient at 0 is 0: gradient passes only where x > 0."""
    x = np.asarray(x)
    g = np.asarray(grad_out)
    if x.shape != g.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {g.shape}")
    return np.where(x > 0.0, g, 0.0)


# -- batch normalization --------------------------------------------------


@dataclass
class BatchNormState:
    """Per-channel scale/shift plus running statistics."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def create(cls, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        return cls(
            gamma=np.ones(channels),
            beta=np.zeros(channels),
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
            momentum=momentum,
            eps=eps,
        )

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


def batchnorm_forward(x, state: BatchNormState, mode: str = "train"):
    """Normalize per channel over (batch, H, W).

    Train mode uses batch statistics (biased variance) and updates the
    running stats with the configured momentum; infer mode uses running
    stats. Returns (out, cache); cache is None in infer mode.
    """
    x4, squeeze = _as_batch(x)
    if x4.shape[0] == 0:
        raise DataError("batch normalization over an empty batch")
    if x4.shape[1] != state.channels:
        raise ShapeError(
            f"input has {x4.shape[1]} channels but state has {state.channels}"
        )
    g = state.gamma[:, None, None]
    b = state.beta[:, None, None]
    if mode == "infer":
        inv = 1.0 / np.sqrt(state.running_var + state.eps)
        out = (x4 - state.running_mean[:, None, None]) * inv[:, None, None] * g + b
        return (out[0] if squeeze else out), None
    if mode != "train":
        raise ParameterError(f"mode must be 'train' or 'infer', got {mode!r}")
    mu = x4.mean(axis=(0, 2, 3))
    var = x4.var(axis=(0, 2, 3))
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (x4 - mu[:, None, None]) * inv[:, None, None]
    out = xhat * g + b
    m = state.momentum
    state.running_mean = (1.0 - m) * state.running_mean + m * mu
    state.running_var = (1.0 - m) * state.running_var + m * var
    cache = (xhat, inv, state.gamma, squeeze)
    return (out[0] if squeeze else out), cache


def batchnorm_backward(grad_out, cache):
    """Gradients wrt input, gamma, beta for a train-mode forward."""
    xhat, inv, gamma, squeeze = cache
    g4, _ = _as_batch(grad_out)
    if g4.shape != xhat.shape:
        raise ShapeError(f"grad shape {g4.shape} does not match forward {xhat.shape}")
    m = g4.shape[0] * g4.shape[2] * g4.shape[3]
    grad_beta = g4.sum(axis=(0, 2, 3))
    grad_gamma = (g4 * xhat).sum(axis=(0, 2, 3))
    coef = (gamma * inv)[:, None, None]
    grad_x = coef * (
        g4
        - grad_beta[:, None, None] / m
        - xhat * grad_gamma[:, None, None] / m
    )
    return (grad_x[0] if squeeze else grad_x), grad_gamma, grad_beta


# -- dropout ---------------------------------------------------------------


def dropout_forward(x, rate: float, rng: Rng | None, mode: str = "train"):
    """Inverted dropout: zero with probability rate, scale survivors by 1/(1-rate).

    Infer mode is the identity. Returns (out, mask); mask already carries
    the survivor scaling and is None when nothing was dropped.
    """
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if mode == "infer" or rate == 0.0:
        return x, None
    if mode != "train":
        raise ParameterError(f"mode must be 'train' or 'infer', got {mode!r}")
    keep = rng.uniform01(x.shape) >= rate
    mask = keep.astype(np.float64) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(grad_out, mask):
    if mask is None:
        return np.asarray(grad_out, dtype=np.float64)
    return np.asarray(grad_out) * mask


# -- L1 loss ---------------------------------------------------------------


def l1_loss(pred, target):
    """Mean absolute error and its subgradient (sign(0) = 0)."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"shape mismatch {p.shape} vs {t.shape}")
    diff = p - t
    loss = float(np.mean(np.abs(diff)))
    grad = np.sign(diff) / diff.size
    return loss, grad
