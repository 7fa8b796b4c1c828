"""Configurable k-space interpolation network and its trainer.

Architecture for L layers on channel-stacked k-space input:
  * L == 1: a single bare convolution in_channels -> 2 (the linear,
    GRAPPA-degenerate shape).
  * L >= 2: (L - 2) same-size convolutions with num_filters outputs, then a
    penultimate 1x1 convolution with penultimate_filters outputs, then a
    final same-size convolution down to 2 channels.
Batch norm, ReLU, and 50% dropout (when enabled) follow every convolution
except the final one. No layer has a bias term.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .augment import TrainingSet
from .errors import ConfigError, CoverageError, DataError, ParameterError, ShapeError
from .ops import (
    BatchNormState,
    _conv_backward_cached,
    _conv_forward,
    batchnorm_backward,
    batchnorm_forward,
    conv_init,
    dropout_backward,
    dropout_forward,
    l1_loss,
    relu_backward,
    relu_forward,
)
from .optim import Adam
from .rng import Rng
from .sim import undo_caipi_shift
from .tensor import channels_to_complex, complex_to_channels

DROPOUT_RATE = 0.5


@dataclass
class NetworkConfig:
    num_layers: int
    filter_size: int
    num_filters: int
    penultimate_filters: int
    batch_norm: bool
    dropout: bool
    in_channels: int
    out_channels: int = 2

    def validate(self):
        problems = []
        if self.num_layers < 1:
            problems.append(f"num_layers must be >= 1, got {self.num_layers}")
        if self.filter_size < 1 or self.filter_size % 2 == 0:
            problems.append(f"filter_size must be odd and >= 1, got {self.filter_size}")
        if self.num_filters < 1:
            problems.append(f"num_filters must be >= 1, got {self.num_filters}")
        if self.num_layers >= 2 and self.penultimate_filters < 1:
            problems.append(
                f"penultimate_filters must be >= 1, got {self.penultimate_filters}"
            )
        if self.in_channels < 2 or self.in_channels % 2 != 0:
            problems.append(
                f"in_channels must be an even count >= 2, got {self.in_channels}"
            )
        if self.out_channels != 2:
            problems.append(f"out_channels must be 2, got {self.out_channels}")
        if problems:
            raise ConfigError("; ".join(problems))

    def layer_shapes(self) -> list[tuple[int, int, int]]:
        """(out_channels, in_channels, kernel) per layer, in order."""
        self.validate()
        if self.num_layers == 1:
            return [(self.out_channels, self.in_channels, self.filter_size)]
        shapes = []
        prev = self.in_channels
        for _ in range(self.num_layers - 2):
            shapes.append((self.num_filters, prev, self.filter_size))
            prev = self.num_filters
        shapes.append((self.penultimate_filters, prev, 1))
        shapes.append((self.out_channels, self.penultimate_filters, self.filter_size))
        return shapes

    def conv_weight_count(self) -> int:
        return sum(o * i * k * k for o, i, k in self.layer_shapes())


@dataclass
class Layer:
    weights: np.ndarray
    bn: BatchNormState | None
    relu: bool
    dropout: bool


@dataclass
class RakiNetwork:
    layers: list[Layer]
    config: NetworkConfig
    norm_scale: float = 1.0

    def parameters(self) -> list[np.ndarray]:
        params = []
        for layer in self.layers:
            params.append(layer.weights)
            if layer.bn is not None:
                params.append(layer.bn.gamma)
                params.append(layer.bn.beta)
        return params

    def conv_weight_count(self) -> int:
        return sum(layer.weights.size for layer in self.layers)


@dataclass
class TrainRecord:
    epochs: int
    wall_seconds: float
    final_loss: float
    history: list[float] = field(default_factory=list)
    steps: int = 0


def build_network(config: NetworkConfig, rng: Rng) -> RakiNetwork:
    """Instantiate a network with fan-in scaled uniform weights drawn from rng."""
    shapes = config.layer_shapes()
    last = len(shapes) - 1
    layers = []
    for i, (o, c, k) in enumerate(shapes):
        final = i == last
        layers.append(
            Layer(
                weights=conv_init(o, c, k, rng),
                bn=BatchNormState.create(o) if (config.batch_norm and not final) else None,
                relu=not final,
                dropout=config.dropout and not final,
            )
        )
    return RakiNetwork(layers=layers, config=config)


def forward(
    net: RakiNetwork, x: np.ndarray, mode: str = "infer", rng: Rng | None = None
) -> np.ndarray:
    """Run the network on (B, C, H, W) or (C, H, W) input."""
    out, _ = _forward_impl(net, x, mode, rng, keep_cache=False)
    return out


def _forward_impl(net, x, mode, rng, keep_cache):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    if x.ndim != 4:
        raise ShapeError(f"expected (B, C, H, W) input, got ndim={x.ndim}")
    if x.shape[1] != net.config.in_channels:
        raise ShapeError(
            f"input has {x.shape[1]} channels, network expects "
            f"{net.config.in_channels}"
        )
    if mode == "train" and any(l.dropout for l in net.layers) and rng is None:
        raise ParameterError("training with dropout requires an rng")
    caches = []
    for layer in net.layers:
        x, cols = _conv_forward(x, layer.weights)
        bn_cache = None
        if layer.bn is not None:
            x, bn_cache = batchnorm_forward(x, layer.bn, mode)
        pre_relu = None
        if layer.relu:
            pre_relu = x
            x = relu_forward(x)
        drop_mask = None
        if layer.dropout and mode == "train":
            x, drop_mask = dropout_forward(x, DROPOUT_RATE, rng, mode)
        if keep_cache:
            caches.append((cols, bn_cache, pre_relu, drop_mask))
    return (x[0] if squeeze else x), caches


def _backward_impl(net, caches, grad):
    """Gradients for every trainable array, ordered like net.parameters()."""
    grads_rev = []
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        cols, bn_cache, pre_relu, drop_mask = caches[i]
        if layer.dropout and drop_mask is not None:
            grad = dropout_backward(grad, drop_mask)
        if layer.relu:
            grad = relu_backward(pre_relu, grad)
        g_gamma = g_beta = None
        if layer.bn is not None:
            grad, g_gamma, g_beta = batchnorm_backward(grad, bn_cache)
        grad, g_w = _conv_backward_cached(cols, layer.weights, grad, need_grad_x=i > 0)
        entry = [g_w]
        if layer.bn is not None:
            entry.extend([g_gamma, g_beta])
        grads_rev.append(entry)
    grads = []
    for entry in reversed(grads_rev):
        grads.extend(entry)
    return grads


def train(
    net: RakiNetwork,
    tset: TrainingSet,
    max_epochs: int | None = None,
    max_seconds: float | None = None,
    lr: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    weight_decay: float = 0.0,
    batch_size: int = 48,
    rng: Rng | None = None,
) -> TrainRecord:
    """Shuffled mini-batch epochs of Adam on L1 loss until the budget runs out.

    The wall-clock budget is checked at epoch boundaries, so at least one
    epoch always runs and epoch-budget runs are bitwise reproducible given
    the rng seed. The network is updated in place; the training set's
    normalization scale is recorded on the network for inference.
    """
    if len(tset) == 0:
        raise DataError("training set is empty")
    if max_epochs is None and max_seconds is None:
        raise ParameterError("provide max_epochs and/or max_seconds")
    if max_epochs is not None and max_epochs < 1:
        raise ParameterError(f"max_epochs must be >= 1, got {max_epochs}")
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    if rng is None:
        rng = Rng(42)
    inputs, targets = tset.stacked()
    n_samples = inputs.shape[0]
    params = net.parameters()
    opt = Adam(params, lr=lr, beta1=beta1, beta2=beta2, weight_decay=weight_decay)
    net.norm_scale = tset.scale
    history = []
    steps = 0
    start = time.perf_counter()
    epoch = 0
    while True:
        if max_epochs is not None and epoch >= max_epochs:
            break
        if max_seconds is not None and epoch > 0 and (
            time.perf_counter() - start >= max_seconds
        ):
            break
        perm = rng.permutation(n_samples)
        epoch_loss = 0.0
        for lo in range(0, n_samples, batch_size):
            idx = perm[lo : lo + batch_size]
            xb = inputs[idx]
            tb = targets[idx]
            out, caches = _forward_impl(net, xb, "train", rng, keep_cache=True)
            loss, grad = l1_loss(out, tb)
            grads = _backward_impl(net, caches, grad.reshape(out.shape))
            opt.step(params, grads)
            steps += 1
            epoch_loss += loss * len(idx)
        history.append(epoch_loss / n_samples)
        epoch += 1
    return TrainRecord(
        epochs=epoch,
        wall_seconds=time.perf_counter() - start,
        final_loss=history[-1],
        history=history,
        steps=steps,
    )


def unalias(
    nets: dict[tuple[int, int], RakiNetwork],
    frame: np.ndarray,
    fov_shift: float = 0.0,
    unshift: bool = True,
) -> np.ndarray:
    """Apply one trained network per (slice, coil) to an aliased frame.

    Returns (n, coils, H, W) complex k-space. With unshift=True the CAIPI
    ramp is removed so slices land in unshifted coordinates; metrics
    against shifted calibration data should pass unshift=False.
    """
    frame = np.asarray(frame, dtype=np.complex128)
    if frame.ndim != 3:
        raise ShapeError(f"frame must be (coils, H, W), got ndim={frame.ndim}")
    if not nets:
        raise CoverageError("no networks supplied")
    n = max(s for s, _ in nets) + 1
    coils = max(c for _, c in nets) + 1
    missing = [(s, c) for s in range(n) for c in range(coils) if (s, c) not in nets]
    if missing:
        raise CoverageError(f"missing networks for (slice, coil): {missing[:8]}")
    if coils != frame.shape[0]:
        raise ShapeError(
            f"frame has {frame.shape[0]} coils but networks cover {coils}"
        )
    out = np.empty((n,) + frame.shape, dtype=np.complex128)
    channels = complex_to_channels(frame)
    for (s, c), model in nets.items():
        x = channels / model.norm_scale
        y = forward(model, x, "infer")
        out[s, c] = (y[0] + 1j * y[1]) * model.norm_scale
    if unshift:
        for s in range(n):
            out[s] = undo_caipi_shift(out[s], s, fov_shift)
    return out
