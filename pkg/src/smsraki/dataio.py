"""Binary serialization: dataset container, trained networks, kernels.

All formats are little-endian. Complex values are stored as consecutive
float64 pairs (real, imaginary).

Dataset container (magic ``SMSSIM01``):
    magic[8] | u32 version | u32 H | u32 W | u32 coils | u32 slices |
    u32 frames | f64 fov_shift | f64 perturbation | f64 noise_sigma |
    i64 seed (-1 if unknown) |
    calibration payload: coil-major then slice-major, i.e. index order
    (coil, slice, row, col) with coil varying slowest |
    frame payload: index order (frame, coil, row, col)

Network file (magic ``RAKINET1``):
    magic[8] | u32 version | u32 num_layers | u32 filter_size |
    u32 num_filters | u32 penultimate_filters | u32 in_channels |
    u32 out_channels | u8 batch_norm | u8 dropout | f64 norm_scale |
    u32 layer_count | per layer:
        u32 out | u32 in | u32 k | u8 has_bn |
        f64 weights[out*in*k*k] |
        if has_bn: f64 momentum | f64 eps | f64 gamma[out] | f64 beta[out] |
                   f64 running_mean[out] | f64 running_var[out]

Kernel file (magic ``RAKIKRN1``):
    magic[8] | u32 version | i32 target_slice | i32 target_coil |
    u32 size | u32 coils | f64 lam | complex weights[coils*k*k]
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .grappa import GrappaKernel
from .network import Layer, NetworkConfig, RakiNetwork
from .ops import BatchNormState
from .sim import SimTimeseries

_DATASET_MAGIC = b"SMSSIM01"
_NETWORK_MAGIC = b"RAKINET1"
_KERNEL_MAGIC = b"RAKIKRN1"
_VERSION = 1


def _complex_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a).astype("<c16").tobytes()


def _read_complex(buf: memoryview, offset: int, shape) -> tuple[np.ndarray, int]:
    count = int(np.prod(shape))
    nbytes = count * 16
    arr = np.frombuffer(buf[offset : offset + nbytes], dtype="<c16")
    if arr.size != count:
        raise DataError("dataset file truncated")
    return arr.reshape(shape).astype(np.complex128), offset + nbytes


def _read_f64(buf: memoryview, offset: int, count: int) -> tuple[np.ndarray, int]:
    nbytes = count * 8
    arr = np.frombuffer(buf[offset : offset + nbytes], dtype="<f8")
    if arr.size != count:
        raise DataError("file truncated")
    return arr.astype(np.float64), offset + nbytes


# -- dataset container -----------------------------------------------------


def save_dataset(ts: SimTimeseries, path):
    h, w = ts.grid
    header = _DATASET_MAGIC + struct.pack(
        "<6I3dq",
        _VERSION,
        h,
        w,
        ts.coil_count,
        ts.n,
        ts.frame_count,
        ts.fov_shift,
        ts.perturbation,
        ts.noise_sigma,
        -1 if ts.seed is None else ts.seed,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(_complex_bytes(ts.calib.transpose(1, 0, 2, 3)))
        f.write(_complex_bytes(ts.frames))


def load_dataset(path) -> SimTimeseries:
    raw = memoryview(Path(path).read_bytes())
    if bytes(raw[:8]) != _DATASET_MAGIC:
        raise DataError(f"{path}: not a dataset container (bad magic)")
    fields = struct.unpack_from("<6I3dq", raw, 8)
    version, h, w, coils, slices, frames = fields[:6]
    fov_shift, perturbation, noise_sigma = fields[6:9]
    seed = fields[9]
    if version != _VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    offset = 8 + struct.calcsize("<6I3dq")
    calib_cs, offset = _read_complex(raw, offset, (coils, slices, h, w))
    frame_arr, offset = _read_complex(raw, offset, (frames, coils, h, w))
    return SimTimeseries(
        calib=calib_cs.transpose(1, 0, 2, 3).copy(),
        frames=frame_arr,
        fov_shift=fov_shift,
        perturbation=perturbation,
        noise_sigma=noise_sigma,
        seed=None if seed < 0 else int(seed),
    )


# -- trained networks --------------------------------------------------------


def save_network(net: RakiNetwork, path):
    cfg = net.config
    parts = [
        _NETWORK_MAGIC,
        struct.pack(
            "<7I2Bd",
            _VERSION,
            cfg.num_layers,
            cfg.filter_size,
            cfg.num_filters,
            cfg.penultimate_filters,
            cfg.in_channels,
            cfg.out_channels,
            int(cfg.batch_norm),
            int(cfg.dropout),
            net.norm_scale,
        ),
        struct.pack("<I", len(net.layers)),
    ]
    for layer in net.layers:
        o, c, k, _ = layer.weights.shape
        parts.append(struct.pack("<3IB", o, c, k, int(layer.bn is not None)))
        parts.append(layer.weights.astype("<f8").tobytes())
        if layer.bn is not None:
            bn = layer.bn
            parts.append(struct.pack("<2d", bn.momentum, bn.eps))
            for arr in (bn.gamma, bn.beta, bn.running_mean, bn.running_var):
                parts.append(arr.astype("<f8").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def load_network(path) -> RakiNetwork:
    raw = memoryview(Path(path).read_bytes())
    if bytes(raw[:8]) != _NETWORK_MAGIC:
        raise DataError(f"{path}: not a network file (bad magic)")
    fields = struct.unpack_from("<7I2Bd", raw, 8)
    version = fields[0]
    if version != _VERSION:
        raise DataError(f"{path}: unsupported network version {version}")
    cfg = NetworkConfig(
        num_layers=fields[1],
        filter_size=fields[2],
        num_filters=fields[3],
        penultimate_filters=fields[4],
        in_channels=fields[5],
        out_channels=fields[6],
        batch_norm=bool(fields[7]),
        dropout=bool(fields[8]),
    )
    norm_scale = fields[9]
    offset = 8 + struct.calcsize("<7I2Bd")
    (layer_count,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    layers = []
    shapes = cfg.layer_shapes()
    for i in range(layer_count):
        o, c, k, has_bn = struct.unpack_from("<3IB", raw, offset)
        offset += struct.calcsize("<3IB")
        flat, offset = _read_f64(raw, offset, o * c * k * k)
        weights = flat.reshape(o, c, k, k)
        bn = None
        if has_bn:
            momentum, eps = struct.unpack_from("<2d", raw, offset)
            offset += 16
            gamma, offset = _read_f64(raw, offset, o)
            beta, offset = _read_f64(raw, offset, o)
            rmean, offset = _read_f64(raw, offset, o)
            rvar, offset = _read_f64(raw, offset, o)
            bn = BatchNormState(gamma, beta, rmean, rvar, momentum, eps)
        final = i == layer_count - 1
        layers.append(
            Layer(weights=weights, bn=bn, relu=not final, dropout=cfg.dropout and not final)
        )
        if (o, c, k) != shapes[i]:
            raise DataError(f"{path}: layer {i} shape {(o, c, k)} != config {shapes[i]}")
    return RakiNetwork(layers=layers, config=cfg, norm_scale=norm_scale)


# -- kernels -------------------------------------------------------------------


def save_kernel(kernel: GrappaKernel, path):
    coils = kernel.weights.shape[0]
    with open(path, "wb") as f:
        f.write(_KERNEL_MAGIC)
        f.write(
            struct.pack(
                "<I2i2Id",
                _VERSION,
                kernel.target_slice,
                kernel.target_coil,
                kernel.size,
                coils,
                kernel.lam,
            )
        )
        f.write(_complex_bytes(kernel.weights))


def load_kernel(path) -> GrappaKernel:
    raw = memoryview(Path(path).read_bytes())
    if bytes(raw[:8]) != _KERNEL_MAGIC:
        raise DataError(f"{path}: not a kernel file (bad magic)")
    version, ts, tc, size, coils, lam = struct.unpack_from("<I2i2Id", raw, 8)
    if version != _VERSION:
        raise DataError(f"{path}: unsupported kernel version {version}")
    offset = 8 + struct.calcsize("<I2i2Id")
    weights, _ = _read_complex(raw, offset, (coils, size, size))
    return GrappaKernel(
        target_slice=ts, target_coil=tc, size=size, weights=weights, lam=lam
    )
