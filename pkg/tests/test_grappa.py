import numpy as np
import pytest

from smsraki.errors import NumericalError, ShapeError
from smsraki.grappa import (
    apply_kernel,
    fit_slice_grappa,
    fit_split_slice_grappa,
    kernel_as_conv_weights,
)
from smsraki.ops import conv2d_forward
from smsraki.rng import Rng
from smsraki.sim import make_coils, make_packet, make_phantom
from smsraki.tensor import complex_to_channels


def _rand_ks(coils, h, w, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((coils, h, w)) + 1j * rng.standard_normal((coils, h, w))


def _packet(grid=16, coils=4, n=2, seed=0):
    rng = Rng(seed)
    imgs = make_phantom(grid, n, rng)
    maps = make_coils(grid, coils, rng)
    return make_packet(imgs, maps)


def test_identity_system_yields_delta_kernel():
    ks = _rand_ks(3, 12, 12, 0)
    kernel = fit_slice_grappa(ks, ks[1], k=3, lam=0.0)
    expect = np.zeros((3, 3, 3), dtype=complex)
    expect[1, 1, 1] = 1.0
    assert np.max(np.abs(kernel.weights - expect)) < 1e-10
    assert np.max(np.abs(apply_kernel(kernel, ks) - ks[1])) < 1e-8


def test_matches_pseudo_inverse_oracle():
    # independent dense route: ridge via pinv of the augmented system
    ks = _rand_ks(4, 16, 16, 1)
    target = _rand_ks(1, 16, 16, 2)[0]
    k = 3
    kernel = fit_slice_grappa(ks, target, k=k)
    from smsraki.grappa import _interior_features

    a = _interior_features(ks, k)
    p = k // 2
    b = target[p:-p, p:-p].reshape(-1)
    aug = np.vstack([a, np.sqrt(kernel.lam) * np.eye(a.shape[1])])
    baug = np.concatenate([b, np.zeros(a.shape[1])])
    w_oracle = np.linalg.pinv(aug) @ baug
    assert np.max(np.abs(kernel.weights.reshape(-1) - w_oracle)) < 1e-8


def test_ridge_limit_shrinks_weights():
    ks = _rand_ks(3, 12, 12, 3)
    target = _rand_ks(1, 12, 12, 4)[0]
    small = fit_slice_grappa(ks, target, 3, lam=1e-9)
    huge = fit_slice_grappa(ks, target, 3, lam=1e12)
    assert np.max(np.abs(huge.weights)) < 1e-6
    assert np.max(np.abs(small.weights)) > 1e-3


def test_singular_with_zero_lam_raises():
    ks = _rand_ks(2, 10, 10, 5)
    ks = np.concatenate([ks, ks[:1]], axis=0)  # duplicated coil -> singular
    with pytest.raises(NumericalError):
        fit_slice_grappa(ks, ks[0], 3, lam=0.0)


def test_split_single_slice_matches_slice_fit():
    packet = _packet(n=1)
    split = fit_split_slice_grappa(packet.slices, 0, 1, k=3)
    plain = fit_slice_grappa(packet.slices[0], packet.slices[0, 1], k=3)
    assert np.array_equal(split.weights, plain.weights)


def test_leakage_blocks_removed_reproduce_slice_fit():
    # dropping every leakage block leaves the passthrough system: fitting
    # the target slice against itself via fit_slice_grappa builds the same
    # normal equations
    packet = _packet(n=2, seed=2)
    split_no_leak = fit_slice_grappa(packet.slices[0], packet.slices[0, 0], k=3)
    one_slice = fit_split_slice_grappa(packet.slices[:1], 0, 0, k=3)
    assert np.array_equal(split_no_leak.weights, one_slice.weights)


def test_orthogonal_coil_support_decouples():
    # slice A lives on coils 0/1, slice B on coils 2/3: the stacked fit
    # zeroes the B-coil taps, leaks nothing, and matches the single fit
    rng = np.random.default_rng(6)
    h = w = 16
    calib = np.zeros((2, 4, h, w), dtype=complex)
    calib[0, :2] = _rand_ks(2, h, w, 7)
    calib[1, 2:] = _rand_ks(2, h, w, 8)
    split = fit_split_slice_grappa(calib, 0, 0, k=3, lam=1e-8)
    single = fit_slice_grappa(calib[0], calib[0, 0], k=3, lam=1e-8)
    leak = apply_kernel(split, calib[1])
    assert np.max(np.abs(leak)) < 1e-6
    assert np.max(np.abs(split.weights[:2] - single.weights[:2])) < 1e-6
    assert np.max(np.abs(split.weights[2:])) < 1e-6


def test_leakage_suppressed_on_simulation():
    packet = _packet(n=2, seed=3)
    kernel = fit_split_slice_grappa(packet.slices, 0, 0, k=5)
    on_target = np.mean(np.abs(apply_kernel(kernel, packet.slices[0])))
    on_other = np.mean(np.abs(apply_kernel(kernel, packet.slices[1])))
    assert on_other < on_target


def test_apply_delta_kernel_passthrough():
    ks = _rand_ks(3, 8, 8, 9)
    from smsraki.grappa import GrappaKernel

    w = np.zeros((3, 3, 3), dtype=complex)
    w[2, 1, 1] = 1.0
    kernel = GrappaKernel(0, 0, 3, w, 0.0)
    assert np.max(np.abs(apply_kernel(kernel, ks) - ks[2])) < 1e-14


def test_apply_consistent_with_fit():
    packet = _packet(n=2, seed=4)
    aliased = packet.slices.sum(axis=0)
    kernel = fit_slice_grappa(aliased, packet.slices[0, 0], k=5)
    est = apply_kernel(kernel, aliased)
    p = 2
    resid = np.mean(np.abs(est - packet.slices[0, 0])[p:-p, p:-p])
    scale = np.mean(np.abs(packet.slices[0, 0]))
    assert resid < 0.2 * scale  # least-squares consistency on training data


def test_complex_kernel_equals_real_channel_conv():
    packet = _packet(n=2, seed=5)
    aliased = packet.slices.sum(axis=0)
    kernel = fit_split_slice_grappa(packet.slices, 0, 0, k=3)
    complex_out = apply_kernel(kernel, aliased)
    conv_out = conv2d_forward(complex_to_channels(aliased), kernel_as_conv_weights(kernel))
    assert np.max(np.abs(conv_out[0] - complex_out.real)) < 1e-10
    assert np.max(np.abs(conv_out[1] - complex_out.imag)) < 1e-10


def test_normal_equation_residual():
    ks = _rand_ks(4, 16, 16, 10)
    target = _rand_ks(1, 16, 16, 11)[0]
    kernel = fit_slice_grappa(ks, target, 3)
    from smsraki.grappa import _interior_features

    a = _interior_features(ks, 3)
    p = 1
    b = target[p:-p, p:-p].reshape(-1)
    g = a.conj().T @ a + kernel.lam * np.eye(a.shape[1])
    resid = g @ kernel.weights.reshape(-1) - a.conj().T @ b
    assert np.max(np.abs(resid)) / np.max(np.abs(a.conj().T @ b)) < 1e-8


def test_shape_errors():
    with pytest.raises(ShapeError):
        fit_slice_grappa(_rand_ks(2, 8, 8, 0), np.zeros((4, 4), dtype=complex), 3)
    kernel = fit_slice_grappa(_rand_ks(2, 8, 8, 0), _rand_ks(1, 8, 8, 1)[0], 3)
    with pytest.raises(ShapeError):
        apply_kernel(kernel, _rand_ks(3, 8, 8, 2))
