"""Synthetic SMS acquisition: phantoms, coil maps, CAIPI-shifted slice
packets, and a perturbed aliased timeseries with a calibration block.

Geometry conventions: arrays are (slices, coils, H, W); axis -2 (rows) is
the phase-encode direction, so CAIPI phase ramps run along rows. All
k-space arrays are centered (DC at H//2, W//2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .fft import _is_pow2, fft2c
from .rng import Rng


def _ellipse_mask(h, w, cy, cx, a, b, theta):
    yy, xx = np.mgrid[0:h, 0:w]
    dy = yy - cy
    dx = xx - cx
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _bandlimit(img: np.ndarray, sigma_px: float = 0.8) -> np.ndarray:
    """Gaussian apodization in k-space; keeps the spectrum compact so small
    grids behave like sampled smooth objects."""
    from .fft import ifft2c

    h, w = img.shape
    my = (np.arange(h) - h // 2)[:, None]
    mx = (np.arange(w) - w // 2)[None, :]
    taper = np.exp(-2.0 * np.pi**2 * sigma_px**2 * ((my / h) ** 2 + (mx / w) ** 2))
    return np.real(ifft2c(fft2c(img) * taper))


def make_phantom(grid, slice_count: int, rng: Rng) -> list[np.ndarray]:
    """Ellipse-composite phantom images, one per slice, values in [0, 1].

    Each slice gets its own randomized base ellipse and a handful of
    internal ellipses, then a mild band limit so the spectrum decays.
    """
    h, w = (grid, grid) if np.isscalar(grid) else grid
    if not (_is_pow2(h) and _is_pow2(w)):
        raise ShapeError(f"grid must be powers of two, got {h}x{w}")
    if slice_count < 1:
        raise ParameterError(f"slice_count must be >= 1, got {slice_count}")
    images = []
    for _ in range(slice_count):
        img = np.zeros((h, w))
        cy = h / 2 + rng.uniform(-0.06, 0.06) * h
        cx = w / 2 + rng.uniform(-0.06, 0.06) * w
        base_a = rng.uniform(0.30, 0.40) * w
        base_b = rng.uniform(0.30, 0.40) * h
        theta = rng.uniform(0.0, np.pi)
        img[_ellipse_mask(h, w, cy, cx, base_a, base_b, theta)] = 0.7
        for _ in range(3):
            ecy = cy + rng.uniform(-0.18, 0.18) * h
            ecx = cx + rng.uniform(-0.18, 0.18) * w
            ea = rng.uniform(0.05, 0.16) * w
            eb = rng.uniform(0.05, 0.16) * h
            eth = rng.uniform(0.0, np.pi)
            delta = rng.uniform(0.15, 0.45) * (1.0 if rng.uniform01() < 0.5 else -1.0)
            img[_ellipse_mask(h, w, ecy, ecx, ea, eb, eth)] += delta
        img = np.clip(img, 0.0, 1.0)
        images.append(np.clip(_bandlimit(img), 0.0, 1.0))
    return images


def make_coils(grid, coil_count: int, rng: Rng) -> np.ndarray:
    """Complex Gaussian-lobe sensitivities, (coils, H, W), max magnitude 1.

    Lobes are centered around the grid perimeter with jittered angles; each
    coil carries a smooth linear phase so no two profiles are proportional.
    """
    h, w = (grid, grid) if np.isscalar(grid) else grid
    if coil_count < 2:
        raise ParameterError("unaliasing requires at least 2 coils")
    yy, xx = np.mgrid[0:h, 0:w]
    radius = 0.52 * min(h, w)
    sigma = 0.55 * min(h, w)
    maps = np.empty((coil_count, h, w), dtype=np.complex128)
    for c in range(coil_count):
        ang = 2.0 * np.pi * (c + rng.uniform(-0.2, 0.2)) / coil_count
        cy = h / 2 + radius * np.sin(ang)
        cx = w / 2 + radius * np.cos(ang)
        mag = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
        gy = rng.uniform(-2.5, 2.5)
        gx = rng.uniform(-2.5, 2.5)
        phase = rng.uniform(0.0, 2.0 * np.pi) + gy * (yy - cy) / h + gx * (xx - cx) / w
        maps[c] = mag * np.exp(1j * phase)
    maps /= np.max(np.abs(maps))
    return maps


def encode_slice(image: np.ndarray, coils: np.ndarray) -> np.ndarray:
    """Multi-coil k-space of one slice: fft2c(coil sensitivity * image)."""
    image = np.asarray(image)
    coils = np.asarray(coils, dtype=np.complex128)
    if coils.ndim != 3 or coils.shape[1:] != image.shape:
        raise ShapeError(
            f"coil maps {coils.shape} do not match image {image.shape}"
        )
    return fft2c(coils * image[None])


def caipi_ramp(h: int, slice_index: int, fov_shift: float) -> np.ndarray:
    """Linear phase along phase-encode for an image shift of
    slice_index * fov_shift * H voxels (need not be integer)."""
    delta = slice_index * fov_shift * h
    ky = np.arange(h) - h // 2
    return np.exp(-2j * np.pi * ky * delta / h)


def apply_caipi_shift(ks: np.ndarray, slice_index: int, fov_shift: float) -> np.ndarray:
    """Apply the CAIPI phase ramp; image-domain content rolls down by
    slice_index * fov_shift * H rows."""
    ks = np.asarray(ks, dtype=np.complex128)
    ramp = caipi_ramp(ks.shape[-2], slice_index, fov_shift)
    return ks * ramp[:, None]


def undo_caipi_shift(ks: np.ndarray, slice_index: int, fov_shift: float) -> np.ndarray:
    """Exact inverse of apply_caipi_shift (the ramp has unit modulus)."""
    ks = np.asarray(ks, dtype=np.complex128)
    ramp = caipi_ramp(ks.shape[-2], slice_index, fov_shift)
    return ks * np.conj(ramp)[:, None]


@dataclass
class SlicePacket:
    """The n single-band multi-coil k-space slices excited together.

    slices: (n, coils, H, W) complex, already CAIPI-shifted; slice s
    carries an image-domain shift of s * fov_shift * H rows.
    """

    slices: np.ndarray
    fov_shift: float

    @property
    def n(self) -> int:
        return self.slices.shape[0]

    @property
    def coil_count(self) -> int:
        return self.slices.shape[1]

    @property
    def grid(self):
        return self.slices.shape[2], self.slices.shape[3]


def make_packet(images, coils, fov_shift: float | None = None) -> SlicePacket:
    """Encode per-slice images into a CAIPI-shifted packet.

    fov_shift defaults to 1/n.
    """
    n = len(images)
    if fov_shift is None:
        fov_shift = 1.0 / n
    slices = np.stack(
        [
            apply_caipi_shift(encode_slice(images[s], coils), s, fov_shift)
            for s in range(n)
        ]
    )
    return SlicePacket(slices=slices, fov_shift=fov_shift)


def sms_alias(packet) -> np.ndarray:
    """Elementwise complex sum over slices -> (coils, H, W)."""
    slices = packet.slices if isinstance(packet, SlicePacket) else packet
    if isinstance(slices, (list, tuple)):
        shapes = {np.asarray(s).shape for s in slices}
        if len(shapes) > 1:
            raise ShapeError(f"inconsistent slice grids: {sorted(shapes)}")
        slices = np.stack([np.asarray(s) for s in slices])
    slices = np.asarray(slices)
    return slices.sum(axis=0)


@dataclass
class SimTimeseries:
    """Calibration block plus aliased frames.

    calib:  (n, coils, H, W) single-band CAIPI-shifted k-space labels.
    frames: (F, coils, H, W) aliased k-space; frame 0 is the unperturbed
            training input, frames 1.. are held out.
    """

    calib: np.ndarray
    frames: np.ndarray
    fov_shift: float
    perturbation: float
    noise_sigma: float
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.calib.shape[0]

    @property
    def coil_count(self) -> int:
        return self.calib.shape[1]

    @property
    def grid(self):
        return self.calib.shape[2], self.calib.shape[3]

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]


def _complex_noise(rng: Rng, sigma: float, shape) -> np.ndarray:
    return sigma * (rng.normal(shape) + 1j * rng.normal(shape))


def make_timeseries(
    packet: SlicePacket,
    frames: int,
    perturbation: float,
    noise_sigma: float,
    rng: Rng,
    calib_noise: bool = False,
) -> SimTimeseries:
    """Build a timeseries from a packet.

    Frame 0 is the plain slice sum. Every later frame rescales each slice
    by a factor drawn uniformly from [1 - a, 1 + a] (a scalar intensity
    modulation commutes with the Fourier encoding) and adds complex white
    Gaussian noise with per-component std noise_sigma to k-space. The
    calibration block stays noiseless unless calib_noise is set.
    """
    if frames < 2:
        raise ParameterError(f"need at least 2 frames, got {frames}")
    clean = packet.slices
    n = packet.n
    out = np.empty((frames,) + clean.shape[1:], dtype=np.complex128)
    out[0] = clean.sum(axis=0)
    for f in range(1, frames):
        alphas = 1.0 + rng.uniform(-perturbation, perturbation, n)
        frame = (alphas[:, None, None, None] * clean).sum(axis=0)
        if noise_sigma > 0.0:
            frame = frame + _complex_noise(rng, noise_sigma, frame.shape)
        out[f] = frame
    calib = clean.copy()
    if calib_noise and noise_sigma > 0.0:
        calib = calib + _complex_noise(rng, noise_sigma, calib.shape)
    return SimTimeseries(
        calib=calib,
        frames=out,
        fov_shift=packet.fov_shift,
        perturbation=perturbation,
        noise_sigma=noise_sigma,
    )


def simulate_dataset(
    grid,
    coil_count: int,
    sms_factor: int,
    frames: int,
    perturbation: float,
    noise_sigma: float,
    seed: int,
    fov_shift: float | None = None,
    calib_noise: bool = False,
) -> SimTimeseries:
    """One-call simulator: phantom -> coils -> packet -> timeseries.

    noise_sigma is interpreted relative to the peak aliased k-space
    magnitude, so values like 0.02 mean 2% noise regardless of grid size.
    """
    rng = Rng.from_keys(seed, "sim")
    images = make_phantom(grid, sms_factor, rng)
    coils = make_coils(grid, coil_count, rng)
    packet = make_packet(images, coils, fov_shift)
    scale = float(np.max(np.abs(sms_alias(packet))))
    ts = make_timeseries(
        packet, frames, perturbation, noise_sigma * scale, rng, calib_noise
    )
    ts.seed = seed
    return ts
