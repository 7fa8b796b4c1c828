"""Training-set construction: the single-sample standard set and the
split-slice augmented set of synthetically aliased subset sums.

For an n-slice packet every subset of slices yields one sample: the input
is the coil-wise sum of the included slices' k-space and the target is the
target slice/coil k-space when that slice is included, all-zero otherwise.
All 2**n subsets are used, including the empty one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError
from .tensor import complex_to_channels


def _pow2_scale(peak: float) -> float:
    """Smallest power of two >= peak. Dividing by a power of two only
    touches the exponent, so normalization is lossless and subset sums
    keep their exact additive structure."""
    if peak <= 0.0:
        return 1.0
    return float(2.0 ** np.ceil(np.log2(peak)))


def enumerate_subsets(n: int) -> list[int]:
    """All 2**n slice-subset bit masks in ascending integer order."""
    if not 1 <= n <= 16:
        raise ParameterError(f"subset enumeration supports 1 <= n <= 16, got {n}")
    return list(range(1 << n))


@dataclass
class TrainingSample:
    input: np.ndarray  # (2 * coils, H, W) real channels
    target: np.ndarray  # (2, H, W) real channels
    mask: int  # slice-subset bit pattern

    def target_included(self, target_slice: int) -> bool:
        return bool((self.mask >> target_slice) & 1)


@dataclass
class TrainingSet:
    samples: list[TrainingSample]
    target_slice: int
    target_coil: int
    provenance: str  # "standard" | "split-slice"
    scale: float = 1.0  # divisor applied to every input/target; multiply to undo

    def __len__(self) -> int:
        return len(self.samples)

    def stacked(self):
        """(S, 2C, H, W) inputs and (S, 2, H, W) targets as contiguous arrays."""
        x = np.stack([s.input for s in self.samples])
        t = np.stack([s.target for s in self.samples])
        return x, t


def _check_targets(calib: np.ndarray, target_slice: int, target_coil: int):
    if calib.ndim != 4:
        raise ShapeError(
            f"calibration must be (slices, coils, H, W), got ndim={calib.ndim}"
        )
    n, coils = calib.shape[0], calib.shape[1]
    if not 0 <= target_slice < n:
        raise ParameterError(f"target_slice {target_slice} out of range [0, {n})")
    if not 0 <= target_coil < coils:
        raise ParameterError(f"target_coil {target_coil} out of range [0, {coils})")


def build_split_slice_set(
    calib: np.ndarray, target_slice: int, target_coil: int
) -> TrainingSet:
    """Split-slice augmented set from CAIPI-shifted single-band calibration.

    calib: (n, coils, H, W) complex. One global scale (peak magnitude of
    the full-mask input) normalizes every sample and target; it is stored
    on the set for de-normalization at inference.
    """
    calib = np.asarray(calib, dtype=np.complex128)
    _check_targets(calib, target_slice, target_coil)
    n = calib.shape[0]
    full_input = calib.sum(axis=0)
    scale = _pow2_scale(float(np.max(np.abs(full_input))))
    zero_target = np.zeros((2,) + calib.shape[2:], dtype=np.float64)
    samples = []
    for mask in enumerate_subsets(n):
        members = [s for s in range(n) if (mask >> s) & 1]
        if mask == (1 << n) - 1:
            ks_in = full_input
        elif members:
            ks_in = calib[members].sum(axis=0)
        else:
            ks_in = np.zeros_like(full_input)
        if (mask >> target_slice) & 1:
            target = complex_to_channels(calib[target_slice, target_coil]) / scale
        else:
            target = zero_target
        samples.append(
            TrainingSample(
                input=complex_to_channels(ks_in) / scale, target=target, mask=mask
            )
        )
    return TrainingSet(
        samples=samples,
        target_slice=target_slice,
        target_coil=target_coil,
        provenance="split-slice",
        scale=scale,
    )


def build_standard_set(
    calib: np.ndarray,
    acquired_frame: np.ndarray,
    target_slice: int,
    target_coil: int,
) -> TrainingSet:
    """Standard single-sample set: acquired aliased frame in, calibration out."""
    calib = np.asarray(calib, dtype=np.complex128)
    acquired_frame = np.asarray(acquired_frame, dtype=np.complex128)
    _check_targets(calib, target_slice, target_coil)
    if acquired_frame.shape != calib.shape[1:]:
        raise ShapeError(
            f"acquired frame {acquired_frame.shape} does not match "
            f"calibration coils/grid {calib.shape[1:]}"
        )
    scale = _pow2_scale(float(np.max(np.abs(acquired_frame))))
    full_mask = (1 << calib.shape[0]) - 1
    sample = TrainingSample(
        input=complex_to_channels(acquired_frame) / scale,
        target=complex_to_channels(calib[target_slice, target_coil]) / scale,
        mask=full_mask,
    )
    return TrainingSet(
        samples=[sample],
        target_slice=target_slice,
        target_coil=target_coil,
        provenance="standard",
        scale=scale,
    )
