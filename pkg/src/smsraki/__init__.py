"""SMS k-space unaliasing: scan-specific convolutional networks, slice-GRAPPA
baselines, an acquisition simulator, and a grid-search harness."""

from .augment import (
    TrainingSample,
    TrainingSet,
    build_split_slice_set,
    build_standard_set,
    enumerate_subsets,
)
from .dataio import (
    load_dataset,
    load_kernel,
    load_network,
    save_dataset,
    save_kernel,
    save_network,
)
from .errors import (
    ConfigError,
    CoverageError,
    DataError,
    GroupError,
    NumericalError,
    ParameterError,
    ShapeError,
    SmsRakiError,
)
from .fft import dft2_centered, fft2c, idft2_centered, ifft2c
from .grappa import (
    GrappaKernel,
    apply_kernel,
    fit_slice_grappa,
    fit_split_slice_grappa,
    kernel_as_conv_weights,
)
from .harness import (
    EvalRecord,
    ErrorMaps,
    GridSpec,
    HyperCombo,
    NormalizedRecord,
    error_map,
    evaluate,
    held_out_indices,
    normalize_and_rank,
    read_records_csv,
    run_grid,
    summarize,
    write_pgm,
    write_records_csv,
    write_summary_json,
)
from .network import (
    NetworkConfig,
    RakiNetwork,
    TrainRecord,
    build_network,
    forward,
    train,
    unalias,
)
from .ops import (
    BatchNormState,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    dropout_backward,
    dropout_forward,
    l1_loss,
    relu_backward,
    relu_forward,
)
from .optim import Adam
from .rng import Rng
from .sim import (
    SimTimeseries,
    SlicePacket,
    apply_caipi_shift,
    encode_slice,
    make_coils,
    make_packet,
    make_phantom,
    make_timeseries,
    simulate_dataset,
    sms_alias,
    undo_caipi_shift,
)

__all__ = [
    "Adam",
    "BatchNormState",
    "ConfigError",
    "CoverageError",
    "DataError",
    "EvalRecord",
    "ErrorMaps",
    "GrappaKernel",
    "GridSpec",
    "GroupError",
    "HyperCombo",
    "NetworkConfig",
    "NormalizedRecord",
    "NumericalError",
    "ParameterError",
    "RakiNetwork",
    "Rng",
    "ShapeError",
    "SimTimeseries",
    "SlicePacket",
    "SmsRakiError",
    "TrainRecord",
    "TrainingSample",
    "TrainingSet",
    "apply_caipi_shift",
    "apply_kernel",
    "batchnorm_backward",
    "batchnorm_forward",
    "build_network",
    "build_split_slice_set",
    "build_standard_set",
    "conv2d_backward",
    "conv2d_forward",
    "dft2_centered",
    "dropout_backward",
    "dropout_forward",
    "encode_slice",
    "enumerate_subsets",
    "error_map",
    "evaluate",
    "fft2c",
    "fit_slice_grappa",
    "fit_split_slice_grappa",
    "forward",
    "held_out_indices",
    "idft2_centered",
    "ifft2c",
    "kernel_as_conv_weights",
    "l1_loss",
    "load_dataset",
    "load_kernel",
    "load_network",
    "make_coils",
    "make_packet",
    "make_phantom",
    "make_timeseries",
    "normalize_and_rank",
    "read_records_csv",
    "relu_backward",
    "relu_forward",
    "run_grid",
    "save_dataset",
    "save_kernel",
    "save_network",
    "simulate_dataset",
    "sms_alias",
    "summarize",
    "train",
    "unalias",
    "undo_caipi_shift",
    "write_pgm",
    "write_records_csv",
    "write_summary_json",
]
