"""Implicit im2col for convolution backpropagation on a systolic array.

Address-mapped lowering of the transposed (input-loss) and dilated
(kernel-gradient) convolutions, a brute-force materialization oracle, and
a deterministic cycle/traffic model of a 16x16 input-stationary
accelerator comparing the implicit path against host-side zero-space
reorganization.
"""

__version__ = "0.1.0"

from .addressing import (
    CompressedBurst,
    OutOfRange,
    gather_row_dilated,
    gather_tile_transposed,
    in_area0_transposed,
    in_area1_transposed,
    in_zero_dilated,
    map_dilated,
    map_transposed,
)
from .geometry import InvalidGeometry, LayerGeometry, derive
from .reference import (
    ShapeMismatch,
    Tensor4D,
    conv_forward,
    explicit_im2col,
    gradient_backward_ref,
    loss_backward_ref,
    materialize_loss_operand,
)
from .simulator import (
    ConfigError,
    MaskPayloadMismatch,
    PEArrayState,
    PrologueLatencies,
    SimConfig,
    SimReport,
    account,
    crossbar_recover,
    run_gemm,
)
from .workloads import (
    ComparisonRow,
    LayerSpec,
    MissingCounterpart,
    aggregate,
    builtin_catalog,
    sparsity_report,
    stride2_catalog,
    synth_operands,
)

__all__ = [
    "CompressedBurst", "ComparisonRow", "ConfigError", "InvalidGeometry",
    "LayerGeometry", "LayerSpec", "MaskPayloadMismatch", "MissingCounterpart",
    "OutOfRange", "PEArrayState", "PrologueLatencies", "ShapeMismatch",
    "SimConfig", "SimReport", "Tensor4D", "account", "aggregate",
    "builtin_catalog", "conv_forward", "crossbar_recover", "derive",
    "explicit_im2col", "gather_row_dilated", "gather_tile_transposed",
    "gradient_backward_ref", "in_area0_transposed", "in_area1_transposed",
    "in_zero_dilated", "loss_backward_ref", "map_dilated", "map_transposed",
    "materialize_loss_operand", "run_gemm", "sparsity_report",
    "stride2_catalog", "synth_operands",
]
