"""Deterministic differentiable numerical core."""

from .autodiff import (
    ShapeError,
    Tape,
    TapeRecord,
    Tensor,
    add,
    concat_cols,
    concat_rows,
    constant,
    matmul,
    mean_all,
    mul,
    relu,
    reshape,
    reverse_time,
    scale,
    sigmoid,
    slice_cols,
    sub,
    sum_all,
    take_rows,
    tanh,
    transpose,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import finite_diff_check
from .ops import (
    LOG_CLAMP,
    affine,
    diag_ssm_scan,
    layer_norm,
    nll_onehot,
    softmax_rows,
    weighted_cross_entropy,
)
from .params import ParamStore, adam_step

__all__ = [
    "CheckpointError", "LOG_CLAMP", "ParamStore", "ShapeError", "Tape",
    "TapeRecord", "Tensor", "adam_step", "add", "affine", "concat_cols", "concat_rows",
    "constant", "diag_ssm_scan", "finite_diff_check", "layer_norm",
    "load_checkpoint", "matmul", "mean_all", "mul", "nll_onehot", "relu",
    "reshape", "reverse_time", "save_checkpoint", "scale", "sigmoid",
    "slice_cols", "softmax_rows", "sub", "sum_all", "take_rows", "tanh",
    "transpose", "weighted_cross_entropy",
]
