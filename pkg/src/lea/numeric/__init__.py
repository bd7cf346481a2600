from lea.numeric.tensor import (
    ContractViolation,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    cross_entropy,
    dropout,
    embedding_lookup,
    gelu,
    layer_norm,
    matmul,
    mean_over_mask,
    mul,
    no_grad,
    parameter,
    reshape,
    scalar_scale,
    softmax_rows,
    sum_all,
    transpose,
)
from lea.numeric.gradcheck import GradCheckReport, gradient_check
from lea.numeric.checkpoint import CheckpointError, load_tensors, save_tensors

__all__ = [
    "CheckpointError", "ContractViolation", "GradCheckReport", "Tensor", "add", "as_tensor",
    "backward", "concat", "cross_entropy", "dropout", "embedding_lookup", "gelu",
    "gradient_check", "layer_norm", "load_tensors", "matmul", "mean_over_mask", "mul",
    "no_grad", "parameter", "reshape", "save_tensors", "scalar_scale", "softmax_rows",
    "sum_all", "transpose",
]
