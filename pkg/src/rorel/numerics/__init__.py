"""Tensor arithmetic with reverse-mode gradients, optimizer, schedule,
gradient checker and checkpoint IO."""

from .tensor import (
    Tensor,
    ShapeMismatchError,
    add,
    astensor,
    concat,
    cross_entropy,
    dropout,
    embedding_lookup,
    embedding_table,
    layer_norm,
    matmul,
    mean,
    mul,
    ones,
    relu,
    reshape,
    slice_,
    softmax,
    sub,
    sum_,
    transpose,
    xavier_uniform,
    zeros,
)
from .gradcheck import grad_check
from .optim import OptimizerState, adam_init, adam_step, clip_global_norm, lr_at
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "Tensor",
    "ShapeMismatchError",
    "add",
    "astensor",
    "concat",
    "cross_entropy",
    "dropout",
    "embedding_lookup",
    "embedding_table",
    "layer_norm",
    "matmul",
    "mean",
    "mul",
    "ones",
    "relu",
    "reshape",
    "slice_",
    "softmax",
    "sub",
    "sum_",
    "transpose",
    "xavier_uniform",
    "zeros",
    "grad_check",
    "OptimizerState",
    "adam_init",
    "adam_step",
    "clip_global_norm",
    "lr_at",
    "CheckpointError",
    "load_checkpoint",
    "save_checkpoint",
]
