"""Minimal float64 autodiff engine."""
from .gradcheck import analytic_grads, grad_check, numeric_grads
from .optim import OptimizerState, adam_step, clip_grad_norm, sgd_step
from .serialize import load_tensors, save_tensors
from .tensor import (
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    flip_rows,
    gru,
    log,
    matmul,
    mean_all,
    mul,
    recording,
    relu,
    reshape,
    scale,
    sigmoid,
    smooth_l1,
    softmax_rows,
    sub,
    sum_all,
    take_rows,
    tanh,
    transpose,
)

__all__ = [
    "analytic_grads",
    "grad_check",
    "numeric_grads",
    "OptimizerState",
    "adam_step",
    "clip_grad_norm",
    "sgd_step",
    "load_tensors",
    "save_tensors",
    "Tape",
    "Tensor",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "flip_rows",
    "gru",
    "log",
    "matmul",
    "mean_all",
    "mul",
    "recording",
    "relu",
    "reshape",
    "scale",
    "sigmoid",
    "smooth_l1",
    "softmax_rows",
    "sub",
    "sum_all",
    "take_rows",
    "tanh",
    "transpose",
]
