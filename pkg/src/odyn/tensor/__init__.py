"""Tensor core: arrays + reverse-mode autodiff, layers, and Adam."""

from .backend import active_backend
from .core import (
    DiffRecord,
    Tensor,
    add,
    backward,
    concat,
    gather_rows,
    slice_channels,
    get_default_dtype,
    matmul,
    mean_all,
    mul,
    no_grad,
    precision,
    reshape,
    scale,
    segment_sum,
    set_default_dtype,
    sub,
    sum_all,
    zeros,
)
from .functional import (
    batch_norm,
    bce_loss,
    conv2d,
    dense,
    maxpool2x2,
    mse_loss,
    relu,
    sigmoid,
    transp_conv2d,
)
from .layers import LayerSpec, Network, bn, conv, fc, infer_shapes, mp, tconv
from .layers import relu as relu_spec
from .layers import sigmoid as sigmoid_spec
from .optim import AdamState, adam_step, zero_grads

__all__ = [
    "Tensor",
    "DiffRecord",
    "backward",
    "no_grad",
    "precision",
    "set_default_dtype",
    "get_default_dtype",
    "zeros",
    "add",
    "sub",
    "mul",
    "scale",
    "reshape",
    "concat",
    "matmul",
    "gather_rows",
    "slice_channels",
    "segment_sum",
    "sum_all",
    "mean_all",
    "dense",
    "conv2d",
    "transp_conv2d",
    "maxpool2x2",
    "batch_norm",
    "relu",
    "sigmoid",
    "bce_loss",
    "mse_loss",
    "LayerSpec",
    "Network",
    "infer_shapes",
    "fc",
    "conv",
    "tconv",
    "mp",
    "bn",
    "relu_spec",
    "sigmoid_spec",
    "AdamState",
    "adam_step",
    "zero_grads",
    "active_backend",
]
