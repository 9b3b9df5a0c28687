"""Differentiable numeric core: tensors, convolutions, optimizer, oracles."""

from .tensor import Tensor, concat, no_grad
from .conv import (
    cdc2d,
    conv2d,
    conv_output_size,
    max_pool2d,
    resize2d,
    resize_bilinear,
    bilinear_weights,
    upsample_nearest2d,
    upsample_weights,
)
from .optim import Adam, AdamState, adam_step
from .gradcheck import finite_diff_grad, relative_error
from .serialize import read_tensor, write_tensor

__all__ = [
    "Tensor", "concat", "no_grad",
    "conv2d", "cdc2d", "conv_output_size", "max_pool2d",
    "resize2d", "resize_bilinear", "bilinear_weights",
    "upsample_nearest2d", "upsample_weights",
    "Adam", "AdamState", "adam_step",
    "finite_diff_grad", "relative_error",
    "read_tensor", "write_tensor",
]
