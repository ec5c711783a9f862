"""Minimal numeric engine: tensors, reverse-mode autodiff, Adam."""

from .optim import AdamState, adam_step
from .ops import (
    concat,
    conv2d,
    conv2d_backward,
    conv2d_direct,
    conv2d_forward,
    depth_to_space,
    l1_loss,
    leaky_relu,
    max_pool2,
    space_to_depth,
    upsample2,
)
from .tensor import Tensor, grad_enabled, no_grad

__all__ = [
    "AdamState",
    "Tensor",
    "adam_step",
    "concat",
    "conv2d",
    "conv2d_backward",
    "conv2d_direct",
    "conv2d_forward",
    "depth_to_space",
    "grad_enabled",
    "l1_loss",
    "leaky_relu",
    "max_pool2",
    "no_grad",
    "space_to_depth",
    "upsample2",
]
