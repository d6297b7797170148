"""Deterministic numeric kernels with explicit forward/backward contracts."""

from .gradcheck import NonDeterministicOpError, grad_check
from .ops import (
    avg_pool,
    avg_pool_backward,
    concat_channels,
    concat_channels_backward,
    conv2d,
    conv2d_backward,
    dense,
    dense_backward,
    lrelu,
    lrelu_backward,
    sigmoid,
    sigmoid_backward,
    upsample_nn,
    upsample_nn_backward,
)
from .params import Parameter, glorot_uniform, value_of

__all__ = [
    "Parameter",
    "glorot_uniform",
    "value_of",
    "conv2d",
    "conv2d_backward",
    "lrelu",
    "lrelu_backward",
    "avg_pool",
    "avg_pool_backward",
    "upsample_nn",
    "upsample_nn_backward",
    "concat_channels",
    "concat_channels_backward",
    "dense",
    "dense_backward",
    "sigmoid",
    "sigmoid_backward",
    "grad_check",
    "NonDeterministicOpError",
]
