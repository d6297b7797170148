"""Composable layers built on the numeric kernels.

Every layer returns (output, cache) from forward and takes (cache, grad)
in backward, so one model instance can keep several in-flight activations
(for example scoring real and fake batches) without state collisions.
Parameter gradients are only written when accumulate=True.
"""

import numpy as np

from .. import nn
from ..nn import ops


class ConvLRelu:
    """3x3 same-padding convolution followed by the leaky rectifier."""

    def __init__(self, name, c_in, c_out, rng, stride=1, slope=0.1, kernel=3):
        fan_in = c_in * kernel * kernel
        fan_out = c_out * kernel * kernel
        self.w = nn.Parameter(
            f"{name}.w", nn.glorot_uniform((c_out, c_in, kernel, kernel), fan_in, fan_out, rng)
        )
        self.b = nn.Parameter(f"{name}.b", np.zeros(c_out, dtype=np.float32))
        self.stride = stride
        self.slope = slope

    def forward(self, x):
        z = ops.conv2d(x, self.w.value, self.b.value, stride=self.stride)
        return ops.lrelu(z, self.slope), (x, z)

    def backward(self, cache, grad, accumulate=True):
        x, z = cache
        gz = ops.lrelu_backward(z, grad, self.slope)
        dx, dw, db = ops.conv2d_backward(x, self.w.value, gz, stride=self.stride)
        if accumulate:
            self.w.grad += dw
            self.b.grad += db
        return dx

    def params(self):
        return [self.w, self.b]


class ResidualConvBlock:
    """Three channel-preserving ConvLRelu layers with a skip addition."""

    def __init__(self, name, channels, rng, slope=0.1):
        self.convs = [
            ConvLRelu(f"{name}.conv{i}", channels, channels, rng, slope=slope)
            for i in (1, 2, 3)
        ]

    def forward(self, x):
        h = x
        caches = []
        for conv in self.convs:
            h, c = conv.forward(h)
            caches.append(c)
        return x + h, caches

    def backward(self, caches, grad, accumulate=True):
        dh = grad
        for conv, cache in zip(reversed(self.convs), reversed(caches)):
            dh = conv.backward(cache, dh, accumulate)
        return grad + dh  # skip path plus conv path

    def params(self):
        return [p for conv in self.convs for p in conv.params()]


class DenseLayer:
    """Fully connected affine layer."""

    def __init__(self, name, d_in, d_out, rng):
        self.w = nn.Parameter(f"{name}.w", nn.glorot_uniform((d_out, d_in), d_in, d_out, rng))
        self.b = nn.Parameter(f"{name}.b", np.zeros(d_out, dtype=np.float32))

    def forward(self, x):
        return ops.dense(x, self.w.value, self.b.value), x

    def backward(self, cache, grad, accumulate=True):
        dx, dw, db = ops.dense_backward(cache, self.w.value, grad)
        if accumulate:
            self.w.grad += dw
            self.b.grad += db
        return dx

    def params(self):
        return [self.w, self.b]
