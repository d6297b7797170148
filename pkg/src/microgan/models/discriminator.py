"""Convolutional realism scorer.

A stem convolution feeds ten blocks of four conv+LReLU layers each. Early
blocks stride down until the feature map matches the pooling window, a
4x4 average pool collapses it to 1x1, and two fully connected layers emit
one pre-sigmoid logit per batch element. Channel width doubles every
other block up to a cap.
"""

import math

import numpy as np

from ..nn import ops
from ..validation import ShapeError
from .layers import ConvLRelu, DenseLayer

NUM_BLOCKS = 10
CONVS_PER_BLOCK = 4


class Discriminator:
    def __init__(
        self,
        in_channels=3,
        base_channels=16,
        input_size=256,
        pool_size=4,
        fc_hidden=64,
        channel_cap=256,
        lrelu_slope=0.1,
        seed=0,
    ):
        if input_size < pool_size:
            raise ValueError(f"input_size {input_size} smaller than pool_size {pool_size}")
        ratio = input_size / pool_size
        n_stride2 = int(round(math.log2(ratio)))
        if 2**n_stride2 != ratio or n_stride2 > NUM_BLOCKS:
            raise ValueError(
                f"input_size/pool_size must be a power of two reachable within "
                f"{NUM_BLOCKS} blocks, got {input_size}/{pool_size}"
            )
        self.in_channels = in_channels
        self.base_channels = base_channels
        self.input_size = input_size
        self.pool_size = pool_size
        self.fc_hidden = fc_hidden
        self.channel_cap = channel_cap
        self.lrelu_slope = lrelu_slope
        self.seed = seed

        rng = np.random.default_rng(seed)
        self.stem = ConvLRelu("stem", in_channels, base_channels, rng, slope=lrelu_slope)
        self.blocks = []
        c_prev = base_channels
        for k in range(1, NUM_BLOCKS + 1):
            width = min(channel_cap, base_channels * (1 << ((k - 1) // 2)))
            stride = 2 if k <= n_stride2 else 1
            convs = [
                ConvLRelu(f"block{k}.conv1", c_prev, width, rng, stride=stride, slope=lrelu_slope)
            ]
            convs += [
                ConvLRelu(f"block{k}.conv{i}", width, width, rng, slope=lrelu_slope)
                for i in (2, 3, 4)
            ]
            self.blocks.append(convs)
            c_prev = width
        self.final_channels = c_prev
        self.fc1 = DenseLayer("fc1", c_prev, fc_hidden, rng)
        self.fc2 = DenseLayer("fc2", fc_hidden, 1, rng)

    def config(self):
        return {
            "kind": "discriminator",
            "in_channels": self.in_channels,
            "base_channels": self.base_channels,
            "input_size": self.input_size,
            "pool_size": self.pool_size,
            "fc_hidden": self.fc_hidden,
            "channel_cap": self.channel_cap,
            "lrelu_slope": self.lrelu_slope,
            "seed": self.seed,
        }

    def params(self):
        out = self.stem.params()
        for convs in self.blocks:
            for conv in convs:
                out += conv.params()
        return out + self.fc1.params() + self.fc2.params()

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def _check_input(self, x):
        expected = (self.in_channels, self.input_size, self.input_size)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(f"expected input (n, {expected[0]}, {expected[1]}, "
                             f"{expected[2]}), got shape {x.shape}")

    def forward(self, x, want_cache=False):
        """Score a batch; returns (logits of shape (n, 1), cache or None)."""
        x = np.asarray(x)
        self._check_input(x)
        h, stem_c = self.stem.forward(x)
        block_caches = []
        for convs in self.blocks:
            caches = []
            for conv in convs:
                h, c = conv.forward(h)
                caches.append(c)
            block_caches.append(caches)
        pooled = ops.avg_pool(h, self.pool_size)  # (n, c, 1, 1)
        flat = pooled.reshape(pooled.shape[0], -1)
        z1, fc1_c = self.fc1.forward(flat)
        a1 = ops.lrelu(z1, self.lrelu_slope)
        logit, fc2_c = self.fc2.forward(a1)
        cache = (stem_c, block_caches, pooled.shape, fc1_c, z1, fc2_c) if want_cache else None
        return logit, cache

    def backward(self, cache, grad_logit, accumulate=True):
        """Backpropagate to the input image batch."""
        stem_c, block_caches, pooled_shape, fc1_c, z1, fc2_c = cache
        g = self.fc2.backward(fc2_c, grad_logit, accumulate)
        g = ops.lrelu_backward(z1, g, self.lrelu_slope)
        g = self.fc1.backward(fc1_c, g, accumulate)
        g = ops.avg_pool_backward(g.reshape(pooled_shape), self.pool_size)
        for convs, caches in zip(reversed(self.blocks), reversed(block_caches)):
            for conv, c in zip(reversed(convs), reversed(caches)):
                g = conv.backward(c, g, accumulate)
        return self.stem.backward(stem_c, g, accumulate)

    @staticmethod
    def probability(logit):
        """The sigmoid-activated output shown at the end of the network."""
        return ops.sigmoid(np.asarray(logit))
