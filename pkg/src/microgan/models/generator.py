"""Residual U-NET enhancer.

Four down-sampling blocks (channel-transition conv then a residual stack
of three channel-preserving convs, followed by 2x2 average pooling), a
bottleneck residual block, and four up-sampling blocks (2x nearest
upsample, concat with the matching down-path skip, three convs mapping
back to the skip width), finished by a head conv with the leaky
rectifier. Output spatial size equals input size for any input divisible
by 16.
"""

import numpy as np

from ..nn import ops
from ..validation import ShapeError
from .layers import ConvLRelu, ResidualConvBlock

DOWN_BLOCKS = 4
POOL = 2


class _DownBlock:
    def __init__(self, name, c_in, c_out, rng, slope):
        self.trans = ConvLRelu(f"{name}.trans", c_in, c_out, rng, slope=slope)
        self.res = ResidualConvBlock(f"{name}.res", c_out, rng, slope=slope)

    def params(self):
        return self.trans.params() + self.res.params()


class _UpBlock:
    def __init__(self, name, c_in, c_out, rng, slope):
        self.convs = [
            ConvLRelu(f"{name}.conv1", c_in, c_out, rng, slope=slope),
            ConvLRelu(f"{name}.conv2", c_out, c_out, rng, slope=slope),
            ConvLRelu(f"{name}.conv3", c_out, c_out, rng, slope=slope),
        ]

    def params(self):
        return [p for conv in self.convs for p in conv.params()]


class Generator:
    """LQ -> HQ image enhancer with named parameters."""

    def __init__(self, in_channels=3, base_channels=16, lrelu_slope=0.1, seed=0):
        self.in_channels = in_channels
        self.base_channels = base_channels
        self.lrelu_slope = lrelu_slope
        self.seed = seed
        rng = np.random.default_rng(seed)
        widths = [base_channels * (1 << k) for k in range(DOWN_BLOCKS + 1)]
        self.down = []
        c_prev = in_channels
        for k in range(DOWN_BLOCKS):
            self.down.append(_DownBlock(f"down{k + 1}", c_prev, widths[k], rng, lrelu_slope))
            c_prev = widths[k]
        self.bottleneck = _DownBlock("bottleneck", widths[3], widths[4], rng, lrelu_slope)
        self.up = []
        for k in range(DOWN_BLOCKS):
            skip_w = widths[3 - k]
            up_w = widths[4 - k]
            self.up.append(_UpBlock(f"up{k + 1}", skip_w + up_w, skip_w, rng, lrelu_slope))
        self.head = ConvLRelu("head", widths[0], in_channels, rng, slope=lrelu_slope)

    def config(self):
        return {
            "kind": "generator",
            "in_channels": self.in_channels,
            "base_channels": self.base_channels,
            "lrelu_slope": self.lrelu_slope,
            "seed": self.seed,
        }

    def params(self):
        out = []
        for block in self.down:
            out += block.params()
        out += self.bottleneck.params()
        for block in self.up:
            out += block.params()
        out += self.head.params()
        return out

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def _check_input(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"expected input (n, {self.in_channels}, h, w), got shape {x.shape}"
            )
        div = POOL**DOWN_BLOCKS
        if x.shape[2] % div or x.shape[3] % div:
            raise ShapeError(
                f"spatial dims of {x.shape} must be divisible by {div}"
            )

    def forward(self, x, want_cache=False):
        """Run the network; returns (output, cache or None)."""
        x = np.asarray(x)
        self._check_input(x)
        skips = []
        down_caches = []
        h = x
        for block in self.down:
            t, tc = block.trans.forward(h)
            d, rc = block.res.forward(t)
            skips.append(d)
            h = ops.avg_pool(d, POOL)
            down_caches.append((tc, rc))
        bt, btc = self.bottleneck.trans.forward(h)
        u, brc = self.bottleneck.res.forward(bt)
        up_caches = []
        for k, block in enumerate(self.up):
            upsampled = ops.upsample_nn(u, POOL)
            skip = skips[DOWN_BLOCKS - 1 - k]
            cat = ops.concat_channels(skip, upsampled)  # skip channels first
            h = cat
            conv_caches = []
            for conv in block.convs:
                h, c = conv.forward(h)
                conv_caches.append(c)
            u = h
            up_caches.append((skip.shape[1], conv_caches))
        y, hc = self.head.forward(u)
        cache = (down_caches, (btc, brc), up_caches, hc) if want_cache else None
        return y, cache

    def backward(self, cache, grad_out, accumulate=True):
        """Backpropagate to the input; parameter grads accumulate if asked."""
        down_caches, (btc, brc), up_caches, hc = cache
        g = self.head.backward(hc, grad_out, accumulate)
        skip_grads = [None] * DOWN_BLOCKS
        for k in range(DOWN_BLOCKS - 1, -1, -1):
            block = self.up[k]
            skip_channels, conv_caches = up_caches[k]
            for conv, c in zip(reversed(block.convs), reversed(conv_caches)):
                g = conv.backward(c, g, accumulate)
            g_skip, g_up = ops.concat_channels_backward(g, skip_channels)
            skip_grads[DOWN_BLOCKS - 1 - k] = g_skip
            g = ops.upsample_nn_backward(g_up, POOL)
        g = self.bottleneck.res.backward(brc, g, accumulate)
        g = self.bottleneck.trans.backward(btc, g, accumulate)
        for k in range(DOWN_BLOCKS - 1, -1, -1):
            tc, rc = down_caches[k]
            g = ops.avg_pool_backward(g, POOL) + skip_grads[k]
            g = self.down[k].res.backward(rc, g, accumulate)
            g = self.down[k].trans.backward(tc, g, accumulate)
        return g
