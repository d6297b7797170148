"""Numeric kernels for the networks: forward ops and exact analytic gradients.

All ops take and return 4-axis (batch, channel, height, width) arrays, are
pure, and preserve the input dtype (float32 in the models, float64 inside
gradient checks). Reductions (pooling means, dense dot products) accumulate
in 64-bit before casting back.
"""

import numpy as np

from ..validation import ShapeError, check_finite, check_nchw
from .params import value_of


def _resolve_padding(padding, kh, kw):
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"'same' padding requires odd kernels, got {kh}x{kw}")
        return (kh - 1) // 2, (kw - 1) // 2
    p = int(padding)
    if p < 0:
        raise ValueError(f"padding must be >= 0, got {p}")
    return p, p


def _conv_windows(x_padded, kh, kw, stride):
    """Sliding-window view (n, c, oh, ow, kh, kw) of a padded input."""
    n, c, hp, wp = x_padded.shape
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    sn, sc, sh, sw = x_padded.strides
    return np.lib.stride_tricks.as_strided(
        x_padded,
        shape=(n, c, oh, ow, kh, kw),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )


def conv2d(x, weights, bias=None, stride=1, padding="same"):
    """2-D cross-correlation (no kernel flip) with per-channel bias.

    weights: (c_out, c_in, kh, kw); bias: (c_out,) or None.
    Output spatial size is floor((h + 2*pad - kh) / stride) + 1; "same"
    with stride 1 preserves height and width.
    """
    x = check_nchw(x, "input")
    w = value_of(weights)
    if w.ndim != 4:
        raise ShapeError(f"weights must be 4-D (c_out, c_in, kh, kw), got {w.shape}")
    c_out, c_in, kh, kw = w.shape
    if x.shape[1] != c_in:
        raise ShapeError(
            f"channel mismatch: input shape {x.shape} has {x.shape[1]} channels, "
            f"weights shape {w.shape} expect {c_in}"
        )
    check_finite(x, "input")
    ph, pw = _resolve_padding(padding, kh, kw)
    if x.shape[2] + 2 * ph < kh or x.shape[3] + 2 * pw < kw:
        raise ShapeError(
            f"kernel {kh}x{kw} does not fit padded input of shape {x.shape} "
            f"with padding ({ph}, {pw})"
        )
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    win = _conv_windows(xp, kh, kw, stride)
    # (n, c_in, oh, ow, kh, kw) . (c_out, c_in, kh, kw) -> (n, oh, ow, c_out)
    y = np.tensordot(win, w, axes=[(1, 4, 5), (1, 2, 3)])
    y = np.ascontiguousarray(y.transpose(0, 3, 1, 2))
    if bias is not None:
        b = value_of(bias)
        if b.shape != (c_out,):
            raise ShapeError(f"bias shape {b.shape} does not match c_out={c_out}")
        y += b[None, :, None, None]
    return y


def conv2d_backward(x, weights, output_grad, stride=1, padding="same"):
    """Gradients of :func:`conv2d` w.r.t. input, weights and bias."""
    x = check_nchw(x, "input")
    w = value_of(weights)
    g = check_nchw(output_grad, "output_grad")
    c_out, c_in, kh, kw = w.shape
    ph, pw = _resolve_padding(padding, kh, kw)
    oh = (x.shape[2] + 2 * ph - kh) // stride + 1
    ow = (x.shape[3] + 2 * pw - kw) // stride + 1
    expected = (x.shape[0], c_out, oh, ow)
    if g.shape != expected:
        raise ShapeError(
            f"output_grad shape {g.shape} does not match forward output {expected}"
        )
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    win = _conv_windows(xp, kh, kw, stride)
    # weight grad: correlate input windows with the output gradient
    wg = np.tensordot(g, win, axes=[(0, 2, 3), (0, 2, 3)])  # (c_out, c_in, kh, kw)
    bg = g.sum(axis=(0, 2, 3), dtype=np.float64).astype(g.dtype)
    # input grad: scatter g * W back over the window footprints
    contrib = np.tensordot(g, w, axes=[(1,), (0,)])  # (n, oh, ow, c_in, kh, kw)
    dxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + oh * stride : stride, j : j + ow * stride : stride] += (
                contrib[..., i, j].transpose(0, 3, 1, 2)
            )
    dx = dxp[:, :, ph : ph + x.shape[2], pw : pw + x.shape[3]]
    return np.ascontiguousarray(dx), wg.astype(w.dtype, copy=False), bg


def lrelu(x, a=0.1):
    """Leaky rectifier: max(0, x) - a * max(0, -x)."""
    if not np.isfinite(a) or not 0.0 <= a < 1.0:
        raise ValueError(f"slope must satisfy 0 <= a < 1, got {a}")
    x = np.asarray(x)
    return np.where(x > 0, x, x.dtype.type(a) * x)


def lrelu_backward(x, output_grad, a=0.1):
    """Multiply by 1 where x > 0, by a elsewhere (slope a at x == 0)."""
    x = np.asarray(x)
    g = np.asarray(output_grad)
    slope = np.where(x > 0, g.dtype.type(1.0), g.dtype.type(a))
    return g * slope


def avg_pool(x, size):
    """Non-overlapping size x size window means."""
    x = check_nchw(x, "input")
    size = int(size)
    n, c, h, w = x.shape
    if size < 1:
        raise ValueError(f"pool size must be >= 1, got {size}")
    if h % size or w % size:
        raise ShapeError(
            f"spatial dims of shape {x.shape} are not divisible by pool size {size}"
        )
    if size == 1:
        return x.copy()
    v = x.reshape(n, c, h // size, size, w // size, size)
    return v.mean(axis=(3, 5), dtype=np.float64).astype(x.dtype)


def avg_pool_backward(output_grad, size):
    """Distribute each window's gradient uniformly (1 / size**2)."""
    g = check_nchw(output_grad, "output_grad")
    size = int(size)
    if size == 1:
        return g.copy()
    up = np.repeat(np.repeat(g, size, axis=2), size, axis=3)
    return up / np.asarray(size * size, dtype=g.dtype)


def upsample_nn(x, factor):
    """Nearest-neighbor replication by an integer factor."""
    x = check_nchw(x, "input")
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return x.copy()
    return np.repeat(np.repeat(x, factor, axis=2), factor, axis=3)


def upsample_nn_backward(output_grad, factor):
    """Sum gradients over each replicated block."""
    g = check_nchw(output_grad, "output_grad")
    factor = int(factor)
    if factor == 1:
        return g.copy()
    n, c, h, w = g.shape
    v = g.reshape(n, c, h // factor, factor, w // factor, factor)
    return v.sum(axis=(3, 5), dtype=np.float64).astype(g.dtype)


def concat_channels(a, b):
    """Concatenate along the channel axis, a's channels first."""
    a = check_nchw(a, "a")
    b = check_nchw(b, "b")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(
            f"batch/spatial mismatch: a has shape {a.shape}, b has shape {b.shape}"
        )
    return np.concatenate([a, b], axis=1)


def concat_channels_backward(output_grad, c_a):
    """Split the gradient at the channel seam."""
    g = check_nchw(output_grad, "output_grad")
    return g[:, :c_a].copy(), g[:, c_a:].copy()


def dense(x, weights, bias=None):
    """Affine map W @ x + b per batch element; 64-bit accumulation."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"dense input must be 2-D (batch, features), got {x.shape}")
    w = value_of(weights)
    out_dim, in_dim = w.shape
    if x.shape[1] != in_dim:
        raise ShapeError(
            f"length mismatch: input shape {x.shape} vs weights shape {w.shape}"
        )
    y = x.astype(np.float64) @ w.astype(np.float64).T
    if bias is not None:
        y += value_of(bias).astype(np.float64)
    return y.astype(x.dtype)


def dense_backward(x, weights, output_grad):
    """Gradients of :func:`dense` w.r.t. input, weights and bias."""
    x = np.asarray(x)
    w = value_of(weights)
    g = np.asarray(output_grad)
    if g.shape != (x.shape[0], w.shape[0]):
        raise ShapeError(
            f"output_grad shape {g.shape} does not match ({x.shape[0]}, {w.shape[0]})"
        )
    g64 = g.astype(np.float64)
    dx = (g64 @ w.astype(np.float64)).astype(x.dtype)
    dw = (g64.T @ x.astype(np.float64)).astype(w.dtype)
    db = g.sum(axis=0, dtype=np.float64).astype(g.dtype)
    return dx, dw, db


def sigmoid(x):
    """Numerically stable logistic function; never overflows."""
    x = np.asarray(x)
    out = np.empty_like(x, dtype=x.dtype if x.dtype in (np.float32, np.float64) else np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y, output_grad):
    """Backward from the forward output y: g * y * (1 - y)."""
    y = np.asarray(y)
    return np.asarray(output_grad) * y * (1.0 - y)
