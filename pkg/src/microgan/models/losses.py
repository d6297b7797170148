"""Training objectives: relativistic adversarial loss and the composite
generator loss (weighted MSE + structural-dissimilarity + adversarial).

The adversarial terms read the scorer's pre-sigmoid logits and apply the
sigmoid to the fake-real difference, which keeps the cross-entropy in its
domain for any logit magnitudes.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..metrics import UNIFORM_WINDOW, _correlate_valid
from ..validation import NonFiniteError, check_same_shape

BCE_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Weights of the MSE, structural and adversarial generator terms.

    Defaults are sized so that on a typical freshly initialized model the
    MSE and SSIM terms together contribute about 10% of the total.
    """

    alpha: float = 10.0
    beta: float = 0.05
    gamma: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")


def _as_logits(x):
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("logits contain non-finite values")
    return a


def bce(p, target):
    """Binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7]."""
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_CLAMP, 1.0 - BCE_CLAMP)
    t = np.asarray(target, dtype=np.float64)
    return -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))


def _sigmoid64(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def discriminator_loss(d_fake, d_real, y):
    """BCE(sigmoid(d_fake - d_real), y) + BCE(sigmoid(d_real - d_fake), 1 - y).

    y is 0 when the discriminator trains and 1 for the generator's
    adversarial term. Depends only on the logit difference. Mean over the
    batch.
    """
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y}")
    f = _as_logits(d_fake)
    r = _as_logits(d_real)
    check_same_shape(f, r, "d_fake", "d_real")
    p = _sigmoid64(f - r)
    return float(np.mean(bce(p, y) + bce(1.0 - p, 1 - y)))


def discriminator_loss_grads(d_fake, d_real, y):
    """Analytic gradients of :func:`discriminator_loss` w.r.t. both logits."""
    f = _as_logits(d_fake)
    r = _as_logits(d_real)
    p = _sigmoid64(f - r)
    # both clamp masks coincide because the bounds are symmetric around 1/2
    active = (p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP)
    g = 2.0 * (p - y) * active / f.size
    g_fake = g.reshape(np.shape(d_fake)).astype(np.asarray(d_fake).dtype, copy=False)
    return g_fake, -g_fake


def _scatter_uniform(wmap, k, out_shape):
    """Sum window-position values over every pixel each window covers."""
    oh, ow = wmap.shape
    h, w = out_shape
    tmp = np.zeros((oh, w))
    for j in range(k):
        tmp[:, j : j + ow] += wmap
    out = np.zeros((h, w))
    for i in range(k):
        out[i : i + oh, :] += tmp
    return out


def ssim_and_grad(a, b, data_range=1.0, window_size=UNIFORM_WINDOW):
    """Windowed SSIM of batched images plus its gradient w.r.t. ``a``.

    Uses the same uniform window and unbiased moment normalization as the
    evaluation metric, so the loss value and the reported metric agree.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    check_same_shape(a, b, "a", "b")
    if a.ndim != 4:
        raise ValueError(f"expected (n, c, h, w) batches, got shape {a.shape}")
    k = window_size
    n_win = k * k
    corr = n_win / (n_win - 1.0)
    k1d = np.full(k, 1.0 / k)
    L = float(data_range)
    c1 = (0.01 * L) ** 2
    c2 = (0.03 * L) ** 2

    n, c, h, w = a.shape
    flat_a = a.reshape(n * c, h, w).astype(np.float64)
    flat_b = b.reshape(n * c, h, w).astype(np.float64)
    grad = np.zeros_like(flat_a)
    total = 0.0
    oh, ow = h - k + 1, w - k + 1
    for idx in range(n * c):
        ca, cb = flat_a[idx], flat_b[idx]
        mu_a = _correlate_valid(ca, k1d)
        mu_b = _correlate_valid(cb, k1d)
        var_a = corr * (_correlate_valid(ca * ca, k1d) - mu_a * mu_a)
        var_b = corr * (_correlate_valid(cb * cb, k1d) - mu_b * mu_b)
        cov = corr * (_correlate_valid(ca * cb, k1d) - mu_a * mu_b)
        a1 = 2.0 * mu_a * mu_b + c1
        a2 = 2.0 * cov + c2
        b1 = mu_a * mu_a + mu_b * mu_b + c1
        b2 = var_a + var_b + c2
        s = (a1 * a2) / (b1 * b2)
        total += float(s.sum())
        # dS/da_i = P + Qa*(a_i - mu_a) + Qb*(b_i - mu_b) per covering window
        p_map = 2.0 * mu_b * a2 / (n_win * b1 * b2) - 2.0 * s * mu_a / (n_win * b1)
        qa = -2.0 * s / ((n_win - 1.0) * b2)
        qb = 2.0 * a1 / ((n_win - 1.0) * b1 * b2)
        const = p_map - qa * mu_a - qb * mu_b
        grad[idx] = (
            _scatter_uniform(const, k, (h, w))
            + ca * _scatter_uniform(qa, k, (h, w))
            + cb * _scatter_uniform(qb, k, (h, w))
        )
    n_windows = n * c * oh * ow
    value = total / n_windows
    grad /= n_windows
    return value, grad.reshape(a.shape)


def generator_loss(gx, y_img, d_fake, d_real, weights=None):
    """Composite objective; returns (total, parts).

    total = alpha * MSE(gx, y) + beta * (1 - SSIM(gx, y))
          + gamma * BCE(sigmoid(d_fake - d_real), 1)
    """
    total, parts, _, _ = generator_loss_with_grads(
        gx, y_img, d_fake, d_real, weights, need_grads=False
    )
    return total, parts


def generator_loss_with_grads(gx, y_img, d_fake, d_real, weights=None, need_grads=True):
    """As :func:`generator_loss`, also returning d(total)/d(gx) for the
    pixel terms and d(total)/d(d_fake) for the adversarial term."""
    w = weights or LossWeights()
    gx = np.asarray(gx)
    y_img = np.asarray(y_img)
    check_same_shape(gx, y_img, "generated", "target")
    if not np.all(np.isfinite(gx)):
        raise NonFiniteError("generated batch contains non-finite values")

    diff = gx.astype(np.float64) - y_img.astype(np.float64)
    mse_val = float(np.mean(diff * diff))
    ssim_val, ssim_grad = ssim_and_grad(gx, y_img)

    f = _as_logits(d_fake)
    r = _as_logits(d_real)
    p = _sigmoid64(f - r)
    bce_val = float(np.mean(bce(p, 1.0)))

    parts = {
        "mse": w.alpha * mse_val,
        "ssim": w.beta * (1.0 - ssim_val),
        "bce": w.gamma * bce_val,
    }
    total = parts["mse"] + parts["ssim"] + parts["bce"]
    if not need_grads:
        return total, parts, None, None

    d_gx = w.alpha * 2.0 * diff / diff.size - w.beta * ssim_grad
    active = (p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP)
    g_fake = (w.gamma * (p - 1.0) * active / f.size).reshape(np.shape(d_fake))
    return total, parts, d_gx.astype(gx.dtype, copy=False), g_fake
