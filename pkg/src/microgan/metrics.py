"""Image comparison metrics: MSE, NRMSE, SSIM and PSNR.

All metrics operate on normalized images ((h, w) or (channels, h, w)) and
accumulate in 64-bit. Multi-channel images are scored per channel and the
channel scores averaged with equal weight.
"""

import math
from dataclasses import dataclass

import numpy as np

from .validation import ShapeError, check_image, check_same_shape

UNIFORM_WINDOW = 7
GAUSSIAN_WINDOW = 11
GAUSSIAN_SIGMA = 1.5


@dataclass
class MetricReport:
    """The four-metric comparison record for one image pair."""

    name_a: str
    name_b: str
    mse: float
    nrmse: float
    ssim: float
    psnr: float  # decibels; math.inf when mse == 0

    def as_row(self):
        """CSV row values: comparison label then the four metrics."""
        return [f"{self.name_a} vs {self.name_b}", self.mse, self.nrmse, self.ssim, self.psnr]


def mse(a, b):
    """Mean over all elements of (a - b)**2."""
    a = check_image(a, "a")
    b = check_image(b, "b")
    check_same_shape(a, b)
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(d * d))


def nrmse(reference, test):
    """Root mean squared error normalized by the reference RMS value."""
    reference = check_image(reference, "reference")
    test = check_image(test, "test")
    check_same_shape(reference, test, "reference", "test")
    denom = float(np.sqrt(np.mean(reference.astype(np.float64) ** 2)))
    if denom == 0.0:
        raise ValueError("reference image is identically zero; NRMSE undefined")
    return math.sqrt(mse(reference, test)) / denom


def psnr(a, b, data_range=1.0):
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(float(data_range) ** 2 / err)


def _channels(img):
    img = check_image(img)
    return img[None] if img.ndim == 2 else img


def _gaussian_kernel1d(size, sigma):
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-0.5 * (r / sigma) ** 2)
    return k / k.sum()


def _correlate_valid(img, k1d):
    """Separable valid-mode correlation of a 2-D image with a 1-D window."""
    k = k1d.size
    h, w = img.shape
    # rows
    tmp = np.zeros((h, w - k + 1), dtype=np.float64)
    for j in range(k):
        tmp += k1d[j] * img[:, j : j + w - k + 1]
    out = np.zeros((h - k + 1, w - k + 1), dtype=np.float64)
    for i in range(k):
        out += k1d[i] * tmp[i : i + h - k + 1]
    return out


def _window_moments(a, b, size, k1d):
    """Per-window means and raw second moments for one channel pair."""
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    mu_a = _correlate_valid(a, k1d)
    mu_b = _correlate_valid(b, k1d)
    e_aa = _correlate_valid(a * a, k1d)
    e_bb = _correlate_valid(b * b, k1d)
    e_ab = _correlate_valid(a * b, k1d)
    return mu_a, mu_b, e_aa, e_bb, e_ab


def ssim(a, b, data_range=1.0, window="uniform"):
    """Mean structural similarity index over all valid window positions.

    window="uniform" uses a flat 7x7 window with unbiased (n-1) variance
    and covariance estimates; window="gaussian" uses an 11x11 Gaussian
    (sigma 1.5) with weighted moments.
    """
    a = check_image(a, "a")
    b = check_image(b, "b")
    check_same_shape(a, b)
    if window == "uniform":
        size = UNIFORM_WINDOW
        k1d = np.full(size, 1.0 / size)
        # unbiased sample normalization: var = (E[x^2] - mu^2) * n / (n - 1)
        n_win = size * size
        corr = n_win / (n_win - 1.0)
    elif window == "gaussian":
        size = GAUSSIAN_WINDOW
        k1d = _gaussian_kernel1d(size, GAUSSIAN_SIGMA)
        corr = 1.0
    else:
        raise ValueError(f"unknown window {window!r}; use 'uniform' or 'gaussian'")

    h, w = a.shape[-2:]
    if h < size or w < size:
        raise ShapeError(f"image shape {a.shape} is smaller than the {size}x{size} window")

    L = float(data_range)
    c1 = (0.01 * L) ** 2
    c2 = (0.03 * L) ** 2
    scores = []
    for ca, cb in zip(_channels(a), _channels(b)):
        mu_a, mu_b, e_aa, e_bb, e_ab = _window_moments(ca, cb, size, k1d)
        var_a = corr * (e_aa - mu_a * mu_a)
        var_b = corr * (e_bb - mu_b * mu_b)
        cov = corr * (e_ab - mu_a * mu_b)
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def compare(a, b, name_a="a", name_b="b", data_range=1.0):
    """Bundle the four metrics for one image pair into a MetricReport."""
    return MetricReport(
        name_a=name_a,
        name_b=name_b,
        mse=mse(a, b),
        nrmse=nrmse(a, b),
        ssim=ssim(a, b, data_range=data_range),
        psnr=psnr(a, b, data_range=data_range),
    )
