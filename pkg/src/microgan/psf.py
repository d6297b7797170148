"""Optical point-spread-function synthesis and Richardson-Lucy deconvolution.

The PSF follows the scalar diffraction integral

    I(r, z) = | integral_0^1 J0(k*NA*r*rho) * exp(-i*k*rho^2*z*NA^2/(2n)) * rho d_rho |^2

with k = 2*pi/wavelength, sampled at pixel centers and normalized to unit
sum. The in-focus (z = 0) slice is the Airy pattern [2*J1(v)/v]^2 with
v = k*NA*r.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import j0

from .validation import ShapeError

RL_EPS = 1e-12
_QUAD_TOL = 1e-8
_QUAD_MAX_LEVELS = 12
_QUAD_START_N = 16


class QuadratureError(RuntimeError):
    """Successive quadrature refinements failed to converge."""


@dataclass(frozen=True)
class PsfParams:
    """Optical parameters of the imaging system."""

    numerical_aperture: float = 1.4
    refractive_index: float = 1.515
    wavelength_nm: float = 520.0
    pixel_size_nm: float = 159.0
    kernel_size: int = 65

    def __post_init__(self):
        if not 0 < self.numerical_aperture <= self.refractive_index:
            raise ValueError(
                f"need 0 < NA <= refractive index, got NA={self.numerical_aperture}, "
                f"n={self.refractive_index}"
            )
        if self.wavelength_nm <= 0 or self.pixel_size_nm <= 0:
            raise ValueError("wavelength and pixel size must be positive")
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 3, got {self.kernel_size}")


@dataclass
class Psf:
    """A normalized 2-D point-spread-function kernel."""

    kernel: np.ndarray
    params: PsfParams = field(default_factory=PsfParams)

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float64)
        if self.kernel.ndim != 2 or self.kernel.shape[0] != self.kernel.shape[1]:
            raise ShapeError(f"kernel must be square 2-D, got shape {self.kernel.shape}")
        if self.kernel.shape[0] % 2 == 0:
            raise ShapeError(f"kernel side must be odd, got {self.kernel.shape[0]}")
        if np.any(self.kernel < 0):
            raise ValueError("kernel values must be non-negative")
        total = self.kernel.sum()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"kernel must sum to 1 within 1e-6, got {total}")


def delta_psf(size=3):
    """Identity kernel: a single 1 at the center."""
    k = np.zeros((size, size))
    k[size // 2, size // 2] = 1.0
    return Psf(kernel=k)


def _diffraction_integral(radii_nm, params, defocus_nm):
    """Evaluate the pupil integral for a vector of radii, refining a
    composite Simpson rule until successive estimates differ < 1e-8."""
    k = 2.0 * math.pi / params.wavelength_nm
    alpha = k * params.numerical_aperture * np.asarray(radii_nm, dtype=np.float64)
    phase_coeff = (
        k * defocus_nm * params.numerical_aperture**2 / (2.0 * params.refractive_index)
    )

    def simpson(n):
        rho = np.linspace(0.0, 1.0, n + 1)
        f = j0(np.outer(alpha, rho)) * rho
        if phase_coeff != 0.0:
            f = f * np.exp(-1j * phase_coeff * rho**2)
        wgt = np.ones(n + 1)
        wgt[1:-1:2] = 4.0
        wgt[2:-1:2] = 2.0
        return (f @ wgt) / (3.0 * n)

    prev = simpson(_QUAD_START_N)
    n = _QUAD_START_N
    for _ in range(_QUAD_MAX_LEVELS):
        n *= 2
        cur = simpson(n)
        if np.max(np.abs(cur - prev)) < _QUAD_TOL:
            return cur
        prev = cur
    raise QuadratureError(
        f"diffraction integral did not converge to {_QUAD_TOL} within {n} intervals"
    )


def born_wolf_psf(params=None, defocus_nm=0.0):
    """Synthesize the diffraction PSF at the given defocus, unit sum.

    The kernel is radially symmetric by construction: the integral is
    evaluated once per distinct pixel-center radius.
    """
    params = params or PsfParams()
    size = params.kernel_size
    c = size // 2
    dy, dx = np.mgrid[-c : c + 1, -c : c + 1]
    r2 = dy * dy + dx * dx  # integer squared pixel distances
    unique_r2, inverse = np.unique(r2.ravel(), return_inverse=True)
    radii_nm = np.sqrt(unique_r2.astype(np.float64)) * params.pixel_size_nm
    amplitude = _diffraction_integral(radii_nm, params, defocus_nm)
    intensity = np.abs(amplitude) ** 2
    kernel = intensity[inverse].reshape(size, size)
    kernel /= kernel.sum()
    return Psf(kernel=kernel, params=params)


def fft_convolve(image, psf):
    """Circular convolution with the kernel centered at the origin.

    Output has the image's size; wrap-around at the borders is accepted.
    """
    image = np.asarray(image, dtype=np.float64)
    kernel = np.asarray(getattr(psf, "kernel", psf), dtype=np.float64)
    if image.ndim != 2:
        raise ShapeError(f"image must be 2-D, got shape {image.shape}")
    kh, kw = kernel.shape
    if image.shape[0] < kh or image.shape[1] < kw:
        raise ShapeError(
            f"image of shape {image.shape} must be larger than kernel {kernel.shape}"
        )
    padded = np.zeros(image.shape)
    padded[:kh, :kw] = kernel
    padded = np.roll(padded, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    out = np.fft.irfft2(np.fft.rfft2(image) * np.fft.rfft2(padded), s=image.shape)
    return out


def richardson_lucy(observed, psf, iterations=10, initial=None):
    """Multiplicative ratio deconvolution.

    u_{t+1} = u_t * [ (observed / (u_t (*) p)) (*) p_flipped ]

    The denominator is floored at 1e-12; the correction factor is clamped
    at 0 so non-negativity survives FFT round-off. ``initial`` defaults to
    the observed image.
    """
    observed = np.asarray(observed, dtype=np.float64)
    if np.any(observed < 0):
        raise ValueError("observed image must be non-negative")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    kernel = np.asarray(getattr(psf, "kernel", psf), dtype=np.float64)
    flipped = kernel[::-1, ::-1]
    estimate = observed.copy() if initial is None else np.asarray(initial, dtype=np.float64).copy()
    for _ in range(int(iterations)):
        blurred = fft_convolve(estimate, kernel)
        ratio = observed / np.maximum(blurred, RL_EPS)
        correction = np.maximum(fft_convolve(ratio, flipped), 0.0)
        estimate = estimate * correction
    return estimate
