"""Cross-system fluorescence microscopy image quality enhancement.

The package trains a residual U-NET GAN that maps low-quality wide-field
images onto their high-quality confocal counterparts, provides a classical
Richardson-Lucy deconvolution baseline, and evaluates both with MSE, NRMSE,
SSIM and PSNR plus nonparametric significance tests.
"""

from .estimators import GanImageEnhancer, RichardsonLucyDeconvolver
from .metrics import MetricReport, compare, mse, nrmse, psnr, ssim

__version__ = "0.1.0"

__all__ = [
    "GanImageEnhancer",
    "RichardsonLucyDeconvolver",
    "MetricReport",
    "compare",
    "mse",
    "nrmse",
    "psnr",
    "ssim",
    "__version__",
]
