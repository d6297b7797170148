"""Scikit-learn style estimators wrapping the pipeline algorithms.

``GanImageEnhancer`` is fit/predict shaped: fit trains the adversarial
pair on stacks of aligned image batches, predict maps new low-quality
batches to enhanced ones. ``RichardsonLucyDeconvolver`` is a stateless
transformer around the classical baseline. Both expose get_params /
set_params and clone cleanly, so they compose with pipelines and searches.
"""

import os
import tempfile

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import psf
from .models import Discriminator, Generator, LossWeights
from .train import TrainConfig, load_checkpoint, train_loop_pairs
from .validation import ShapeError


def _as_batch(X):
    X = np.asarray(X, dtype=np.float32)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4:
        raise ShapeError(f"expected (n, c, h, w) or (c, h, w), got shape {X.shape}")
    return X


class GanImageEnhancer(BaseEstimator):
    """Adversarially trained low-quality to high-quality image mapper.

    Parameters mirror the training configuration; fit(X, Y) consumes
    aligned (n, c, h, w) stacks in [0, 1]. A validation stack may be
    passed to fit; otherwise the training stack doubles as the validation
    set (fine for the intended small-sample regime).
    """

    def __init__(
        self,
        base_channels=16,
        iterations=2000,
        learning_rate=1e-5,
        alpha=10.0,
        beta=0.05,
        gamma=1.0,
        batch_size=1,
        validation_every=100,
        checkpoint_every=10000,
        fc_hidden=64,
        channel_cap=256,
        seed=0,
        workdir=None,
    ):
        self.base_channels = base_channels
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.batch_size = batch_size
        self.validation_every = validation_every
        self.checkpoint_every = checkpoint_every
        self.fc_hidden = fc_hidden
        self.channel_cap = channel_cap
        self.seed = seed
        self.workdir = workdir

    def _config(self):
        return TrainConfig(
            iterations=self.iterations,
            checkpoint_every=self.checkpoint_every,
            batch_size=self.batch_size,
            seed=self.seed,
            learning_rate=self.learning_rate,
            weights=LossWeights(alpha=self.alpha, beta=self.beta, gamma=self.gamma),
            validation_every=self.validation_every,
            base_channels=self.base_channels,
            fc_hidden=self.fc_hidden,
            channel_cap=self.channel_cap,
        )

    def fit(self, X, Y, X_val=None, Y_val=None):
        X = _as_batch(X)
        Y = _as_batch(Y)
        if X.shape != Y.shape:
            raise ShapeError(f"X shape {X.shape} does not match Y shape {Y.shape}")
        train_pairs = [(x, y) for x, y in zip(X, Y)]
        if X_val is not None:
            X_val = _as_batch(X_val)
            Y_val = _as_batch(Y_val)
            val_pairs = [(x, y) for x, y in zip(X_val, Y_val)]
        else:
            val_pairs = train_pairs
        out_dir = self.workdir or tempfile.mkdtemp(prefix="gan_enhancer_")
        history = []
        final_path, best_path = train_loop_pairs(
            train_pairs,
            val_pairs,
            self._config(),
            out_dir,
            progress=history.append,
        )
        self.generator_, best_header = load_checkpoint(best_path)
        self.history_ = history
        self.best_val_ssim_ = best_header.get("val_ssim")
        self.best_val_psnr_ = best_header.get("val_psnr")
        self.checkpoint_path_ = best_path
        return self

    @classmethod
    def from_checkpoint(cls, path):
        """Build a ready-to-predict enhancer from a saved checkpoint."""
        model, header = load_checkpoint(path)
        if not isinstance(model, Generator):
            raise ValueError(f"checkpoint {path} does not hold a generator model")
        cfg = header["model"]
        est = cls(base_channels=cfg["base_channels"], seed=cfg["seed"])
        est.generator_ = model
        est.history_ = []
        est.best_val_ssim_ = header.get("val_ssim")
        est.best_val_psnr_ = header.get("val_psnr")
        est.checkpoint_path_ = os.fspath(path)
        return est

    def predict(self, X):
        """Enhance a batch; outputs are clamped to [0, 1]."""
        if not hasattr(self, "generator_"):
            raise RuntimeError("this enhancer is not fitted yet; call fit first")
        X = _as_batch(X)
        out, _ = self.generator_.forward(X)
        return np.clip(out, 0.0, 1.0)


class RichardsonLucyDeconvolver(TransformerMixin, BaseEstimator):
    """Classical per-channel deconvolution against a diffraction PSF.

    Channel wavelengths follow the image's channel order; a single
    wavelength may be given to share one PSF across all channels.
    """

    def __init__(
        self,
        wavelengths_nm=(565.0, 520.0, 461.0),
        numerical_aperture=1.4,
        refractive_index=1.515,
        pixel_size_nm=159.0,
        kernel_size=65,
        iterations=10,
    ):
        self.wavelengths_nm = wavelengths_nm
        self.numerical_aperture = numerical_aperture
        self.refractive_index = refractive_index
        self.pixel_size_nm = pixel_size_nm
        self.kernel_size = kernel_size
        self.iterations = iterations

    def _psf_for(self, wavelength):
        params = psf.PsfParams(
            numerical_aperture=self.numerical_aperture,
            refractive_index=self.refractive_index,
            wavelength_nm=float(wavelength),
            pixel_size_nm=self.pixel_size_nm,
            kernel_size=self.kernel_size,
        )
        return psf.born_wolf_psf(params)

    def fit(self, X=None, y=None):
        """Synthesize one PSF per configured wavelength."""
        wl = np.atleast_1d(np.asarray(self.wavelengths_nm, dtype=np.float64))
        self.psfs_ = [self._psf_for(w) for w in wl]
        return self

    def transform(self, X):
        """Deconvolve each channel of each image in the batch."""
        if not hasattr(self, "psfs_"):
            self.fit()
        X = _as_batch(X)
        n, c, h, w = X.shape
        if len(self.psfs_) not in (1, c):
            raise ValueError(
                f"{len(self.psfs_)} wavelengths configured for {c}-channel images; "
                f"give one per channel or a single shared value"
            )
        if self.kernel_size >= min(h, w):
            raise ShapeError(
                f"PSF kernel size {self.kernel_size} does not fit {h}x{w} images; "
                f"reduce kernel_size"
            )
        out = np.empty_like(X, dtype=np.float64)
        for i in range(n):
            for ch in range(c):
                kernel = self.psfs_[ch if len(self.psfs_) > 1 else 0]
                out[i, ch] = psf.richardson_lucy(
                    np.clip(X[i, ch], 0.0, None), kernel, iterations=self.iterations
                )
        return np.clip(out, 0.0, 1.0).astype(np.float32)
