"""Shared synthetic-data helpers for the test suite."""

import numpy as np
from scipy import ndimage

from microgan import dataset


def smooth_field(size, seed=0, channels=None):
    """A normalized smooth random field, 2-D or (channels, h, w)."""
    rng = np.random.default_rng(seed)
    shape = (size, size) if channels is None else (channels, size, size)
    sigma = 3.0 if channels is None else (0, 3.0, 3.0)
    img = ndimage.gaussian_filter(rng.random(shape), sigma)
    img = (img - img.min()) / (img.max() - img.min())
    return img.astype(np.float32)


def synthetic_pair(size=32, seed=0):
    """A correlated (lq, hq) pair of 3-channel images in [0, 1]."""
    rng = np.random.default_rng(seed)
    hq = ndimage.gaussian_filter(rng.random((3, size, size)), (0, 1.5, 1.5))
    hq = ((hq - hq.min()) / (hq.max() - hq.min())).astype(np.float32)
    lq = np.clip(hq + 0.15 * rng.standard_normal(hq.shape), 0, 1).astype(np.float32)
    return lq, hq


def make_manifest_dataset(root, n_train=2, n_val=1, n_test=1, size=32, identical=False):
    """Write synthetic pair images under ``root`` and return a manifest."""
    img_dir = root / "images"
    img_dir.mkdir(exist_ok=True, parents=True)
    entries = []
    splits = ["train"] * n_train + ["validation"] * n_val + ["test"] * n_test
    for i, split in enumerate(splits):
        lq, hq = synthetic_pair(size=size, seed=100 + i)
        if identical:
            lq = hq
        lq_name, hq_name = f"images/p{i}_lq.tif", f"images/p{i}_hq.tif"
        dataset.save_image(root / lq_name, lq)
        dataset.save_image(root / hq_name, hq)
        entries.append(dataset.ManifestEntry(f"p{i}", lq_name, hq_name, split))
    return dataset.DatasetManifest(seed=0, fractions=(0.8, 0.19, 0.01), entries=entries)
