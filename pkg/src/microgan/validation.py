"""Shared input validation helpers.

Every exported operation validates its array arguments through these
functions so that shape errors always name both offending shapes.
"""

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Array arguments have incompatible or unexpected shapes."""


class NonFiniteError(ValueError):
    """An array contains NaN or Inf where finite values are required."""


def as_float_array(x, name="array"):
    """Return ``x`` as a float32/float64 ndarray (float32 by default)."""
    a = np.asarray(x)
    if a.dtype not in FLOAT_DTYPES:
        a = a.astype(np.float32)
    return a


def check_ndim(x, ndim, name="array"):
    x = as_float_array(x, name)
    if x.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {x.shape}")
    return x


def check_nchw(x, name="input"):
    """Validate a 4-axis (batch, channel, height, width) tensor."""
    return check_ndim(x, 4, name)


def check_image(x, name="image"):
    """Validate a single image: (h, w) or (channels, h, w)."""
    x = as_float_array(x, name)
    if x.ndim not in (2, 3):
        raise ShapeError(f"{name} must be 2-D or 3-D (c, h, w), got shape {x.shape}")
    return x


def check_same_shape(a, b, name_a="a", name_b="b"):
    if a.shape != b.shape:
        raise ShapeError(
            f"shape mismatch: {name_a} has shape {a.shape}, {name_b} has shape {b.shape}"
        )


def check_finite(x, name="array"):
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{name} contains non-finite values")
    return x
