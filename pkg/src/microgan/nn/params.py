"""Trainable parameter storage and weight initialization."""

import numpy as np


class Parameter:
    """A named weight tensor with a gradient accumulator of the same shape.

    Values are stored as float32. Gradient accumulation is single-writer:
    callers add into ``grad`` and call :meth:`zero_grad` between steps.
    """

    __slots__ = ("name", "value", "grad")

    def __init__(self, name, value):
        self.name = str(name)
        self.value = np.ascontiguousarray(value, dtype=np.float32)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def value_of(p):
    """Unwrap a Parameter (or pass an ndarray through)."""
    return p.value if isinstance(p, Parameter) else np.asarray(p)


def glorot_uniform(shape, fan_in, fan_out, rng):
    """Uniform init in [-s, s] with s = sqrt(6 / (fan_in + fan_out)).

    Keeps pre-activation variance roughly constant through deep stacks
    without normalization layers.
    """
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape).astype(np.float32)
