"""Finite-difference verification harness for analytic gradients.

An op under test is a callable ``op(*inputs) -> (output, vjp)`` where
``vjp(output_grad)`` returns one gradient array per input. The harness
projects the output onto a fixed random direction, so the scalar loss
L = sum(output * R) has analytic input gradients vjp(R), and compares them
against central finite differences computed in 64-bit.
"""

import numpy as np


class NonDeterministicOpError(RuntimeError):
    """Two identical forward passes produced different outputs."""


def grad_check(op, inputs, eps=1e-3, seed=0, sample=None):
    """Return the max relative error between analytic and numeric gradients.

    Parameters
    ----------
    op : callable
        ``op(*inputs) -> (output, vjp)`` with ``vjp(g) -> [grad_per_input]``.
    inputs : sequence of ndarray
        Differentiable inputs; cast to float64 for the check.
    eps : float
        Central-difference step, must lie in [1e-5, 1e-2].
    sample : int or None
        If given, check only this many randomly chosen coordinates per
        input instead of every element.

    The relative error uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    if not 1e-5 <= eps <= 1e-2:
        raise ValueError(f"eps must lie in [1e-5, 1e-2], got {eps}")
    xs = [np.array(x, dtype=np.float64) for x in inputs]
    out1, vjp = op(*xs)
    out2, _ = op(*xs)
    if out1.shape != out2.shape or not np.array_equal(out1, out2):
        raise NonDeterministicOpError("op produced different outputs on identical inputs")

    rng = np.random.default_rng(seed)
    proj = rng.standard_normal(out1.shape)
    analytic = vjp(proj)
    if len(analytic) != len(xs):
        raise ValueError(f"vjp returned {len(analytic)} gradients for {len(xs)} inputs")

    def loss(arrays):
        out, _ = op(*arrays)
        return float(np.sum(np.asarray(out, dtype=np.float64) * proj))

    max_rel = 0.0
    for i, x in enumerate(xs):
        a = np.asarray(analytic[i], dtype=np.float64)
        if a.shape != x.shape:
            raise ValueError(
                f"gradient {i} has shape {a.shape}, input has shape {x.shape}"
            )
        flat = x.reshape(-1)
        n_elems = flat.size
        if sample is not None and sample < n_elems:
            coords = rng.choice(n_elems, size=sample, replace=False)
        else:
            coords = range(n_elems)
        a_flat = a.reshape(-1)
        for j in coords:
            orig = flat[j]
            flat[j] = orig + eps
            lo_hi = loss(xs)
            flat[j] = orig - eps
            lo_lo = loss(xs)
            flat[j] = orig
            numeric = (lo_hi - lo_lo) / (2.0 * eps)
            denom = max(abs(a_flat[j]), abs(numeric), 1e-8)
            rel = abs(a_flat[j] - numeric) / denom
            if rel > max_rel:
                max_rel = rel
    return max_rel
