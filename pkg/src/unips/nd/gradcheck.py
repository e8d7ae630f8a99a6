"""Finite-difference gradient verification.

Compares reverse-mode gradients against central differences in float64.
Only a random subset of elements per tensor is probed, which keeps the check
cheap for large parameters while still exercising every tensor.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, no_grad

__all__ = ["check_gradients", "relative_error"]


def relative_error(a: float, b: float, floor: float = 1e-3) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradients(f, tensors, h: float = 1e-5, samples_per_tensor: int = 8,
                    rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic and numeric gradients of f().

    ``f`` must rebuild its graph from scratch on every call and return a
    scalar Tensor; ``tensors`` are the leaves to probe.  All tensors should
    be float64 for the central difference to be meaningful.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    tensors = list(tensors)
    for t in tensors:
        if t.data.dtype != np.float64:
            raise ValueError("gradient checking requires float64 tensors")
        t.grad = None
    out = f()
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in tensors]
    worst = 0.0
    for t, an in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        k = min(flat.size, samples_per_tensor)
        idx = rng.choice(flat.size, size=k, replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + h
            with no_grad():
                hi = f().item()
            flat[i] = keep - h
            with no_grad():
                lo = f().item()
            flat[i] = keep
            numeric = (hi - lo) / (2.0 * h)
            err = relative_error(float(an.reshape(-1)[i]), numeric)
            worst = max(worst, err)
    return worst
