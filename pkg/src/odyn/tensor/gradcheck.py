"""Finite-difference gradient verification.

`max_rel_error` compares reverse-mode gradients of a scalar-valued
function against central differences, perturbing each tensor element in
place. Relative error uses a floored denominator so near-zero entries
are checked absolutely at floor * tol.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import DiffRecord, Tensor, backward


def numeric_gradient(f: Callable[[], float], x: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient of f with respect to array x (mutated
    during evaluation, restored afterwards)."""
    g = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        fp = f()
        flat[i] = keep - h
        fm = f()
        flat[i] = keep
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def max_rel_error(
    fn: Callable[[], Tensor],
    wrt: Sequence[Tensor],
    h: float = 1e-3,
    floor: float = 1e-3,
) -> float:
    """Worst relative error between analytic and numeric gradients.

    `fn` must rebuild the scalar loss from the tensors in `wrt` on every
    call (their .data is perturbed in place between calls).
    """
    for t in wrt:
        t.grad = None
        t.requires_grad = True
    with DiffRecord():
        loss = fn()
        backward(loss)
    analytic = [np.array(t.grad, dtype=np.float64, copy=True) for t in wrt]

    def scalar() -> float:
        return float(fn().data)

    worst = 0.0
    for t, a in zip(wrt, analytic):
        n = numeric_gradient(scalar, t.data, h)
        denom = np.maximum(np.abs(a) + np.abs(n), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
