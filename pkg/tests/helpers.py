"""Shared test utilities: inputs that keep finite differences well-posed."""

import numpy as np

from odyn.tensor import Tensor


def kink_free(rng, shape, margin=0.05):
    """Values bounded away from zero, safe for relu finite differences."""
    x = rng.uniform(margin, 1.0, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return x * sign


def tie_free(rng, shape, gap=0.05):
    """Values with pairwise gaps > gap - 0.02, safe for max-pool argmax."""
    n = int(np.prod(shape))
    base = gap * rng.permutation(n).astype(np.float64)
    jitter = rng.uniform(0.0, gap * 0.4, size=n)
    return (base + jitter).reshape(shape)


def t(rng, shape, scale=1.0):
    return Tensor(rng.normal(size=shape) * scale)
