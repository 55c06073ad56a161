"""Pure numpy implementations of the hot inner kernels.

These are the reference implementations; `odyn.tensor._kernels` provides a
compiled drop-in replacement with identical signatures and semantics.
All functions accept float32 or float64 C-contiguous arrays.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

BACKEND_NAME = "numpy"


def im2col(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """Unfold padded input (B, C, Hp, Wp) into columns (B, C*kh*kw, oh*ow).

    Column layout: channel-major, then kernel row, then kernel col, matching
    a (F, C*kh*kw) reshape of conv weights (F, C, kh, kw).
    """
    b, c, hp, wp = xp.shape
    oh = (hp - kh) // sh + 1
    ow = (wp - kw) // sw + 1
    s0, s1, s2, s3 = xp.strides
    view = as_strided(
        xp,
        shape=(b, c, kh, kw, oh, ow),
        strides=(s0, s1, s2, s3, s2 * sh, s3 * sw),
    )
    return view.reshape(b, c * kh * kw, oh * ow)


def col2im(
    cols: np.ndarray,
    b: int,
    c: int,
    hp: int,
    wp: int,
    kh: int,
    kw: int,
    sh: int,
    sw: int,
) -> np.ndarray:
    """Fold columns (B, C*kh*kw, oh*ow) back onto a (B, C, Hp, Wp) canvas.

    Overlapping windows accumulate, making this the adjoint of im2col.
    """
    oh = (hp - kh) // sh + 1
    ow = (wp - kw) // sw + 1
    out = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    view = cols.reshape(b, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw] += view[:, :, i, j]
    return out


def maxpool2x2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2/stride-2 max pooling over (B, C, H, W) with even H and W.

    Returns (out, arg) where arg holds the row-major in-window index
    (0..3) of the selected element; ties pick the first index.
    """
    b, c, h, w = x.shape
    win = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = win.reshape(b, c, h // 2, w // 2, 4)
    arg = flat.argmax(axis=-1).astype(np.uint8)
    out = np.take_along_axis(flat, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg


def maxpool2x2_backward(gout: np.ndarray, arg: np.ndarray, h: int, w: int) -> np.ndarray:
    """Scatter pooled gradients (B, C, H/2, W/2) back to (B, C, H, W)."""
    b, c, oh, ow = gout.shape
    flat = np.zeros((b, c, oh, ow, 4), dtype=gout.dtype)
    np.put_along_axis(flat, arg[..., None].astype(np.intp), gout[..., None], axis=-1)
    gin = flat.reshape(b, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)
    return np.ascontiguousarray(gin)
