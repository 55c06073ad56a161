"""Differentiable layer operations built on the tape core.

Convolutions run through im2col/col2im kernels supplied by the backend
module; the transposed convolution is the exact adjoint of the strided
convolution, so the two share those kernels with roles swapped.

Shape conventions: images are (B, C, H, W); dense inputs are (B, D).
Padding is per-side: ((top, bottom), (left, right)).
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, ShapeError
from . import backend as K
from .core import Array, Tensor, make_op

BCE_CLAMP = 1e-7

Padding = tuple[tuple[int, int], tuple[int, int]]


def normalize_padding(padding) -> Padding:
    """Accept 0, p, (ph, pw), or ((t, b), (l, r)) and return the long form."""
    if isinstance(padding, int):
        return ((padding, padding), (padding, padding))
    ph, pw = padding
    if isinstance(ph, int):
        return ((ph, ph), (pw, pw))
    return ((int(ph[0]), int(ph[1])), (int(pw[0]), int(pw[1])))


def _normalize_stride(stride) -> tuple[int, int]:
    if isinstance(stride, int):
        return (stride, stride)
    sh, sw = stride
    return (int(sh), int(sw))


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def bwd(g, _x=x):
        return (g * (_x.data > 0),)

    return make_op(out, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g, _out=out):
        return (g * _out * (1.0 - _out),)

    return make_op(out, (x,), bwd)


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map y = x @ w + b for x (B, Din), w (Din, Dout), b (Dout,)."""
    if x.ndim != 2:
        raise ShapeError(f"dense input must be 2-D, got {x.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense input width {x.shape} does not match weight {w.shape}")
    out = x.data @ w.data + b.data

    def bwd(g, _x=x, _w=w, _b=b):
        gx = g @ _w.data.T if _x.requires_grad else None
        gw = _x.data.T @ g if _w.requires_grad else None
        gb = g.sum(axis=0) if _b.requires_grad else None
        return gx, gw, gb

    return make_op(out, (x, w, b), bwd)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride=(1, 1), padding=0) -> Tensor:
    """2-D cross-correlation. w is (F, C, kh, kw); output height is
    floor((H + pt + pb - kh) / sh) + 1 and likewise for width."""
    (pt, pb), (pl, pr) = normalize_padding(padding)
    sh, sw = _normalize_stride(stride)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d needs 4-D input and weight, got {x.shape}, {w.shape}")
    bsz, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeError(f"conv2d channels {c} do not match weight {w.shape}")
    hp, wp = h + pt + pb, wd + pl + pr
    if hp < kh or wp < kw:
        raise ShapeError(
            f"conv2d kernel ({kh}x{kw}) exceeds padded input ({hp}x{wp})"
        )
    oh = (hp - kh) // sh + 1
    ow = (wp - kw) // sw + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if (pt or pb or pl or pr) else x.data
    xp = np.ascontiguousarray(xp)
    cols = K.im2col(xp, kh, kw, sh, sw)
    w2 = w.data.reshape(f, c * kh * kw)
    y = np.matmul(w2, cols).reshape(bsz, f, oh, ow)
    if b is not None:
        if b.shape != (f,):
            raise ShapeError(f"conv2d bias shape {b.shape} does not match {f} maps")
        y = y + b.data.reshape(1, f, 1, 1)

    inputs = (x, w) if b is None else (x, w, b)

    def bwd(g, _x=x, _w=w, _cols=cols, _w2=w2):
        g2 = np.ascontiguousarray(g.reshape(bsz, f, oh * ow))
        gx = None
        if _x.requires_grad:
            gcols = np.matmul(_w2.T, g2)
            gxp = K.col2im(np.ascontiguousarray(gcols), bsz, c, hp, wp, kh, kw, sh, sw)
            gx = np.ascontiguousarray(gxp[:, :, pt : pt + h, pl : pl + wd])
        gw = None
        if _w.requires_grad:
            gw = np.einsum("bfl,bkl->fk", g2, _cols).reshape(_w.data.shape)
        if b is None:
            return gx, gw
        gb = g.sum(axis=(0, 2, 3)) if b.requires_grad else None
        return gx, gw, gb

    return make_op(y, inputs, bwd)


def transp_conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride=(1, 1), padding=0) -> Tensor:
    """Transposed 2-D convolution (adjoint of conv2d's input map).

    w is (C, F, kh, kw). Output height is (H - 1) * sh + kh - pt - pb;
    anisotropic strides and per-side padding are supported.
    """
    (pt, pb), (pl, pr) = normalize_padding(padding)
    sh, sw = _normalize_stride(stride)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"transp_conv2d needs 4-D input and weight, got {x.shape}, {w.shape}")
    bsz, c, h, wd = x.shape
    cw, f, kh, kw = w.shape
    if c != cw:
        raise ShapeError(f"transp_conv2d channels {c} do not match weight {w.shape}")
    hf = (h - 1) * sh + kh
    wf = (wd - 1) * sw + kw
    oh = hf - pt - pb
    ow = wf - pl - pr
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"transp_conv2d padding {((pt, pb), (pl, pr))} consumes the {hf}x{wf} output"
        )
    x2 = x.data.reshape(bsz, c, h * wd)
    wr = w.data.reshape(c, f * kh * kw)
    cols = np.ascontiguousarray(np.matmul(wr.T, x2))
    yf = K.col2im(cols, bsz, f, hf, wf, kh, kw, sh, sw)
    y = np.ascontiguousarray(yf[:, :, pt : pt + oh, pl : pl + ow])
    if b is not None:
        if b.shape != (f,):
            raise ShapeError(f"transp_conv2d bias shape {b.shape} does not match {f} maps")
        y = y + b.data.reshape(1, f, 1, 1)

    inputs = (x, w) if b is None else (x, w, b)

    def bwd(g, _x=x, _w=w, _x2=x2, _wr=wr):
        gf = np.zeros((bsz, f, hf, wf), dtype=g.dtype)
        gf[:, :, pt : pt + oh, pl : pl + ow] = g
        gcols = K.im2col(gf, kh, kw, sh, sw)
        gx = None
        if _x.requires_grad:
            gx = np.matmul(_wr, gcols).reshape(_x.data.shape)
        gw = None
        if _w.requires_grad:
            gw = np.einsum("bcl,bkl->ck", _x2, gcols).reshape(_w.data.shape)
        if b is None:
            return gx, gw
        gb = g.sum(axis=(0, 2, 3)) if b.requires_grad else None
        return gx, gw, gb

    return make_op(y, inputs, bwd)


def maxpool2x2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2 over (B, C, H, W).

    Odd extents are replicate-padded on the bottom/right edge first, so
    output extents are ceil(H/2) x ceil(W/2). Ties within a window route
    the gradient to the first element in row-major window order.
    """
    if x.ndim != 4:
        raise ShapeError(f"maxpool2x2 needs a 4-D input, got {x.shape}")
    bsz, c, h, w = x.shape
    ph, pw = h % 2, w % 2
    if ph or pw:
        xp = np.ascontiguousarray(np.pad(x.data, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge"))
    else:
        xp = x.data
    out, arg = K.maxpool2x2_forward(xp)

    def bwd(g, _arg=arg, _h=h, _w=w, _ph=ph, _pw=pw):
        gp = K.maxpool2x2_backward(np.ascontiguousarray(g), _arg, _h + _ph, _w + _pw)
        if _pw:
            gp[:, :, :, _w - 1] += gp[:, :, :, _w]
        if _ph:
            gp[:, :, _h - 1, :_w] += gp[:, :, _h, :_w]
        if _ph or _pw:
            gp = np.ascontiguousarray(gp[:, :, :_h, :_w])
        return (gp,)

    return make_op(out, (x,), bwd)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Array,
    running_var: Array,
    training: bool,
    momentum: float = 0.99,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalization over (B, D) or (B, C, H, W).

    Training mode normalizes with per-batch statistics (biased variance)
    and folds them into the running buffers in place:
    running = momentum * running + (1 - momentum) * batch. Eval mode uses
    the running buffers. Training requires a batch of at least 2.
    """
    if x.ndim == 2:
        axes: tuple[int, ...] = (0,)
        pshape = (1, x.shape[1])
    elif x.ndim == 4:
        axes = (0, 2, 3)
        pshape = (1, x.shape[1], 1, 1)
    else:
        raise ShapeError(f"batch_norm input must be 2-D or 4-D, got {x.shape}")
    nfeat = x.shape[1]
    if gamma.shape != (nfeat,) or beta.shape != (nfeat,):
        raise ShapeError(
            f"batch_norm parameter shapes {gamma.shape}/{beta.shape} do not match {nfeat} features"
        )
    m = x.size // nfeat

    if training:
        if x.shape[0] < 2:
            raise DomainError(f"batch_norm training mode needs batch >= 2, got {x.shape[0]}")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mu = running_mean.astype(x.dtype, copy=False)
        var = running_var.astype(x.dtype, copy=False)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(pshape)) * inv_std.reshape(pshape)
    y = gamma.data.reshape(pshape) * xhat + beta.data.reshape(pshape)

    def bwd(g, _x=x, _gamma=gamma, _beta=beta, _xhat=xhat, _inv=inv_std):
        ggamma = (g * _xhat).sum(axis=axes) if _gamma.requires_grad else None
        gbeta = g.sum(axis=axes) if _beta.requires_grad else None
        gx = None
        if _x.requires_grad:
            gam = _gamma.data.reshape(pshape)
            inv = _inv.reshape(pshape)
            if training:
                gh = g * gam
                gx = (
                    gh - gh.mean(axis=axes, keepdims=True)
                    - _xhat * (gh * _xhat).mean(axis=axes, keepdims=True)
                ) * inv
            else:
                gx = g * gam * inv
        return gx, ggamma, gbeta

    return make_op(y.astype(x.dtype, copy=False), (x, gamma, beta), bwd)


def bce_loss(target: Tensor, pred: Tensor) -> Tensor:
    """Binary cross-entropy, mean over all elements.

    Predictions are clamped to [1e-7, 1 - 1e-7] before the logs; the
    clamp is flat, so out-of-range predictions get zero gradient. Targets
    must lie in [0, 1].
    """
    if target.shape != pred.shape:
        raise ShapeError(f"bce_loss shapes differ: {target.shape} vs {pred.shape}")
    t = target.data
    if t.size and (t.min() < 0.0 or t.max() > 1.0):
        raise DomainError("bce_loss targets must lie in [0, 1]")
    lo = pred.dtype.type(BCE_CLAMP)
    hi = pred.dtype.type(1.0 - BCE_CLAMP)
    q = np.clip(pred.data, lo, hi)
    n = pred.size
    val = -(t * np.log(q) + (1.0 - t) * np.log1p(-q)).mean(dtype=pred.dtype)

    def bwd(g, _t=t, _q=q, _pred=pred, _target=target, _n=n):
        gp = None
        if _pred.requires_grad:
            inside = (_pred.data > BCE_CLAMP) & (_pred.data < 1.0 - BCE_CLAMP)
            gp = g * inside * (-_t / _q + (1.0 - _t) / (1.0 - _q)) / _n
            gp = gp.astype(_pred.dtype, copy=False)
        gt = None
        if _target.requires_grad:
            gt = g * (np.log1p(-_q) - np.log(_q)) / _n
            gt = gt.astype(_target.dtype, copy=False)
        return gt, gp

    return make_op(np.asarray(val), (target, pred), bwd)


def mse_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    if a.shape != b.shape:
        raise ShapeError(f"mse_loss shapes differ: {a.shape} vs {b.shape}")
    d = a.data - b.data
    n = a.size
    val = (d * d).mean(dtype=a.dtype)

    def bwd(g, _d=d, _a=a, _b=b, _n=n):
        ga = (g * 2.0 * _d / _n).astype(_a.dtype, copy=False) if _a.requires_grad else None
        gb = (-g * 2.0 * _d / _n).astype(_b.dtype, copy=False) if _b.requires_grad else None
        return ga, gb

    return make_op(np.asarray(val), (a, b), bwd)
