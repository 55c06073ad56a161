"""Compiled inner kernels: im2col / col2im and 2x2 max pooling.

Drop-in replacement for `odyn.tensor.kernels_numpy` with identical
signatures, layouts, and tie-breaking.
"""

import numpy as np

cimport cython

ctypedef fused real:
    float
    double

BACKEND_NAME = "ext"


def im2col(real[:, :, :, ::1] xp, int kh, int kw, int sh, int sw):
    cdef Py_ssize_t b = xp.shape[0]
    cdef Py_ssize_t c = xp.shape[1]
    cdef Py_ssize_t hp = xp.shape[2]
    cdef Py_ssize_t wp = xp.shape[3]
    cdef Py_ssize_t oh = (hp - kh) // sh + 1
    cdef Py_ssize_t ow = (wp - kw) // sw + 1
    if real is float:
        out_np = np.empty((b, c * kh * kw, oh * ow), dtype=np.float32)
    else:
        out_np = np.empty((b, c * kh * kw, oh * ow), dtype=np.float64)
    cdef real[:, :, ::1] out = out_np
    cdef Py_ssize_t ib, ic, i, j, oi, oj, row
    with nogil:
        for ib in range(b):
            for ic in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ic * kh + i) * kw + j
                        for oi in range(oh):
                            for oj in range(ow):
                                out[ib, row, oi * ow + oj] = xp[ib, ic, oi * sh + i, oj * sw + j]
    return out_np


def col2im(real[:, :, ::1] cols, Py_ssize_t b, Py_ssize_t c, Py_ssize_t hp,
           Py_ssize_t wp, int kh, int kw, int sh, int sw):
    cdef Py_ssize_t oh = (hp - kh) // sh + 1
    cdef Py_ssize_t ow = (wp - kw) // sw + 1
    if real is float:
        out_np = np.zeros((b, c, hp, wp), dtype=np.float32)
    else:
        out_np = np.zeros((b, c, hp, wp), dtype=np.float64)
    cdef real[:, :, :, ::1] out = out_np
    cdef Py_ssize_t ib, ic, i, j, oi, oj, row
    with nogil:
        for ib in range(b):
            for ic in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ic * kh + i) * kw + j
                        for oi in range(oh):
                            for oj in range(ow):
                                out[ib, ic, oi * sh + i, oj * sw + j] += cols[ib, row, oi * ow + oj]
    return out_np


def maxpool2x2_forward(real[:, :, :, ::1] x):
    cdef Py_ssize_t b = x.shape[0]
    cdef Py_ssize_t c = x.shape[1]
    cdef Py_ssize_t h = x.shape[2]
    cdef Py_ssize_t w = x.shape[3]
    cdef Py_ssize_t oh = h // 2
    cdef Py_ssize_t ow = w // 2
    if real is float:
        out_np = np.empty((b, c, oh, ow), dtype=np.float32)
    else:
        out_np = np.empty((b, c, oh, ow), dtype=np.float64)
    arg_np = np.empty((b, c, oh, ow), dtype=np.uint8)
    cdef real[:, :, :, ::1] out = out_np
    cdef unsigned char[:, :, :, ::1] arg = arg_np
    cdef Py_ssize_t ib, ic, oi, oj
    cdef real v, best
    cdef unsigned char k
    with nogil:
        for ib in range(b):
            for ic in range(c):
                for oi in range(oh):
                    for oj in range(ow):
                        best = x[ib, ic, 2 * oi, 2 * oj]
                        k = 0
                        v = x[ib, ic, 2 * oi, 2 * oj + 1]
                        if v > best:
                            best = v
                            k = 1
                        v = x[ib, ic, 2 * oi + 1, 2 * oj]
                        if v > best:
                            best = v
                            k = 2
                        v = x[ib, ic, 2 * oi + 1, 2 * oj + 1]
                        if v > best:
                            best = v
                            k = 3
                        out[ib, ic, oi, oj] = best
                        arg[ib, ic, oi, oj] = k
    return out_np, arg_np


def maxpool2x2_backward(real[:, :, :, ::1] gout, unsigned char[:, :, :, ::1] arg,
                        Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t b = gout.shape[0]
    cdef Py_ssize_t c = gout.shape[1]
    cdef Py_ssize_t oh = gout.shape[2]
    cdef Py_ssize_t ow = gout.shape[3]
    if real is float:
        gin_np = np.zeros((b, c, h, w), dtype=np.float32)
    else:
        gin_np = np.zeros((b, c, h, w), dtype=np.float64)
    cdef real[:, :, :, ::1] gin = gin_np
    cdef Py_ssize_t ib, ic, oi, oj
    cdef unsigned char k
    with nogil:
        for ib in range(b):
            for ic in range(c):
                for oi in range(oh):
                    for oj in range(ow):
                        k = arg[ib, ic, oi, oj]
                        gin[ib, ic, 2 * oi + (k >> 1), 2 * oj + (k & 1)] += gout[ib, ic, oi, oj]
    return gin_np
