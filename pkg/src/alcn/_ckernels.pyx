# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels with replicate or zero borders.

Same contract as ``alcn._pykernels``: stacks of planes ``(n, H, W)``.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef inline Py_ssize_t _clamp(Py_ssize_t i, Py_ssize_t n) nogil:
    if i < 0:
        return 0
    if i >= n:
        return n - 1
    return i


def correlate_axis(x, taps, Py_ssize_t anchor, int axis, border="replicate"):
    cdef double[:, :, ::1] src = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] k = np.ascontiguousarray(taps, dtype=np.float64)
    cdef Py_ssize_t n = src.shape[0], h = src.shape[1], w = src.shape[2]
    cdef Py_ssize_t nt = k.shape[0]
    cdef bint zero = border == "zero"
    out_arr = np.zeros((n, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t p, r, c, j, q
    cdef double acc
    with nogil:
        if axis == 2:
            for p in range(n):
                for r in range(h):
                    for c in range(w):
                        acc = 0.0
                        for j in range(nt):
                            q = c + j - anchor
                            if q < 0 or q >= w:
                                if zero:
                                    continue
                                q = _clamp(q, w)
                            acc = acc + k[j] * src[p, r, q]
                        out[p, r, c] = acc
        else:
            for p in range(n):
                for r in range(h):
                    for j in range(nt):
                        q = r + j - anchor
                        if q < 0 or q >= h:
                            if zero:
                                continue
                            q = _clamp(q, h)
                        for c in range(w):
                            out[p, r, c] += k[j] * src[p, q, c]
    return out_arr


def correlate2d(x, kernel, Py_ssize_t anchor_r, Py_ssize_t anchor_c, border="replicate"):
    cdef double[:, :, ::1] src = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] k = np.ascontiguousarray(kernel, dtype=np.float64)
    cdef Py_ssize_t n = src.shape[0], h = src.shape[1], w = src.shape[2]
    cdef Py_ssize_t kh = k.shape[0], kw = k.shape[1]
    cdef bint zero = border == "zero"
    out_arr = np.zeros((n, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t p, r, c, i, j, qr, qc
    cdef double acc
    with nogil:
        for p in range(n):
            for r in range(h):
                for c in range(w):
                    acc = 0.0
                    for i in range(kh):
                        qr = r + i - anchor_r
                        if qr < 0 or qr >= h:
                            if zero:
                                continue
                            qr = _clamp(qr, h)
                        for j in range(kw):
                            qc = c + j - anchor_c
                            if qc < 0 or qc >= w:
                                if zero:
                                    continue
                                qc = _clamp(qc, w)
                            acc = acc + k[i, j] * src[p, qr, qc]
                    out[p, r, c] = acc
    return out_arr


def im2col(x, Py_ssize_t k, out):
    """Fill ``out`` (b, ho, wo, k, k, c) with the k x k patches of channels-last ``x``."""
    cdef double[:, :, :, ::1] src = x
    cdef double[:, :, :, :, :, ::1] dst = out
    cdef Py_ssize_t b = dst.shape[0], ho = dst.shape[1], wo = dst.shape[2], c = src.shape[3]
    cdef Py_ssize_t n, r, q, i, j, ch
    with nogil:
        for n in range(b):
            for r in range(ho):
                for q in range(wo):
                    for i in range(k):
                        for j in range(k):
                            for ch in range(c):
                                dst[n, r, q, i, j, ch] = src[n, r + i, q + j, ch]
    return out


def col2im(dcols, Py_ssize_t k, dx):
    """Accumulate patch gradients (b, ho, wo, k, k, c) into ``dx`` (b, h, w, c)."""
    cdef double[:, :, :, :, :, ::1] src = dcols
    cdef double[:, :, :, ::1] dst = dx
    cdef Py_ssize_t b = src.shape[0], ho = src.shape[1], wo = src.shape[2], c = dst.shape[3]
    cdef Py_ssize_t n, r, q, i, j, ch
    with nogil:
        for n in range(b):
            for r in range(ho):
                for q in range(wo):
                    for i in range(k):
                        for j in range(k):
                            for ch in range(c):
                                dst[n, r + i, q + j, ch] += src[n, r, q, i, j, ch]
    return dx
