# cython: language_level=3
"""Compiled conv / max-pool kernels (forward and input-gradient).

Signatures mirror ``facegen._pykernels``; inputs are C-contiguous float64
``(C, H, W)`` arrays.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def conv_out_size(Py_ssize_t n, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    return (n + 2 * pad - k) // stride + 1


cdef inline Py_ssize_t _first_valid(Py_ssize_t off, Py_ssize_t stride):
    # smallest i >= 0 with i * stride + off >= 0
    if off >= 0:
        return 0
    return (-off + stride - 1) // stride


cdef inline Py_ssize_t _end_valid(Py_ssize_t off, Py_ssize_t stride, Py_ssize_t n, Py_ssize_t n_out):
    # one past the largest i < n_out with i * stride + off < n
    cdef Py_ssize_t e
    if n - off <= 0:
        return 0
    e = (n - off - 1) // stride + 1
    return e if e < n_out else n_out


def conv2d_forward(const double[:, :, ::1] x, const double[:, :, :, ::1] w,
                   const double[::1] b, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t c_in = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t c_out = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * pad - kw) // stride + 1
    out = np.empty((c_out, ho, wo), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    cdef Py_ssize_t o, i, j, c, p, q, i0, i1, j0, j1, ii, off
    cdef double wv
    # tap-outer order: the inner sweep over output columns is contiguous
    for o in range(c_out):
        y[o, :, :] = b[o]
        for c in range(c_in):
            for p in range(kh):
                i0 = _first_valid(p - pad, stride)
                i1 = _end_valid(p - pad, stride, h, ho)
                for q in range(kw):
                    wv = w[o, c, p, q]
                    if wv == 0.0:
                        continue
                    off = q - pad
                    j0 = _first_valid(off, stride)
                    j1 = _end_valid(off, stride, wd, wo)
                    for i in range(i0, i1):
                        ii = i * stride + p - pad
                        if stride == 1:
                            for j in range(j0, j1):
                                y[o, i, j] += wv * x[c, ii, j + off]
                        else:
                            for j in range(j0, j1):
                                y[o, i, j] += wv * x[c, ii, j * stride + off]
    return out


def conv2d_backward_input(const double[:, :, ::1] gy, const double[:, :, :, ::1] w,
                          tuple in_shape, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t c_in = in_shape[0], h = in_shape[1], wd = in_shape[2]
    cdef Py_ssize_t c_out = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = gy.shape[1], wo = gy.shape[2]
    out = np.zeros((c_in, h, wd), dtype=np.float64)
    cdef double[:, :, ::1] gx = out
    cdef Py_ssize_t o, i, j, c, p, q, i0, i1, j0, j1, ii, off
    cdef double wv
    for c in range(c_in):
        for o in range(c_out):
            for p in range(kh):
                i0 = _first_valid(p - pad, stride)
                i1 = _end_valid(p - pad, stride, h, ho)
                for q in range(kw):
                    wv = w[o, c, p, q]
                    if wv == 0.0:
                        continue
                    off = q - pad
                    j0 = _first_valid(off, stride)
                    j1 = _end_valid(off, stride, wd, wo)
                    for i in range(i0, i1):
                        ii = i * stride + p - pad
                        if stride == 1:
                            for j in range(j0, j1):
                                gx[c, ii, j + off] += wv * gy[o, i, j]
                        else:
                            for j in range(j0, j1):
                                gx[c, ii, j * stride + off] += wv * gy[o, i, j]
    return out


def maxpool_forward(const double[:, :, ::1] x, Py_ssize_t k, Py_ssize_t stride):
    cdef Py_ssize_t c_n = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t ho = (h - k) // stride + 1
    cdef Py_ssize_t wo = (wd - k) // stride + 1
    out = np.empty((c_n, ho, wo), dtype=np.float64)
    arg = np.empty((c_n, ho, wo), dtype=np.int64)
    cdef double[:, :, ::1] y = out
    cdef cnp.int64_t[:, :, ::1] am = arg
    cdef Py_ssize_t c, i, j, p, q, ii, jj, best_idx
    cdef double best, v
    for c in range(c_n):
        for i in range(ho):
            for j in range(wo):
                ii = i * stride
                jj = j * stride
                best = x[c, ii, jj]
                best_idx = ii * wd + jj
                for p in range(k):
                    for q in range(k):
                        v = x[c, ii + p, jj + q]
                        # strict '>' keeps the first row-major maximum
                        if v > best:
                            best = v
                            best_idx = (ii + p) * wd + jj + q
                y[c, i, j] = best
                am[c, i, j] = best_idx
    return out, arg


def maxpool_backward(const double[:, :, ::1] gy, const cnp.int64_t[:, :, ::1] argmax,
                     tuple in_shape):
    cdef Py_ssize_t c_n = in_shape[0], h = in_shape[1], wd = in_shape[2]
    cdef Py_ssize_t ho = gy.shape[1], wo = gy.shape[2]
    out = np.zeros((c_n, h, wd), dtype=np.float64)
    cdef double[:, :, ::1] gx = out
    cdef Py_ssize_t c, i, j, idx
    for c in range(c_n):
        for i in range(ho):
            for j in range(wo):
                idx = argmax[c, i, j]
                gx[c, idx // wd, idx % wd] += gy[c, i, j]
    return out
