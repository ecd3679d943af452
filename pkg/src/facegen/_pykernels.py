"""Pure-numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable, or when
``FACEGEN_BACKEND=python`` is set. Every function here has a twin with the
same signature in ``_ckernels.pyx``.

Layout is channel-first: feature maps are ``(C, H, W)`` float64 arrays.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def conv2d_forward(x, w, b, stride, pad):
    c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = conv_out_size(h, kh, stride, pad)
    wo = conv_out_size(wd, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    y = np.einsum("chwij,ocij->ohw", win, w, optimize=True)
    y += b[:, None, None]
    return np.ascontiguousarray(y)


def conv2d_backward_input(gy, w, in_shape, stride, pad):
    """Transposed convolution: gradient w.r.t. the conv input."""
    c, h, wd = in_shape
    o, _, kh, kw = w.shape
    _, ho, wo = gy.shape
    gxp = np.zeros((c, h + 2 * pad, wd + 2 * pad))
    for p in range(kh):
        for q in range(kw):
            contrib = np.tensordot(w[:, :, p, q], gy, axes=([0], [0]))
            gxp[:, p : p + stride * (ho - 1) + 1 : stride, q : q + stride * (wo - 1) + 1 : stride] += contrib
    return gxp[:, pad : pad + h, pad : pad + wd].copy()


def maxpool_forward(x, k, stride):
    """Returns pooled map and flat argmax index into each input channel plane.

    Ties resolve to the first position in a row-major scan of the window.
    """
    c, h, wd = x.shape
    ho = (h - k) // stride + 1
    wo = (wd - k) // stride + 1
    win = sliding_window_view(x, (k, k), axis=(1, 2))
    win = win[:, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    flat = win.reshape(c, ho, wo, k * k)
    local = np.argmax(flat, axis=-1)
    y = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    di, dj = np.divmod(local, k)
    rows = np.arange(ho)[:, None] * stride + di
    cols = np.arange(wo)[None, :] * stride + dj
    argmax = (rows * wd + cols).astype(np.int64)
    return np.ascontiguousarray(y), argmax


def maxpool_backward(gy, argmax, in_shape):
    c, h, wd = in_shape
    gx = np.zeros((c, h * wd))
    for ch in range(c):
        np.add.at(gx[ch], argmax[ch].ravel(), gy[ch].ravel())
    return gx.reshape(in_shape)
