"""Backend selection for the conv / pool kernels.

The compiled extension is preferred. Set ``FACEGEN_BACKEND=python`` to force
the numpy fallback (the two are checked against each other in the tests).
"""

import logging
import os

import numpy as np

from facegen import _pykernels

log = logging.getLogger(__name__)

_FUNCS = ("conv2d_forward", "conv2d_backward_input", "maxpool_forward", "maxpool_backward")


def _load_compiled():
    try:
        from facegen import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = None if os.environ.get("FACEGEN_BACKEND", "").lower() == "python" else _load_compiled()
BACKEND = "cython" if _compiled is not None else "python"
if _compiled is None:
    log.debug("compiled kernels unavailable; using numpy fallback")


def get_backend(name=None):
    """Return the kernel module for ``name`` ('cython', 'python' or None for the active one)."""
    if name is None:
        name = BACKEND
    if name == "python":
        return _pykernels
    if name == "cython":
        mod = _compiled or _load_compiled()
        if mod is None:
            raise ImportError("facegen._ckernels is not built")
        return mod
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    out = ["python"]
    if (_compiled or _load_compiled()) is not None:
        out.insert(0, "cython")
    return out


_impl = get_backend()

# Above this many multiply-adds a conv goes to the numpy (BLAS) path even
# with the compiled backend active; the loops win only on small layers.
# FACEGEN_CONV_CROSSOVER=0 sends every conv to numpy, a huge value none.
CONV_CROSSOVER = int(float(os.environ.get("FACEGEN_CONV_CROSSOVER", "7e5")))


def _conv_impl(c_in, c_out, ho, wo, kh, kw):
    if _impl is _pykernels or c_in * c_out * ho * wo * kh * kw <= CONV_CROSSOVER:
        return _impl
    return _pykernels


def conv2d_forward(x, w, b, stride, pad):
    x = np.ascontiguousarray(x, dtype=np.float64)
    o, c, kh, kw = w.shape
    ho = _pykernels.conv_out_size(x.shape[1], kh, stride, pad)
    wo = _pykernels.conv_out_size(x.shape[2], kw, stride, pad)
    return _conv_impl(c, o, ho, wo, kh, kw).conv2d_forward(x, w, b, stride, pad)


def conv2d_backward_input(gy, w, in_shape, stride, pad):
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    o, c, kh, kw = w.shape
    impl = _conv_impl(c, o, gy.shape[1], gy.shape[2], kh, kw)
    return impl.conv2d_backward_input(gy, w, tuple(in_shape), stride, pad)


def maxpool_forward(x, k, stride):
    return _impl.maxpool_forward(np.ascontiguousarray(x, dtype=np.float64), k, stride)


def maxpool_backward(gy, argmax, in_shape):
    return _impl.maxpool_backward(
        np.ascontiguousarray(gy, dtype=np.float64), argmax, tuple(in_shape)
    )
