import numpy as np
import pytest

from facegen import _pykernels
from facegen.kernels import available_backends, get_backend
from oracles import naive_conv, naive_maxpool

GEOMS = [(3, 5, 7, 3, 1, 1), (2, 8, 8, 3, 2, 0), (3, 9, 6, 5, 2, 2), (1, 4, 4, 1, 1, 0)]


@pytest.mark.parametrize("c,h,w,k,stride,pad", GEOMS)
def test_conv_forward_matches_naive(backend, rng, c, h, w, k, stride, pad):
    x = rng.normal(size=(c, h, w))
    wt = rng.normal(size=(4, c, k, k))
    b = rng.normal(size=4)
    got = backend.conv2d_forward(x, wt, b, stride, pad)
    np.testing.assert_allclose(got, naive_conv(x, wt, b, stride, pad), rtol=0, atol=1e-12)


@pytest.mark.parametrize("c,h,w,k,stride,pad", GEOMS)
def test_conv_backward_is_adjoint(backend, rng, c, h, w, k, stride, pad):
    # <conv(x), gy> with zero bias equals <x, conv^T(gy)>
    x = rng.normal(size=(c, h, w))
    wt = rng.normal(size=(3, c, k, k))
    y = backend.conv2d_forward(x, wt, np.zeros(3), stride, pad)
    gy = rng.normal(size=y.shape)
    gx = backend.conv2d_backward_input(gy, wt, x.shape, stride, pad)
    assert gx.shape == x.shape
    assert np.sum(y * gy) == pytest.approx(np.sum(x * gx), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("k,stride", [(2, 2), (3, 2), (2, 1)])
def test_maxpool_matches_naive(backend, rng, k, stride):
    x = rng.normal(size=(3, 7, 8))
    y, arg = backend.maxpool_forward(x, k, stride)
    np.testing.assert_array_equal(y, naive_maxpool(x, k, stride))
    np.testing.assert_array_equal(x.reshape(3, -1)[np.arange(3)[:, None], arg.reshape(3, -1)], y.reshape(3, -1))


def test_maxpool_tie_takes_first(backend):
    x = np.ones((1, 2, 2))
    y, arg = backend.maxpool_forward(x, 2, 2)
    assert y[0, 0, 0] == 1.0 and arg[0, 0, 0] == 0
    g = backend.maxpool_backward(np.ones((1, 1, 1)), arg, x.shape)
    np.testing.assert_array_equal(g, [[[1.0, 0.0], [0.0, 0.0]]])


def test_maxpool_backward_routes_to_argmax(backend, rng):
    x = rng.normal(size=(2, 6, 6))
    y, arg = backend.maxpool_forward(x, 3, 1)
    gy = rng.normal(size=y.shape)
    gx = backend.maxpool_backward(gy, arg, x.shape)
    ref = np.zeros(x.size)
    np.add.at(ref, (arg + np.arange(2)[:, None, None] * 36).ravel(), gy.ravel())
    np.testing.assert_allclose(gx.ravel(), ref, atol=1e-15)


@pytest.mark.skipif("cython" not in available_backends(), reason="extension not built")
def test_backends_agree(rng):
    c = get_backend("cython")
    x = rng.normal(size=(3, 11, 10))
    w = rng.normal(size=(5, 3, 3, 3))
    b = rng.normal(size=5)
    for stride, pad in [(1, 1), (2, 0), (2, 1)]:
        y1 = c.conv2d_forward(x, w, b, stride, pad)
        y2 = _pykernels.conv2d_forward(x, w, b, stride, pad)
        np.testing.assert_allclose(y1, y2, atol=1e-12)
        gy = rng.normal(size=y1.shape)
        np.testing.assert_allclose(c.conv2d_backward_input(gy, w, x.shape, stride, pad),
                                   _pykernels.conv2d_backward_input(gy, w, x.shape, stride, pad), atol=1e-12)
    y1, a1 = c.maxpool_forward(x, 2, 2)
    y2, a2 = _pykernels.maxpool_forward(x, 2, 2)
    np.testing.assert_array_equal(y1, y2)
    np.testing.assert_array_equal(a1, a2)


def test_unknown_backend():
    with pytest.raises(ValueError):
        get_backend("fortran")


def test_dispatch_crossover():
    from facegen import kernels
    x = np.random.default_rng(0).normal(size=(16, 40, 40))
    w = np.random.default_rng(1).normal(size=(16, 16, 3, 3))
    small = kernels._conv_impl(3, 8, 16, 16, 3, 3)
    assert small is kernels._impl
    assert kernels._conv_impl(16, 16, 40, 40, 3, 3) is _pykernels
    np.testing.assert_allclose(kernels.conv2d_forward(x, w, np.zeros(16), 1, 1),
                               _pykernels.conv2d_forward(x, w, np.zeros(16), 1, 1), atol=1e-10)
