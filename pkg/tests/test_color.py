import numpy as np
import pytest

from facegen.color import (
    ColorFitError, ColorTransform, PixelSample, apply_color_transform, color_objective, color_transfer,
    fit_color_transform, rgb_to_ycbcr, sample_pixel_pairs, ycbcr_to_rgb,
)


def planted(seed=0, n=1000, noise=0.0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(3, n))
    A0 = np.eye(3) + rng.normal(0, 0.2, (3, 3))
    Y = A0 @ X + noise * rng.normal(size=(3, n))
    return A0, X, Y


def test_conversion_examples():
    np.testing.assert_allclose(rgb_to_ycbcr([0.3, 0.3, 0.3]), [0.3, 0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(rgb_to_ycbcr([0.0, 0.0, 0.0]), [0.0, 0.5, 0.5], atol=0)
    y = 0.299 * 0.2 + 0.587 * 0.6 + 0.114 * 0.9
    np.testing.assert_allclose(rgb_to_ycbcr([0.2, 0.6, 0.9]),
                               [y, 0.5 + (0.9 - y) * 0.564, 0.5 + (0.2 - y) * 0.713], atol=1e-15)


def test_roundtrip():
    px = np.random.default_rng(0).uniform(size=(1000, 3))
    assert np.max(np.abs(ycbcr_to_rgb(rgb_to_ycbcr(px)) - px)) < 1e-6
    # the inverse is algebraic, so the other direction holds too
    ycc = np.random.default_rng(1).uniform(size=(50, 3))
    assert np.max(np.abs(rgb_to_ycbcr(ycbcr_to_rgb(ycc)) - ycc)) < 1e-12


def test_clamp_count():
    out, n = ycbcr_to_rgb(np.zeros((2, 3)), clamp=True)
    assert out.min() >= 0 and out.max() <= 1 and n > 0
    _, n = ycbcr_to_rgb(rgb_to_ycbcr(np.full((4, 3), 0.5)), clamp=True)
    assert n == 0


def test_sampling():
    rng = np.random.default_rng(2)
    t, r = rng.uniform(size=(2, 10, 12, 3))
    s = sample_pixel_pairs(t, r, n=120, region=1.0, seed=3)
    assert len({tuple(p) for p in s.positions}) == 120
    s = sample_pixel_pairs(t, t, n=20, region=0.5, seed=3)
    np.testing.assert_array_equal(s.X, s.Y)
    assert s.positions[:, 0].min() >= 2 and s.positions[:, 0].max() < 8
    assert s.positions[:, 1].min() >= 3 and s.positions[:, 1].max() < 9
    a, b = (sample_pixel_pairs(t, r, 30, 0.5, 9) for _ in range(2))
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.positions, b.positions)
    with pytest.raises(ValueError):
        sample_pixel_pairs(t, r, n=31, region=0.5)


def test_fit_identity():
    _, X, _ = planted()
    np.testing.assert_allclose(fit_color_transform(PixelSample(X, X)).A, np.eye(3), atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_planted_recovery(seed):
    A0, X, Y = planted(seed)
    np.testing.assert_allclose(fit_color_transform(PixelSample(X, Y)).A, A0, rtol=0, atol=1e-6)


def test_noisy_optimality():
    A0, X, Y = planted(4, noise=0.01)
    t = fit_color_transform(PixelSample(X, Y))
    assert t.residual <= color_objective(A0, X, Y)
    rng = np.random.default_rng(5)
    for _ in range(100):
        assert t.residual <= color_objective(t.A + rng.normal(0, 1e-3, (3, 3)), X, Y)


def test_scale_equivariance():
    _, X, Y = planted(6, noise=0.01)
    a = fit_color_transform(PixelSample(X, Y)).A
    b = fit_color_transform(PixelSample(X, 2.5 * Y)).A
    np.testing.assert_allclose(b, 2.5 * a, rtol=1e-12, atol=1e-14)


def test_refit_is_identity():
    A0, X, Y = planted(7)
    A = fit_color_transform(PixelSample(X, Y)).A
    again = fit_color_transform(PixelSample(A @ X, Y)).A
    np.testing.assert_allclose(again, np.eye(3), atol=1e-6)


def test_ill_posed():
    X = np.tile([[0.5], [0.5], [0.5]], (1, 50))
    with pytest.raises(ColorFitError, match="rank"):
        fit_color_transform(PixelSample(X, X))
    with pytest.raises(ColorFitError):
        fit_color_transform(PixelSample(np.eye(3), np.eye(3)))


def test_apply_examples():
    img = np.random.default_rng(8).uniform(size=(6, 7, 3))
    np.testing.assert_allclose(apply_color_transform(img, ColorTransform(np.eye(3))), img, atol=1e-6)
    zero = apply_color_transform(img, ColorTransform(np.zeros((3, 3))))
    want = np.clip(ycbcr_to_rgb(np.zeros(3)), 0, 1)
    np.testing.assert_allclose(zero, np.broadcast_to(want, img.shape), atol=0)


def test_transfer_reduces_error():
    rng = np.random.default_rng(9)
    ref = rng.uniform(0.2, 0.8, size=(16, 16, 3))
    A0 = np.array([[0.9, 0.05, 0.0], [0.02, 0.95, 0.03], [0.0, 0.04, 0.92]])
    gen = np.clip(ycbcr_to_rgb(rgb_to_ycbcr(ref) @ np.linalg.inv(A0).T), 0, 1)
    out, t = color_transfer(gen, ref, n=64, region=0.5, seed=0)
    win = (slice(4, 12), slice(4, 12))
    assert np.sum((out[win] - ref[win]) ** 2) < np.sum((gen[win] - ref[win]) ** 2)


def test_transform_json(tmp_path):
    t = ColorTransform(np.arange(9.0).reshape(3, 3) / 7, 0.25)
    t.save(tmp_path / "c.json")
    back = ColorTransform.load(tmp_path / "c.json")
    np.testing.assert_array_equal(back.A, t.A)
    assert back.residual == 0.25
