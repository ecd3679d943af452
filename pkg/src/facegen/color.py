"""Linear 3x3 color transfer in full-range BT.601 YCbCr."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

KR, KG, KB = 0.299, 0.587, 0.114
CB_SCALE, CR_SCALE = 0.564, 0.713
MIN_SAMPLES = 9


class ColorFitError(ValueError):
    pass


@dataclass
class PixelSample:
    X: np.ndarray  # 3 x n, target pixels (YCbCr)
    Y: np.ndarray  # 3 x n, reference pixels at the same positions
    positions: np.ndarray = None  # n x 2 (row, col)

    @property
    def n(self):
        return self.X.shape[1]


@dataclass
class ColorTransform:
    A: np.ndarray
    residual: float = float("nan")

    def to_json(self):
        return {"A": self.A.tolist(), "residual": self.residual}

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path):
        d = json.loads(Path(path).read_text())
        return cls(np.array(d["A"], dtype=np.float64), d["residual"])


def rgb_to_ycbcr(image):
    img = np.asarray(image, dtype=np.float64)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    y = KR * r + KG * g + KB * b
    return np.stack([y, 0.5 + (b - y) * CB_SCALE, 0.5 + (r - y) * CR_SCALE], axis=-1)


def ycbcr_to_rgb(image, clamp=False):
    """Exact inverse of :func:`rgb_to_ycbcr`.

    With ``clamp=True`` returns ``(rgb, n_clamped)`` where ``n_clamped``
    counts channel values pulled back into [0, 1].
    """
    img = np.asarray(image, dtype=np.float64)
    y, cb, cr = img[..., 0], img[..., 1], img[..., 2]
    b = y + (cb - 0.5) / CB_SCALE
    r = y + (cr - 0.5) / CR_SCALE
    g = (y - KR * r - KB * b) / KG
    rgb = np.stack([r, g, b], axis=-1)
    if not clamp:
        return rgb
    out = np.clip(rgb, 0.0, 1.0)
    return out, int(np.count_nonzero(out != rgb))


def central_window(dims, region):
    """Row/col slices of the centered window covering ``region`` of each side."""
    if not 0 < region <= 1:
        raise ValueError(f"region must be in (0, 1], got {region}")
    out = []
    for n in dims:
        size = max(1, int(round(n * region)))
        start = (n - size) // 2
        out.append(slice(start, start + size))
    return tuple(out)


def sample_pixel_pairs(target, reference, n=1000, region=0.5, seed=0):
    """Draw ``n`` positions without replacement from the central window."""
    target = np.asarray(target, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if target.shape != reference.shape:
        raise ValueError(f"image shapes differ: {target.shape} vs {reference.shape}")
    rows, cols = central_window(target.shape[:2], region)
    wh, ww = rows.stop - rows.start, cols.stop - cols.start
    if n > wh * ww:
        raise ValueError(f"n={n} exceeds the {wh}x{ww} sampling window")
    flat = np.random.default_rng(seed).choice(wh * ww, size=n, replace=False)
    pr, pc = np.divmod(flat, ww)
    pr, pc = pr + rows.start, pc + cols.start
    X = rgb_to_ycbcr(target[pr, pc]).T
    Y = rgb_to_ycbcr(reference[pr, pc]).T
    return PixelSample(np.ascontiguousarray(X), np.ascontiguousarray(Y), np.stack([pr, pc], axis=1))


def color_objective(A, X, Y):
    r = Y - A @ X
    return float(np.sum(r * r))


def fit_color_transform(sample):
    """Least-squares ``A`` minimizing ``||Y - A X||_F^2``.

    Solved as ``X^T A^T = Y^T`` with an SVD-based solver rather than by
    forming ``(X X^T)^-1``.
    """
    X, Y = np.asarray(sample.X, dtype=np.float64), np.asarray(sample.Y, dtype=np.float64)
    if X.shape != Y.shape or X.shape[0] != 3:
        raise ColorFitError(f"expected matching 3 x n samples, got {X.shape} and {Y.shape}")
    if X.shape[1] < MIN_SAMPLES:
        raise ColorFitError(f"need at least {MIN_SAMPLES} samples, got {X.shape[1]}")
    At, _, rank, sv = np.linalg.lstsq(X.T, Y.T, rcond=None)
    if rank < 3 or sv[-1] <= 1e-10 * sv[0]:
        raise ColorFitError(
            "sampled target colors are rank-deficient (e.g. constant color); "
            "sample a larger region"
        )
    A = At.T
    return ColorTransform(A, color_objective(A, X, Y))


def apply_color_transform(image, transform):
    """Map every pixel through ``A`` in YCbCr and clamp the RGB result."""
    ycc = rgb_to_ycbcr(image)
    mapped = ycc @ np.asarray(transform.A, dtype=np.float64).T
    out, n_clamped = ycbcr_to_rgb(mapped, clamp=True)
    if n_clamped:
        log.debug("color transform clamped %d channel values", n_clamped)
    return out


def color_transfer(generated, reference, n=1000, region=0.5, seed=0):
    """Fit on a central sample of ``generated`` vs ``reference`` and apply."""
    rows, cols = central_window(np.shape(generated)[:2], region)
    n = min(n, (rows.stop - rows.start) * (cols.stop - cols.start))
    t = fit_color_transform(sample_pixel_pairs(generated, reference, n, region, seed))
    return apply_color_transform(generated, t), t
