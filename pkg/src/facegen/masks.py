"""Binary attribute masks from facial landmarks.

Pixel ``(row, col)`` has its center at ``(x=col, y=row)``; landmark
coordinates use the same convention. Masks are ``(H, W, 3)`` float arrays of
0/1, identical across channels.
"""

import csv
import logging
import math
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import ndimage

log = logging.getLogger(__name__)

_EPS = 1e-9


class DegenerateHullError(ValueError):
    pass


class MaskError(ValueError):
    pass


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points):
    """Counter-clockwise hull vertices (Andrew's monotone chain).

    Collinear boundary points are dropped. Raises DegenerateHullError if the
    points do not span a 2-d region.
    """
    pts = sorted({(float(x), float(y)) for x, y in points})
    if len(pts) < 3:
        raise DegenerateHullError(f"need 3 distinct points, got {len(pts)}")
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateHullError("points are collinear")
    return np.array(hull)


def rasterize_polygon(poly, dims, offset=0):
    """Scanline fill of a convex polygon; boundary pixels count as inside.

    ``offset`` shifts the polygon by (+offset, +offset) before filling, so a
    canvas padded by ``offset`` on every side can hold parts outside ``dims``.
    """
    h, w = dims
    out = np.zeros((h, w), dtype=bool)
    poly = np.asarray(poly, dtype=np.float64) + offset
    n = len(poly)
    y_lo = max(0, math.ceil(poly[:, 1].min() - _EPS))
    y_hi = min(h - 1, math.floor(poly[:, 1].max() + _EPS))
    for row in range(y_lo, y_hi + 1):
        xs = []
        for i in range(n):
            (x0, y0), (x1, y1) = poly[i], poly[(i + 1) % n]
            if min(y0, y1) - _EPS <= row <= max(y0, y1) + _EPS:
                if abs(y1 - y0) < _EPS:
                    xs += [x0, x1]
                else:
                    t = min(1.0, max(0.0, (row - y0) / (y1 - y0)))
                    xs.append(x0 + t * (x1 - x0))
        if not xs:
            continue
        c_lo = max(0, math.ceil(min(xs) - _EPS))
        c_hi = min(w - 1, math.floor(max(xs) + _EPS))
        if c_lo <= c_hi:
            out[row, c_lo:c_hi + 1] = True
    return out


def disk(radius):
    r = int(math.floor(radius))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return xx * xx + yy * yy <= radius * radius + _EPS


def dilate(region, radius):
    """Binary dilation by a Euclidean disk of ``radius`` pixels."""
    region = np.asarray(region, dtype=bool)
    if radius <= 0 or not region.any():
        return region.copy()
    return ndimage.binary_dilation(region, structure=disk(radius))


def _to_mask(region):
    return np.repeat(region.astype(np.float64)[:, :, None], 3, axis=2)


def expand_and_rasterize(hull, margin, dims, seeds=None):
    """Fill ``hull``, dilate by ``margin`` and clip to ``dims``.

    ``seeds`` are extra points whose nearest pixel is set before dilation,
    which keeps thin hulls from vanishing between pixel centers.
    """
    if margin < 0:
        raise MaskError("margin must be >= 0")
    h, w = dims
    pad = int(math.ceil(margin))
    canvas = rasterize_polygon(hull, (h + 2 * pad, w + 2 * pad), offset=pad)
    for x, y in ([] if seeds is None else seeds):
        r, c = int(math.floor(y + 0.5)) + pad, int(math.floor(x + 0.5)) + pad
        if 0 <= r < h + 2 * pad and 0 <= c < w + 2 * pad:
            canvas[r, c] = True
    region = dilate(canvas, margin)[pad:pad + h, pad:pad + w]
    if not region.any():
        log.warning("attribute region lies outside the image; mask is empty")
    return _to_mask(region)


def disk_mask(center, radius, dims):
    h, w = dims
    yy, xx = np.mgrid[0:h, 0:w]
    cx, cy = center
    return _to_mask((xx - cx) ** 2 + (yy - cy) ** 2 <= radius * radius + _EPS)


def default_margin(dims):
    """12 pixels at 224x224, scaled with the smaller image side."""
    return 12.0 * min(dims) / 224.0


def load_attribute_map(path=None):
    """CSV rows ``attribute,i1;i2;...`` with 1-based landmark indices."""
    if path is None:
        text = resources.files("facegen").joinpath("data/attribute_landmarks.csv").read_text()
    else:
        text = Path(path).read_text()
    amap = {}
    for row in csv.reader(line for line in text.splitlines() if line.strip() and not line.startswith("#")):
        if row[0].strip() == "attribute":
            continue
        idx = [int(v) for v in row[1].split(";") if v.strip()]
        if not idx or min(idx) < 1 or max(idx) > 68:
            raise MaskError(f"bad landmark indices for {row[0]!r}")
        amap[row[0].strip()] = idx
    return amap


def save_attribute_map(amap, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attribute", "landmarks"])
        for name, idx in amap.items():
            writer.writerow([name, ";".join(str(i) for i in idx)])


def attribute_mask(landmarks, indices, margin, dims):
    pts = np.asarray(landmarks, dtype=np.float64)[np.asarray(indices) - 1]
    try:
        hull = convex_hull(pts)
    except DegenerateHullError:
        log.info("degenerate landmark hull; using a disk around the centroid")
        out = disk_mask(pts.mean(axis=0), margin, dims)
        for x, y in pts:
            r, c = int(math.floor(y + 0.5)), int(math.floor(x + 0.5))
            if 0 <= r < dims[0] and 0 <= c < dims[1]:
                out[r, c] = 1.0
        return out
    return expand_and_rasterize(hull, margin, dims, seeds=pts)


def build_mask(attributes, landmarks, amap=None, margin=None, dims=(224, 224)):
    """Union of the per-attribute masks."""
    amap = load_attribute_map() if amap is None else amap
    attributes = list(dict.fromkeys(attributes))
    unknown = [a for a in attributes if a not in amap]
    if unknown:
        raise MaskError(f"no landmark group for attribute(s): {', '.join(unknown)}")
    if not attributes:
        raise MaskError("no attributes given")
    margin = default_margin(dims) if margin is None else margin
    out = np.zeros(tuple(dims) + (3,))
    for name in attributes:
        out = np.maximum(out, attribute_mask(landmarks, amap[name], margin, dims))
    return out


def write_pgm(mask, path):
    """Binary PGM (P5) of the first mask channel, 0/255."""
    m = np.asarray(mask)
    plane = (m[:, :, 0] if m.ndim == 3 else m) > 0
    h, w = plane.shape
    data = (plane.astype(np.uint8) * 255).tobytes()
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + data)


def read_pgm(path):
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise MaskError("not a binary PGM")
    w, h = int(fields[1]), int(fields[2])
    plane = np.frombuffer(raw[pos + 1:pos + 1 + w * h], dtype=np.uint8).reshape(h, w)
    return _to_mask(plane > 0)
