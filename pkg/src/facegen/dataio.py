"""Dataset ingestion and result files (images, CSV tables, traces)."""

import csv
import logging
from pathlib import Path

import numpy as np

from facegen.guided import N_LANDMARKS, CorpusEntry, check_landmarks

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".ppm", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")

# left/right landmark correspondence of the 68-point scheme (0-based)
MIRROR_68 = np.array(
    list(range(16, -1, -1))
    + list(range(26, 21, -1)) + list(range(21, 16, -1))
    + [27, 28, 29, 30]
    + [35, 34, 33, 32, 31]
    + [45, 44, 43, 42, 47, 46, 39, 38, 37, 36, 41, 40]
    + [54, 53, 52, 51, 50, 49, 48, 59, 58, 57, 56, 55]
    + [64, 63, 62, 61, 60, 67, 66, 65]
)

try:
    from PIL import Image as _PILImage
except ImportError:  # pragma: no cover - Pillow is a declared dependency
    _PILImage = None


def _read_ppm(path):
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while raw[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    if fields[0] != b"P6":
        raise ValueError(f"{path}: only binary PPM (P6) is supported")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    dtype = ">u2" if maxval > 255 else np.uint8
    data = np.frombuffer(raw[pos + 1:], dtype=dtype, count=w * h * 3)
    return data.reshape(h, w, 3).astype(np.float64) / maxval


def _write_ppm(image, path):
    arr = np.round(np.clip(image, 0, 1) * 255).astype(np.uint8)
    h, w = arr.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + arr.tobytes())


def read_image(path, size=None):
    """RGB image as float64 ``(H, W, 3)`` in [0, 1], optionally resized to ``size=(h, w)``."""
    path = Path(path)
    if _PILImage is None or path.suffix.lower() == ".ppm":
        img = _read_ppm(path)
        if size is not None and img.shape[:2] != tuple(size):
            raise ValueError("resizing needs Pillow")
        return img
    with _PILImage.open(path) as im:
        im = im.convert("RGB")
        if size is not None and (im.height, im.width) != tuple(size):
            im = im.resize((size[1], size[0]), _PILImage.BICUBIC)
        return np.asarray(im, dtype=np.float64) / 255.0


def write_image(image, path):
    """PNG via Pillow; falls back to PPM when Pillow is missing. Returns the path written."""
    path = Path(path)
    if _PILImage is None or path.suffix.lower() == ".ppm":
        if path.suffix.lower() != ".ppm":
            path = path.with_suffix(".ppm")
        _write_ppm(image, path)
        return path
    arr = np.round(np.clip(image, 0, 1) * 255).astype(np.uint8)
    _PILImage.fromarray(arr, "RGB").save(path)
    return path


def read_landmarks_csv(path):
    """``id,x1,y1,...,x68,y68`` -> {id: (68, 2) array}."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "id":
                continue
            vals = [float(v) for v in row[1:]]
            if len(vals) != 2 * N_LANDMARKS:
                raise ValueError(f"{path}: {row[0]} has {len(vals)} values, expected {2 * N_LANDMARKS}")
            out[row[0].strip()] = check_landmarks(np.array(vals).reshape(N_LANDMARKS, 2))
    return out


def write_landmarks_csv(landmarks, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["id"]
        for i in range(1, N_LANDMARKS + 1):
            header += [f"x{i}", f"y{i}"]
        w.writerow(header)
        for key, pts in landmarks.items():
            w.writerow([key] + [repr(float(v)) for v in np.asarray(pts).ravel()])


def read_attributes_csv(path):
    """``id,<attr1>,<attr2>,...`` -> {id: {attr: score}}."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        names = header[1:]
        out = {}
        for row in reader:
            if not row:
                continue
            scores = [float(v) for v in row[1:]]
            if len(scores) != len(names) or not np.all(np.isfinite(scores)):
                raise ValueError(f"{path}: bad attribute row for {row[0]!r}")
            out[row[0].strip()] = dict(zip(names, scores))
    return out


def write_attributes_csv(table, path):
    names = sorted({a for attrs in table.values() for a in attrs})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + names)
        for key, attrs in table.items():
            w.writerow([key] + [repr(float(attrs[n])) for n in names])


def read_id_list(path):
    lines = Path(path).read_text().splitlines()
    return {s.strip() for s in lines if s.strip() and not s.startswith("#")}


def find_image(image_dir, entry_id):
    for suffix in IMAGE_SUFFIXES:
        p = Path(image_dir) / f"{entry_id}{suffix}"
        if p.is_file():
            return p
    return None


def flip_entry(entry):
    """Horizontally mirrored copy with x-reflected, re-indexed landmarks."""
    w = entry.image.shape[1]
    lm = entry.landmarks.copy()
    lm[:, 0] = (w - 1) - lm[:, 0]
    return CorpusEntry(f"{entry.id}_flip", entry.image[:, ::-1].copy(), lm[MIRROR_68],
                       dict(entry.attributes))


def load_corpus(image_dir, landmarks_csv, attributes_csv, exclude=None, augment_flip=False, size=None):
    """Corpus entries for every id present in both tables and the image directory."""
    landmarks = read_landmarks_csv(landmarks_csv)
    attributes = read_attributes_csv(attributes_csv)
    excluded = set() if exclude is None else (read_id_list(exclude) if isinstance(exclude, (str, Path)) else set(exclude))
    corpus = []
    for entry_id, attrs in attributes.items():
        if entry_id in excluded:
            continue
        if entry_id not in landmarks:
            log.warning("no landmarks for %s; skipped", entry_id)
            continue
        path = find_image(image_dir, entry_id)
        if path is None:
            log.warning("no image for %s in %s; skipped", entry_id, image_dir)
            continue
        img = read_image(path, size)
        lm = landmarks[entry_id]
        if size is not None:
            lm = lm * np.array([size[1], size[0]]) / _native_size(path)[::-1]
        corpus.append(CorpusEntry(entry_id, img, check_landmarks(lm, img.shape[:2]), attrs))
    if augment_flip:
        corpus += [flip_entry(e) for e in corpus]
    return corpus


def _native_size(path):
    if _PILImage is None or Path(path).suffix.lower() == ".ppm":
        return np.array(_read_ppm(path).shape[:2], dtype=np.float64)
    with _PILImage.open(path) as im:
        return np.array([im.height, im.width], dtype=np.float64)


def save_corpus(corpus, out_dir):
    """Write images, ``landmarks.csv`` and ``attributes.csv`` for ``corpus``."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    for e in corpus:
        write_image(e.image, out / "images" / f"{e.id}.png")
    write_landmarks_csv({e.id: e.landmarks for e in corpus}, out / "landmarks.csv")
    write_attributes_csv({e.id: e.attributes for e in corpus}, out / "attributes.csv")
    return out


TRACE_HEADER = ("iter", "total", "attr", "id", "tv", "sqerr")


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for row in trace:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def read_trace_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header")
        return [(int(r[0]),) + tuple(float(v) for v in r[1:]) for r in reader if r]


def write_config(params, path):
    """``key = value`` echo of every effective parameter, sorted by key."""
    lines = [f"{k} = {params[k]}" for k in sorted(params)]
    Path(path).write_text("\n".join(lines) + "\n")
