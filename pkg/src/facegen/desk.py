"""Seeded synthetic faces for desk-scale runs and tests.

Each entry is a small smooth image drawn around a jittered 68-point landmark
layout, with signed attribute scores that change the drawing (dark rims
around the eyes for ``with-glasses``, a wider mouth for ``smiling``).
"""

from dataclasses import dataclass

import numpy as np

from facegen.guided import CorpusEntry, select_guided_set
from facegen.losses import ObjectiveConfig
from facegen.network import make_seeded_network

ATTRIBUTES = ("with-glasses", "smiling", "male")
# plain descent step that is stable on the desk setup at every layer it sweeps
DESK_LR = 300.0


def template_landmarks(size):
    """Canonical 68-point layout (jaw, brows, nose, eyes, mouth) for a square image."""
    s = size / 32.0
    cx, cy = size / 2.0 - 0.5, size / 2.0 - 0.5
    t = np.linspace(np.pi * 0.95, np.pi * 0.05, 17)
    jaw = np.stack([cx + 12 * s * np.cos(t), cy + 2 * s + 12 * s * np.sin(t)], axis=1)
    brow_l = np.stack([cx - 9 * s + np.arange(5) * 1.6 * s, np.full(5, cy - 7 * s)], axis=1)
    brow_r = np.stack([cx + 2.6 * s + np.arange(5) * 1.6 * s, np.full(5, cy - 7 * s)], axis=1)
    bridge = np.stack([np.full(4, cx), cy - 4 * s + np.arange(4) * 1.5 * s], axis=1)
    nostrils = np.stack([cx - 2 * s + np.arange(5) * s, np.full(5, cy + 2.5 * s)], axis=1)

    def eye(ex):
        a = np.linspace(0, 2 * np.pi, 7)[:-1]
        return np.stack([ex + 2.2 * s * np.cos(a), cy - 4 * s + 1.0 * s * np.sin(a)], axis=1)

    a = np.linspace(0, 2 * np.pi, 13)[:-1]
    mouth_out = np.stack([cx + 4.5 * s * np.cos(a), cy + 6.5 * s + 1.8 * s * np.sin(a)], axis=1)
    a = np.linspace(0, 2 * np.pi, 9)[:-1]
    mouth_in = np.stack([cx + 2.5 * s * np.cos(a), cy + 6.5 * s + 0.7 * s * np.sin(a)], axis=1)
    return np.concatenate([jaw, brow_l, brow_r, bridge, nostrils, eye(cx - 5 * s), eye(cx + 5 * s),
                           mouth_out, mouth_in])


def _blob(xx, yy, x, y, r):
    return np.exp(-((xx - x) ** 2 + (yy - y) ** 2) / (2 * r * r))


def render_face(landmarks, attributes, size, rng):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    s = size / 32.0
    skin = np.array([0.80, 0.62, 0.52]) + rng.uniform(-0.08, 0.08, 3)
    bg = rng.uniform(0.1, 0.5, 3)
    cx, cy = landmarks[:17].mean(axis=0)
    face = _blob(xx, yy, cx, cy - 2 * s, 9 * s) ** 0.5
    img = bg[None, None] * (1 - face[..., None]) + skin[None, None] * face[..., None]
    img += 0.05 * (yy / size - 0.5)[..., None]
    dark = np.zeros((size, size))
    for eye in (landmarks[36:42], landmarks[42:48]):
        ex, ey = eye.mean(axis=0)
        dark += 0.6 * _blob(xx, yy, ex, ey, 1.0 * s)
        if attributes.get("with-glasses", -1) > 0:
            ring = np.abs(np.hypot(xx - ex, yy - ey) - 3.0 * s)
            dark += 0.7 * np.exp(-ring ** 2 / (2 * (0.6 * s) ** 2))
    mx, my = landmarks[48:60].mean(axis=0)
    width = 4.5 * s * (1.4 if attributes.get("smiling", -1) > 0 else 0.8)
    mouth = np.exp(-((xx - mx) / width) ** 2 - ((yy - my) / (1.0 * s)) ** 2)
    img[..., 0] += 0.25 * mouth
    dark += 0.3 * mouth
    for brow in (landmarks[17:22], landmarks[22:27]):
        bx, by = brow.mean(axis=0)
        dark += 0.4 * np.exp(-((xx - bx) / (3 * s)) ** 2 - ((yy - by) / (0.7 * s)) ** 2)
    img -= 0.5 * dark[..., None]
    return np.clip(img + rng.normal(0, 0.01, img.shape), 0.0, 1.0)


def make_corpus(seed=0, n=20, size=32, jitter=1.0):
    """``n`` synthetic corpus entries ``face-000 ...`` with random attributes."""
    rng = np.random.default_rng(seed)
    base = template_landmarks(size)
    out = []
    for i in range(n):
        lm = base + rng.normal(0, jitter * size / 32.0, base.shape) + rng.normal(0, 0.8, 2)
        attrs = {a: float(np.round(rng.normal(0, 1), 3)) for a in ATTRIBUTES}
        out.append(CorpusEntry(f"face-{i:03d}", render_face(lm, attrs, size, rng), lm, attrs))
    return out


@dataclass
class DeskSetup:
    net: object
    corpus: list
    ref: CorpusEntry
    guided: object
    obj_cfg: ObjectiveConfig


def desk_setup(seed=0, size=32, n=24, k=3, arch="desk", layer="conv2_1", lam=0.5,
               gamma=1e-5, query="with-glasses>0", alpha=0.5):
    """The standard seeded run: reference without glasses, guided faces with."""
    net = make_seeded_network(42 + seed, arch)
    corpus = make_corpus(seed, n, size)
    ref = next(e for e in corpus if e.attributes["with-glasses"] < 0)
    guided = select_guided_set(corpus, query, ref, k=k, alpha=alpha, net=net, layer=layer)
    return DeskSetup(net, corpus, ref, guided, ObjectiveConfig(layer=layer, lam=lam, gamma=gamma))
