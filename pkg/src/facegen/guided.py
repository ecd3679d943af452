"""Guided-set construction: attribute filtering, pose+content ranking, weights."""

import logging
import re
from dataclasses import dataclass, field

import numpy as np

from facegen.losses import layer_features

log = logging.getLogger(__name__)

N_LANDMARKS = 68


class GuidedSetError(ValueError):
    pass


class QueryError(ValueError):
    pass


@dataclass(eq=False)
class CorpusEntry:
    id: str
    image: np.ndarray
    landmarks: np.ndarray
    attributes: dict = field(default_factory=dict)


@dataclass(eq=False)
class GuidedSet:
    """k selected entries with weights summing to 1, ascending by distance."""

    entries: list
    weights: np.ndarray
    distances: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if not self.entries:
            raise GuidedSetError("guided set is empty")
        if len(self.weights) != len(self.entries):
            raise GuidedSetError("one weight per guided entry required")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise GuidedSetError(f"weights must be >= 0 and sum to 1: {self.weights.tolist()}")

    @property
    def images(self):
        return [e.image for e in self.entries]

    @property
    def ids(self):
        return [e.id for e in self.entries]

    def __len__(self):
        return len(self.entries)


def guided_from_images(images, weights=None, ids=None):
    """GuidedSet from explicitly supplied images (no corpus ranking)."""
    images = list(images)
    if weights is None:
        weights = assign_weights([0.0] * len(images), "uniform")
    ids = ids or [f"guided-{i}" for i in range(len(images))]
    entries = [CorpusEntry(i, np.asarray(img, dtype=np.float64), None) for i, img in zip(ids, images)]
    return GuidedSet(entries, weights, meta={"mode": "explicit"})


def check_landmarks(points, dims=None, margin=None):
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape != (N_LANDMARKS, 2):
        raise ValueError(f"expected {N_LANDMARKS} (x, y) landmarks, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("landmarks must be finite")
    if dims is not None:
        h, w = dims
        m = 0.25 * max(h, w) if margin is None else margin
        if pts[:, 0].min() < -m or pts[:, 0].max() > w - 1 + m or pts[:, 1].min() < -m or pts[:, 1].max() > h - 1 + m:
            raise ValueError("landmarks fall outside the image bounds")
    return pts


def pose_distance(a, b):
    """Sum of squared landmark displacements."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sum(d * d))


# -- attribute queries ----------------------------------------------------

_TERM = re.compile(r"^\s*([A-Za-z0-9_\-.]+)\s*(?:([<>])\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))?\s*$")


def parse_query(query):
    """``"smiling>0, male, age<0.5"`` -> [(name, op, threshold), ...].

    Terms are separated by commas or ``AND``; a bare name means ``>0``.
    """
    if query is None:
        return []
    if not isinstance(query, str):
        return [tuple(t) for t in query]
    terms = []
    for part in re.split(r",|\bAND\b", query, flags=re.IGNORECASE):
        if not part.strip():
            continue
        m = _TERM.match(part)
        if not m:
            raise QueryError(f"cannot parse query term {part.strip()!r}")
        name, op, thr = m.groups()
        terms.append((name, op or ">", float(thr) if thr is not None else 0.0))
    return terms


def _satisfies(score, op, thr):
    return score > thr if op == ">" else score < thr


def filter_by_attributes(corpus, query, schema=None):
    """Entries satisfying every query term, in corpus order."""
    terms = parse_query(query)
    if schema is None:
        schema = set()
        for e in corpus:
            schema.update(e.attributes)
    unknown = sorted({name for name, _, _ in terms} - set(schema))
    if terms and corpus and unknown:
        raise QueryError(f"unknown attribute(s): {', '.join(unknown)}")
    return [
        e for e in corpus
        if all(name in e.attributes and _satisfies(e.attributes[name], op, thr) for name, op, thr in terms)
    ]


# -- ranking --------------------------------------------------------------

def content_distances(cands, ref_image, net, layer):
    """Perceptual loss of each candidate image against the reference image."""
    ref_f = layer_features(net, layer, ref_image)
    out = []
    for e in cands:
        diff = layer_features(net, layer, e.image) - ref_f
        out.append(0.5 * float(np.sum(diff * diff)) / diff.size)
    return np.array(out)


def similarity_distances(cands, ref, alpha, net=None, layer=None, content=None):
    """Normalized pose+content distance of every candidate to ``ref``.

    Each term is divided by its sum over the candidates. A zero sum makes
    that term contribute 0 for all candidates; ``info`` flags it.
    """
    if not cands:
        raise GuidedSetError("no candidates to rank")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    pose = np.array([pose_distance(e.landmarks, ref.landmarks) for e in cands])
    if content is None:
        if alpha > 0:
            if net is None or layer is None:
                raise ValueError("content distance needs a network and layer")
            content = content_distances(cands, ref.image, net, layer)
        else:
            content = np.zeros(len(cands))
    content = np.asarray(content, dtype=np.float64)
    info = {"pose": pose, "content": content, "pose_degenerate": False, "content_degenerate": False}
    d = np.zeros(len(cands))
    ps, cs = pose.sum(), content.sum()
    if ps > 0:
        d += (1 - alpha) * pose / ps
    else:
        info["pose_degenerate"] = True
    if cs > 0:
        d += alpha * content / cs
    else:
        info["content_degenerate"] = True
    for flag in ("pose_degenerate", "content_degenerate"):
        if info[flag]:
            log.warning("%s: all candidates coincide with the reference", flag)
    return d, info


def rank_candidates(cands, ref, alpha, net=None, layer=None, content=None):
    """``[(entry, distance), ...]`` ascending; ties broken by entry id."""
    d, _ = similarity_distances(cands, ref, alpha, net, layer, content)
    order = sorted(range(len(cands)), key=lambda i: (d[i], cands[i].id))
    return [(cands[i], float(d[i])) for i in order]


def assign_weights(distances, scheme="uniform", eps=1e-6):
    d = np.asarray(distances, dtype=np.float64)
    if d.size == 0:
        raise GuidedSetError("no distances")
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    if scheme == "uniform":
        return np.full(d.size, 1.0 / d.size)
    if scheme == "inverse-distance":
        inv = 1.0 / (d + eps)
        return inv / inv.sum()
    raise ValueError(f"unknown weight scheme {scheme!r}")


def select_guided_set(corpus, query, ref, k=5, alpha=0.5, weight_scheme="uniform",
                      net=None, layer=None, include_ref=False, exclude_ids=()):
    """Filter by attributes, rank by similarity to ``ref``, keep the first ``k``."""
    if k < 1:
        raise ValueError("k must be positive")
    cands = filter_by_attributes(corpus, query)
    excluded = set(exclude_ids)
    if not include_ref:
        excluded.add(ref.id)
    cands = [e for e in cands if e.id not in excluded]
    if len(cands) < k:
        raise GuidedSetError(
            f"need k={k} candidates but only {len(cands)} match {query!r} (short by {k - len(cands)})"
        )
    d, info = similarity_distances(cands, ref, alpha, net, layer)
    order = sorted(range(len(cands)), key=lambda i: (d[i], cands[i].id))[:k]
    chosen = [float(d[i]) for i in order]
    meta = {
        "alpha": alpha,
        "candidates": len(cands),
        "pose_degenerate": info["pose_degenerate"],
        "content_degenerate": info["content_degenerate"],
        "all_distances": {cands[i].id: float(d[i]) for i in range(len(cands))},
    }
    return GuidedSet([cands[i] for i in order], assign_weights(chosen, weight_scheme), chosen, meta)
