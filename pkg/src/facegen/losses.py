"""Perceptual, attribute, identity and TV losses with image-space gradients.

Every loss returns a :class:`LossValue` whose ``gradient`` has the target
image's shape. The perceptual feature at a conv layer is its rectified
output, so the layer gradient is zero wherever the target's conv response is
negative (and the value stays consistent with that gradient).
"""

from dataclasses import dataclass, field

import numpy as np

from facegen.network import Conv, backward_to_image, forward


class LossError(ValueError):
    pass


@dataclass
class LossValue:
    value: float
    gradient: np.ndarray
    components: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ObjectiveConfig:
    """Weights of ``attr + lam * id + gamma * tv``.

    ``id_layer`` defaults to ``layer``. ``premask_guided`` also multiplies the
    guided images by the mask (off by default: only the target is masked).
    """

    layer: str
    lam: float = 1.0
    gamma: float = 0.0
    tv_beta: float = 2.0
    id_layer: str = None
    premask_guided: bool = False

    def __post_init__(self):
        for name in ("lam", "gamma"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise LossError(f"{name} must be finite and >= 0, got {v}")
        if not self.tv_beta >= 1:
            raise LossError(f"tv_beta must be >= 1, got {self.tv_beta}")

    @property
    def identity_layer(self):
        return self.id_layer or self.layer


def _features(net, layer, stack):
    f = stack.maps[layer]
    if isinstance(net.layers[net.index(layer)], Conv):
        return np.maximum(f, 0.0)
    return f


def layer_features(net, layer, image):
    """Comparable feature map of ``image`` at ``layer`` (rectified for conv layers)."""
    return _features(net, layer, forward(net, image, layer))


def _check_pair(a, b):
    if np.shape(a) != np.shape(b):
        raise LossError(f"image shapes differ: {np.shape(a)} vs {np.shape(b)}")


def _layer_grad(net, layer, stack, diff):
    """d/d(layer output) of 0.5/N * ||diff||^2 with the negative-response gate."""
    grad = diff / diff.size
    if isinstance(net.layers[net.index(layer)], Conv):
        grad = np.where(stack.maps[layer] >= 0, grad, 0.0)
    return grad


def perceptual_loss(net, layer, target, ref):
    """``1/(2 C H W) * ||phi(target) - phi(ref)||_F^2`` at ``layer``."""
    _check_pair(target, ref)
    stack = forward(net, target, layer)
    diff = _features(net, layer, stack) - layer_features(net, layer, ref)
    value = 0.5 * float(np.sum(diff * diff)) / diff.size
    grad = backward_to_image(net, stack, layer, _layer_grad(net, layer, stack, diff))
    return LossValue(value, grad)


def identity_loss(net, layer, target, ref):
    return perceptual_loss(net, layer, target, ref)


def _guided_pairs(guided):
    if hasattr(guided, "images") and hasattr(guided, "weights"):
        images, weights = list(guided.images), list(guided.weights)
    else:
        pairs = list(guided)
        images = [p[0] for p in pairs]
        weights = [float(p[1]) for p in pairs]
    if not images:
        raise LossError("guided set is empty")
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise LossError(f"guided weights must be >= 0 and sum to 1, got {weights.tolist()}")
    return images, weights


def _check_mask(mask, target):
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != np.shape(target):
        raise LossError(f"mask shape {mask.shape} != target shape {np.shape(target)}")
    return mask


class Objective:
    """Combined objective with guided / reference features computed once.

    ``evaluate(target)`` returns the total :class:`LossValue`; its
    ``components`` dict holds the attr / id / tv LossValues.
    """

    def __init__(self, net, cfg, guided, ref, mask=None):
        self.net = net
        self.cfg = cfg
        self.ref = np.asarray(ref, dtype=np.float64)
        images, self.weights = _guided_pairs(guided)
        for img in images:
            _check_pair(img, self.ref)
        self.mask = None if mask is None else _check_mask(mask, self.ref)
        net.index(cfg.layer)
        net.index(cfg.identity_layer)
        if self.mask is not None and cfg.premask_guided:
            images = [np.asarray(img) * self.mask for img in images]
        self.guided_feats = [layer_features(net, cfg.layer, img) for img in images]
        self.ref_feats = layer_features(net, cfg.identity_layer, self.ref)

    def attribute(self, target):
        net, layer = self.net, self.cfg.layer
        target = np.asarray(target, dtype=np.float64)
        x = target if self.mask is None else target * self.mask
        stack = forward(net, x, layer)
        f = _features(net, layer, stack)
        value = 0.0
        layer_grad = np.zeros_like(f)
        # fixed summation order by guided index
        for w, g in zip(self.weights, self.guided_feats):
            diff = f - g
            value += w * (0.5 * float(np.sum(diff * diff)) / diff.size)
            layer_grad += w * _layer_grad(net, layer, stack, diff)
        grad = backward_to_image(net, stack, layer, layer_grad)
        if self.mask is not None:
            grad = np.where(self.mask > 0, grad, 0.0)
        return LossValue(value, grad)

    def identity(self, target):
        net, layer = self.net, self.cfg.identity_layer
        stack = forward(net, target, layer)
        diff = _features(net, layer, stack) - self.ref_feats
        value = 0.5 * float(np.sum(diff * diff)) / diff.size
        grad = backward_to_image(net, stack, layer, _layer_grad(net, layer, stack, diff))
        return LossValue(value, grad)

    def value_and_grad(self, target):
        """Total value and gradient plus component values, in as few passes as possible.

        Unmasked runs with a shared layer use one forward and one backward;
        otherwise this falls back to :meth:`evaluate`.
        """
        cfg, net, layer = self.cfg, self.net, self.cfg.layer
        if self.mask is not None or cfg.identity_layer != layer:
            lv = self.evaluate(target)
            return lv.value, lv.gradient, {k: v.value for k, v in lv.components.items()}
        _check_pair(target, self.ref)
        stack = forward(net, target, layer)
        f = _features(net, layer, stack)
        attr = 0.0
        diff_sum = np.zeros_like(f)
        for w, g in zip(self.weights, self.guided_feats):
            diff = f - g
            attr += w * (0.5 * float(np.sum(diff * diff)) / diff.size)
            diff_sum += w * diff
        diff = f - self.ref_feats
        ident = 0.5 * float(np.sum(diff * diff)) / diff.size
        diff_sum += cfg.lam * diff
        grad = backward_to_image(net, stack, layer, _layer_grad(net, layer, stack, diff_sum))
        tv = tv_loss(target, cfg.tv_beta)
        grad += cfg.gamma * tv.gradient
        value = attr + cfg.lam * ident + cfg.gamma * tv.value
        return value, grad, {"attr": attr, "id": ident, "tv": tv.value}

    def evaluate(self, target):
        _check_pair(target, self.ref)
        cfg = self.cfg
        attr = self.attribute(target)
        ident = self.identity(target)
        tv = tv_loss(target, cfg.tv_beta)
        value = attr.value + cfg.lam * ident.value + cfg.gamma * tv.value
        grad = attr.gradient + cfg.lam * ident.gradient + cfg.gamma * tv.gradient
        return LossValue(value, grad, {"attr": attr, "id": ident, "tv": tv})


def attribute_loss(net, layer, target, guided, mask=None, premask_guided=False):
    """Weighted perceptual loss against each guided image, optionally masked.

    With a mask, each term compares ``target * mask`` with the guided image
    and the image gradient is zeroed wherever ``mask <= 0``.
    """
    if mask is not None:
        _check_mask(mask, target)
    cfg = ObjectiveConfig(layer=layer, premask_guided=premask_guided)
    return Objective(net, cfg, guided, target, mask).attribute(target)


def tv_loss(target, beta=2.0):
    """Sum over pixels/channels of (dy^2 + dx^2)^(beta/2), forward differences.

    Differences that would reach past the last row / column are dropped.
    """
    if not beta >= 1:
        raise LossError(f"beta must be >= 1, got {beta}")
    img = np.asarray(target, dtype=np.float64)
    d_row = np.zeros_like(img)
    d_col = np.zeros_like(img)
    d_row[:-1] = img[1:] - img[:-1]
    d_col[:, :-1] = img[:, 1:] - img[:, :-1]
    s = d_row * d_row + d_col * d_col
    if beta == 2:
        value = float(np.sum(s))
        coef = np.full_like(s, 2.0)
    else:
        value = float(np.sum(s ** (beta / 2)))
        pos = s > 0
        coef = np.zeros_like(s)
        coef[pos] = beta * s[pos] ** (beta / 2 - 1)
    g = -coef * (d_row + d_col)
    g[1:] += (coef * d_row)[:-1]
    g[:, 1:] += (coef * d_col)[:, :-1]
    return LossValue(value, g)


def total_objective(net, cfg, target, guided, ref, mask=None):
    """``attr + lam * id + gamma * tv`` with the components attached."""
    return Objective(net, cfg, guided, ref, mask).evaluate(target)
