"""Minimal differentiable conv / relu / max-pool feature network.

A network is plain data (:class:`NetworkSpec`); :func:`forward` produces
per-layer feature maps and :func:`backward_to_image` pulls a gradient defined
at any executed layer back to the input image.

Images are ``(H, W, 3)`` float arrays; feature maps are ``(C, H, W)``.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from facegen import kernels

MAGIC = b"PGN1"
KIND_CONV, KIND_RELU, KIND_MAXPOOL = 0, 1, 2


class NetworkError(ValueError):
    """Invalid network description, weight file, or forward/backward request."""


@dataclass(frozen=True, eq=False)
class Conv:
    name: str
    in_ch: int
    out_ch: int
    kernel_h: int
    kernel_w: int
    stride: int
    pad: int
    weights: np.ndarray
    bias: np.ndarray


@dataclass(frozen=True)
class ReLU:
    name: str


@dataclass(frozen=True)
class MaxPool:
    name: str
    kernel: int
    stride: int


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        _validate(self.layers)

    @property
    def layer_names(self):
        return [layer.name for layer in self.layers]

    @property
    def in_channels(self):
        for layer in self.layers:
            if isinstance(layer, Conv):
                return layer.in_ch
        return None

    def index(self, name):
        for i, layer in enumerate(self.layers):
            if layer.name == name:
                return i
        raise NetworkError(f"unknown layer {name!r}; have {self.layer_names}")

    def conv_names(self):
        return [layer.name for layer in self.layers if isinstance(layer, Conv)]


def _validate(layers):
    if not layers:
        raise NetworkError("network has no layers")
    seen = set()
    channels = None
    for layer in layers:
        if layer.name in seen:
            raise NetworkError(f"duplicate layer name {layer.name!r}")
        seen.add(layer.name)
        if isinstance(layer, Conv):
            if channels is not None and layer.in_ch != channels:
                raise NetworkError(
                    f"{layer.name}: in_ch={layer.in_ch} but previous layer gives {channels} channels"
                )
            shape = (layer.out_ch, layer.in_ch, layer.kernel_h, layer.kernel_w)
            if layer.weights.shape != shape:
                raise NetworkError(f"{layer.name}: weight shape {layer.weights.shape} != {shape}")
            if layer.bias.shape != (layer.out_ch,):
                raise NetworkError(f"{layer.name}: bias shape {layer.bias.shape} != ({layer.out_ch},)")
            if min(shape) < 1 or layer.stride < 1 or layer.pad < 0:
                raise NetworkError(f"{layer.name}: invalid conv geometry")
            if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.bias))):
                raise NetworkError(f"{layer.name}: non-finite weight")
            channels = layer.out_ch
        elif isinstance(layer, MaxPool):
            if layer.kernel < 1 or layer.stride < 1:
                raise NetworkError(f"{layer.name}: invalid pool geometry")
        elif not isinstance(layer, ReLU):
            raise NetworkError(f"unsupported layer type {type(layer).__name__}")


def make_conv(name, weights, bias, stride=1, pad=0):
    """Build a :class:`Conv` from an ``(out, in, kh, kw)`` weight tensor."""
    w = np.ascontiguousarray(weights, dtype=np.float64)
    b = np.ascontiguousarray(bias, dtype=np.float64)
    if w.ndim != 4:
        raise NetworkError(f"{name}: weights must be 4-d, got shape {w.shape}")
    o, c, kh, kw = w.shape
    w.setflags(write=False)
    b.setflags(write=False)
    return Conv(name, c, o, kh, kw, int(stride), int(pad), w, b)


# -- seeded desk-scale networks -------------------------------------------

# ("conv", out_ch, kernel, stride, pad) | ("relu",) | ("maxpool", kernel, stride)
ARCHS = {
    "tiny-a": [("conv", 4, 3, 1, 1), ("relu",), ("maxpool", 2, 2), ("conv", 8, 3, 1, 1), ("relu",)],
    "tiny-b": [
        ("conv", 4, 3, 1, 1), ("relu",), ("conv", 4, 3, 1, 1), ("relu",),
        ("maxpool", 2, 2), ("conv", 6, 3, 1, 1),
    ],
    "tiny-c": [("conv", 6, 5, 2, 2), ("relu",), ("conv", 8, 3, 1, 1), ("relu",)],
    "desk": [
        ("conv", 8, 3, 1, 1), ("relu",), ("conv", 8, 3, 1, 1), ("relu",), ("maxpool", 2, 2),
        ("conv", 12, 3, 1, 1), ("relu",), ("conv", 12, 3, 1, 1), ("relu",), ("maxpool", 2, 2),
        ("conv", 16, 3, 1, 1), ("relu",),
    ],
}


def _arch_names(arch):
    # VGG-style names: conv<block>_<n>, relu<block>_<n>, pool<block>
    block, n, names = 1, 0, []
    for desc in arch:
        kind = desc[0]
        if kind == "conv":
            n += 1
            names.append(f"conv{block}_{n}")
        elif kind == "relu":
            names.append(f"relu{block}_{max(n, 1)}")
        elif kind == "maxpool":
            names.append(f"pool{block}")
            block, n = block + 1, 0
        else:
            raise NetworkError(f"unknown layer kind {kind!r} in arch")
    return names


def make_seeded_network(seed, arch="tiny-a", in_ch=3):
    """Deterministic network with weights ~ N(0, 1) / sqrt(fan_in).

    Weights and biases are rounded to float32 so that a save/load round trip
    through the binary format is exact.
    """
    if isinstance(arch, str):
        if arch not in ARCHS:
            raise NetworkError(f"unknown arch {arch!r}; known: {sorted(ARCHS)}")
        arch = ARCHS[arch]
    if not arch:
        raise NetworkError("empty arch")
    rng = np.random.default_rng(seed)
    layers = []
    channels = in_ch
    for name, desc in zip(_arch_names(arch), arch):
        if desc[0] == "conv":
            _, out_ch, k, stride, pad = desc
            fan_in = channels * k * k
            w = rng.standard_normal((out_ch, channels, k, k)) / np.sqrt(fan_in)
            b = 0.1 * rng.standard_normal(out_ch)
            layers.append(make_conv(name, w.astype(np.float32), b.astype(np.float32), stride, pad))
            channels = out_ch
        elif desc[0] == "relu":
            layers.append(ReLU(name))
        else:
            layers.append(MaxPool(name, int(desc[1]), int(desc[2])))
    return NetworkSpec(layers)


# -- weight file I/O ------------------------------------------------------

def save_network(net, path):
    """Write ``net`` in the little-endian PGN1 binary format."""
    out = [MAGIC, struct.pack("<I", len(net.layers))]
    for layer in net.layers:
        name = layer.name.encode("utf-8")
        if isinstance(layer, Conv):
            out.append(struct.pack("<B", KIND_CONV))
        elif isinstance(layer, ReLU):
            out.append(struct.pack("<B", KIND_RELU))
        else:
            out.append(struct.pack("<B", KIND_MAXPOOL))
        out.append(struct.pack("<H", len(name)) + name)
        if isinstance(layer, Conv):
            out.append(struct.pack("<6I", layer.in_ch, layer.out_ch, layer.kernel_h,
                                   layer.kernel_w, layer.stride, layer.pad))
            out.append(layer.weights.astype("<f4").tobytes())
            out.append(layer.bias.astype("<f4").tobytes())
        elif isinstance(layer, MaxPool):
            out.append(struct.pack("<2I", layer.kernel, layer.stride))
    Path(path).write_bytes(b"".join(out))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise NetworkError("truncated weight file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_network(path):
    """Read and validate a PGN1 weight file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"weight file not found: {path}")
    r = _Reader(path.read_bytes())
    magic = r.take(4)
    if magic != MAGIC:
        raise NetworkError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (count,) = r.unpack("<I")
    layers = []
    for _ in range(count):
        (kind,) = r.unpack("<B")
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        if kind == KIND_CONV:
            in_ch, out_ch, kh, kw, stride, pad = r.unpack("<6I")
            nw = out_ch * in_ch * kh * kw
            w = np.frombuffer(r.take(4 * nw), dtype="<f4").reshape(out_ch, in_ch, kh, kw)
            b = np.frombuffer(r.take(4 * out_ch), dtype="<f4")
            layers.append(make_conv(name, w, b, stride, pad))
        elif kind == KIND_RELU:
            layers.append(ReLU(name))
        elif kind == KIND_MAXPOOL:
            k, stride = r.unpack("<2I")
            layers.append(MaxPool(name, k, stride))
        else:
            raise NetworkError(f"unknown layer kind tag {kind}")
    if r.pos != len(r.data):
        raise NetworkError(f"{len(r.data) - r.pos} trailing bytes after last layer")
    return NetworkSpec(layers)


def dump_text(net, path):
    """Debug dump: one token per line (header fields, then weights, then biases)."""
    lines = [MAGIC.decode(), str(len(net.layers))]
    for layer in net.layers:
        if isinstance(layer, Conv):
            lines += ["conv", layer.name]
            lines += [str(v) for v in (layer.in_ch, layer.out_ch, layer.kernel_h,
                                       layer.kernel_w, layer.stride, layer.pad)]
            lines += [repr(float(v)) for v in layer.weights.ravel()]
            lines += [repr(float(v)) for v in layer.bias]
        elif isinstance(layer, ReLU):
            lines += ["relu", layer.name]
        else:
            lines += ["maxpool", layer.name, str(layer.kernel), str(layer.stride)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_text(path):
    tokens = iter(Path(path).read_text().split("\n"))
    if next(tokens) != MAGIC.decode():
        raise NetworkError("bad text dump header")
    layers = []
    for _ in range(int(next(tokens))):
        kind, name = next(tokens), next(tokens)
        if kind == "conv":
            in_ch, out_ch, kh, kw, stride, pad = (int(next(tokens)) for _ in range(6))
            w = np.array([float(next(tokens)) for _ in range(out_ch * in_ch * kh * kw)])
            b = np.array([float(next(tokens)) for _ in range(out_ch)])
            layers.append(make_conv(name, w.reshape(out_ch, in_ch, kh, kw), b, stride, pad))
        elif kind == "relu":
            layers.append(ReLU(name))
        elif kind == "maxpool":
            layers.append(MaxPool(name, int(next(tokens)), int(next(tokens))))
        else:
            raise NetworkError(f"unknown layer kind {kind!r}")
    return NetworkSpec(layers)


# -- forward / backward ---------------------------------------------------

@dataclass
class FeatureStack:
    """Feature maps for every executed layer, plus what backward needs.

    ``maps[name]`` is the output of that layer. ``inputs[i]`` is the input to
    layer ``i``. Pool argmaxes are cached for a single backward pass.
    """

    maps: dict
    inputs: list
    image_shape: tuple
    up_to: str
    argmax: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.maps[name]

    def __contains__(self, name):
        return name in self.maps


def image_to_chw(image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise NetworkError(f"image must be (H, W, C), got shape {image.shape}")
    return np.ascontiguousarray(image.transpose(2, 0, 1))


def forward(net, image, up_to=None):
    """Run ``net`` on ``image`` through layer ``up_to`` (default: last layer)."""
    stop = len(net.layers) - 1 if up_to is None else net.index(up_to)
    x = image_to_chw(image)
    if not np.all(np.isfinite(x)):
        raise NetworkError("image has non-finite values")
    if net.in_channels is not None and x.shape[0] != net.in_channels:
        raise NetworkError(f"image has {x.shape[0]} channels, network expects {net.in_channels}")
    stack = FeatureStack({}, [], tuple(np.shape(image)), net.layers[stop].name)
    for layer in net.layers[: stop + 1]:
        stack.inputs.append(x)
        _, h, w = x.shape
        if isinstance(layer, Conv):
            if h + 2 * layer.pad < layer.kernel_h or w + 2 * layer.pad < layer.kernel_w:
                raise NetworkError(f"{layer.name}: input {h}x{w} smaller than kernel")
            x = kernels.conv2d_forward(x, layer.weights, layer.bias, layer.stride, layer.pad)
        elif isinstance(layer, ReLU):
            x = np.maximum(x, 0.0)
        else:
            if h < layer.kernel or w < layer.kernel:
                raise NetworkError(f"{layer.name}: input {h}x{w} smaller than pool window")
            x, stack.argmax[layer.name] = kernels.maxpool_forward(x, layer.kernel, layer.stride)
        stack.maps[layer.name] = x
    return stack


def backward_to_image(net, stack, layer, grad_at_layer):
    """Gradient w.r.t. the input image given d/d(output of ``layer``)."""
    if layer not in stack.maps:
        raise NetworkError(f"layer {layer!r} was not executed in this feature stack")
    idx = net.index(layer)
    if len(stack.inputs) <= idx or net.layers[idx].name != layer:
        raise NetworkError("feature stack does not belong to this network")
    g = np.asarray(grad_at_layer, dtype=np.float64)
    if g.shape != stack.maps[layer].shape:
        raise NetworkError(f"gradient shape {g.shape} != feature shape {stack.maps[layer].shape}")
    for i in range(idx, -1, -1):
        lay = net.layers[i]
        x_in = stack.inputs[i]
        if isinstance(lay, Conv):
            g = kernels.conv2d_backward_input(g, lay.weights, x_in.shape, lay.stride, lay.pad)
        elif isinstance(lay, ReLU):
            g = np.where(x_in > 0, g, 0.0)
        else:
            g = kernels.maxpool_backward(g, stack.argmax[lay.name], x_in.shape)
    return np.ascontiguousarray(g.transpose(1, 2, 0))
