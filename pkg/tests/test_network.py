import numpy as np
import pytest

from facegen.network import (
    ARCHS, MaxPool, NetworkError, NetworkSpec, ReLU, backward_to_image, dump_text, forward,
    load_network, load_text, make_conv, make_seeded_network, save_network,
)
from oracles import naive_forward


@pytest.mark.parametrize("arch", sorted(ARCHS))
def test_save_load_roundtrip_bit_identical(tmp_path, arch):
    net = make_seeded_network(7, arch)
    p = tmp_path / "n.pgn"
    save_network(net, p)
    back = load_network(p)
    assert back.layer_names == net.layer_names
    for a, b in zip(net.layers, back.layers):
        if hasattr(a, "weights"):
            assert a.weights.tobytes() == b.weights.tobytes()
            assert a.bias.tobytes() == b.bias.tobytes()
            assert (a.stride, a.pad) == (b.stride, b.pad)
    save_network(back, tmp_path / "again.pgn")
    assert (tmp_path / "again.pgn").read_bytes() == p.read_bytes()


def test_text_dump_roundtrip(tmp_path):
    net = make_seeded_network(3, "tiny-b")
    dump_text(net, tmp_path / "n.txt")
    back = load_text(tmp_path / "n.txt")
    for a, b in zip(net.layers, back.layers):
        if hasattr(a, "weights"):
            np.testing.assert_array_equal(a.weights, b.weights)


def test_bad_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_network(tmp_path / "missing.pgn")
    (tmp_path / "bad.pgn").write_bytes(b"XXXX\x00\x00\x00\x00")
    with pytest.raises(NetworkError, match="magic"):
        load_network(tmp_path / "bad.pgn")
    save_network(make_seeded_network(0), tmp_path / "ok.pgn")
    raw = (tmp_path / "ok.pgn").read_bytes()
    (tmp_path / "trunc.pgn").write_bytes(raw[:-3])
    with pytest.raises(NetworkError):
        load_network(tmp_path / "trunc.pgn")
    (tmp_path / "long.pgn").write_bytes(raw + b"\x00")
    with pytest.raises(NetworkError, match="trailing"):
        load_network(tmp_path / "long.pgn")


def test_invalid_networks():
    w = np.ones((2, 3, 3, 3))
    with pytest.raises(NetworkError):
        NetworkSpec([make_conv("c", np.full((2, 3, 3, 3), np.nan), np.zeros(2))])
    with pytest.raises(NetworkError):
        NetworkSpec([make_conv("a", w, np.zeros(2)), make_conv("b", w, np.zeros(2))])
    with pytest.raises(NetworkError):
        make_seeded_network(0, "no-such-arch")


def test_channel_mismatch(net_a):
    with pytest.raises(NetworkError, match="channels"):
        forward(net_a, np.zeros((8, 8, 1)))
    with pytest.raises(NetworkError):
        forward(net_a, np.full((8, 8, 3), np.inf))


def test_seeded_determinism():
    a, b, c = (make_seeded_network(s, "tiny-a") for s in (42, 42, 43))
    assert a.layers[0].weights.tobytes() == b.layers[0].weights.tobytes()
    assert a.layers[0].weights.tobytes() != c.layers[0].weights.tobytes()


def test_fan_in_scale():
    net = make_seeded_network(5, [("conv", 40, 3, 1, 1)])
    std = net.layers[0].weights.std()
    assert abs(std - 1 / np.sqrt(27)) < 0.2 / np.sqrt(27)


def test_identity_conv_and_relu():
    w = np.zeros((3, 3, 1, 1))
    w[[0, 1, 2], [0, 1, 2]] = 1.0
    net = NetworkSpec([make_conv("conv1_1", w, np.zeros(3)), ReLU("relu1_1")])
    img = np.random.default_rng(0).normal(size=(4, 5, 3))
    st = forward(net, img)
    np.testing.assert_array_equal(st["conv1_1"], img.transpose(2, 0, 1))
    assert st["relu1_1"].min() >= 0
    one = forward(net, -np.ones((1, 1, 3)))
    np.testing.assert_array_equal(one["relu1_1"], 0.0)


@pytest.mark.parametrize("arch", sorted(ARCHS))
def test_forward_matches_naive_oracle(arch):
    net = make_seeded_network(11, arch)
    img = np.random.default_rng(1).uniform(size=(12, 12, 3))
    st = forward(net, img)
    ref = naive_forward(net.layers, img)
    for name in net.layer_names:
        np.testing.assert_allclose(st[name], ref[name], atol=1e-12)


def test_directional_derivative(net_a):
    rng = np.random.default_rng(9)
    img = rng.uniform(size=(10, 10, 3))
    layer = "conv2_1"
    st = forward(net_a, img, layer)
    r = rng.normal(size=st[layer].shape)

    def f(x):
        return float(np.sum(forward(net_a, x, layer)[layer] * r))

    g = backward_to_image(net_a, st, layer, r)
    h = 1e-6
    for _ in range(10):
        v = rng.normal(size=img.shape)
        fd = (f(img + h * v) - f(img - h * v)) / (2 * h)
        assert abs(fd - np.sum(g * v)) <= 1e-4 * max(1.0, abs(fd))


def test_backward_linear(net_a):
    rng = np.random.default_rng(2)
    st = forward(net_a, rng.uniform(size=(8, 8, 3)), "relu2_1")
    g1, g2 = rng.normal(size=(2,) + st["relu2_1"].shape)
    lhs = backward_to_image(net_a, st, "relu2_1", 2 * g1 + 3 * g2)
    rhs = 2 * backward_to_image(net_a, st, "relu2_1", g1) + 3 * backward_to_image(net_a, st, "relu2_1", g2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_relu_gate_and_bad_layer():
    w = np.zeros((3, 3, 1, 1))
    w[[0, 1, 2], [0, 1, 2]] = 1.0
    net = NetworkSpec([make_conv("c", w, np.zeros(3)), ReLU("r"), MaxPool("p", 1, 1)])
    img = np.array([[[1.0, -1.0, 2.0]]])
    st = forward(net, img)
    g = backward_to_image(net, st, "p", np.ones((3, 1, 1)))
    np.testing.assert_array_equal(g, [[[1.0, 0.0, 1.0]]])
    with pytest.raises(NetworkError):
        backward_to_image(net, forward(net, img, "c"), "r", np.ones((3, 1, 1)))
