import csv

import numpy as np
import pytest

from facegen import dataio
from facegen.cli import main
from facegen.desk import make_corpus
from facegen.masks import read_pgm
from facegen.network import load_network, load_text


@pytest.fixture(scope="module")
def desk_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    assert main(["make-desk-data", "--n", "24", "--size", "16", "--out", str(out / "data")]) == 0
    assert main(["make-net", "--arch", "tiny-a", "--seed", "42", "--out", str(out / "net.pgn")]) == 0
    return out


def run_args(d, out, *extra):
    data = d / "data"
    return ["--net", str(d / "net.pgn"), "--images", str(data / "images"),
            "--landmarks", str(data / "landmarks.csv"), "--attributes", str(data / "attributes.csv"),
            "--ref", "face-000", "--attrs", "with-glasses>0", "--k", "2", "--layer", "conv2_1",
            "--lambda", "0.5", "--lr", "20", "--max-iters", "15", "--out", str(out), *extra]


def test_mirror_permutation():
    m = dataio.MIRROR_68
    assert sorted(m) == list(range(68))
    np.testing.assert_array_equal(m[m], np.arange(68))


def test_flip_entry():
    e = make_corpus(0, 1, 16)[0]
    f = dataio.flip_entry(e)
    assert f.id == e.id + "_flip"
    np.testing.assert_array_equal(f.image, e.image[:, ::-1])
    # left jaw end (1) maps to the mirrored right jaw end (17)
    assert f.landmarks[0, 0] == pytest.approx(15 - e.landmarks[16, 0])
    back = dataio.flip_entry(f)
    np.testing.assert_allclose(back.landmarks, e.landmarks)


def test_csv_roundtrips(tmp_path):
    corpus = make_corpus(1, 4, 16)
    dataio.save_corpus(corpus, tmp_path)
    back = dataio.load_corpus(tmp_path / "images", tmp_path / "landmarks.csv", tmp_path / "attributes.csv")
    assert [e.id for e in back] == [e.id for e in corpus]
    for a, b in zip(corpus, back):
        np.testing.assert_array_equal(a.landmarks, b.landmarks)
        assert a.attributes == b.attributes
        assert np.max(np.abs(a.image - b.image)) <= 0.5 / 255 + 1e-12
    (tmp_path / "skip.txt").write_text("face-001\n# comment\n")
    few = dataio.load_corpus(tmp_path / "images", tmp_path / "landmarks.csv", tmp_path / "attributes.csv",
                             exclude=tmp_path / "skip.txt", augment_flip=True)
    assert len(few) == 6 and "face-001" not in {e.id for e in few}


def test_bad_landmarks_row(tmp_path):
    (tmp_path / "lm.csv").write_text("a,1,2,3\n")
    with pytest.raises(ValueError, match="expected 136"):
        dataio.read_landmarks_csv(tmp_path / "lm.csv")


def test_ppm_roundtrip(tmp_path):
    img = np.random.default_rng(0).uniform(size=(5, 4, 3))
    dataio.write_image(img, tmp_path / "x.ppm")
    np.testing.assert_allclose(dataio.read_image(tmp_path / "x.ppm"), np.round(img * 255) / 255)


def test_cli_generate(desk_dir):
    out = desk_dir / "gen"
    assert main(["generate", *run_args(desk_dir, out, "--mask", "on", "--color", "on", "--margin", "1")]) == 0
    for name in ("generated.png", "raw.png", "trace.csv", "mask.pgm", "color.json", "config.resolved"):
        assert (out / name).is_file(), name
    trace = dataio.read_trace_csv(out / "trace.csv")
    assert trace[0][0] == 0 and len(trace) >= 2
    assert read_pgm(out / "mask.pgm").shape == (16, 16, 3)
    cfg = (out / "config.resolved").read_text()
    assert "guided_ids = " in cfg and "layer = conv2_1" in cfg


def test_cli_explicit_guided(desk_dir, tmp_path):
    imgs = desk_dir / "data" / "images"
    args = ["generate", "--net", "seeded:tiny-a:42", "--ref", str(imgs / "face-000.png"),
            "--guided", str(imgs / "face-003.png"), str(imgs / "face-004.png"),
            "--guided-weights", "0.25", "0.75", "--layer", "relu2_1", "--max-iters", "5", "--out", str(tmp_path)]
    assert main(args) == 0
    assert "guided_weights = 0.25,0.75" in (tmp_path / "config.resolved").read_text()


def test_cli_sweeps(desk_dir):
    out = desk_dir / "layers"
    assert main(["sweep-layers", *run_args(desk_dir, out), "--layers", "conv1_1,conv2_1"]) == 0
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert [r["layer"] for r in rows] == ["conv1_1", "conv2_1"]
    assert (out / "conv1_1" / "trace.csv").is_file()
    out = desk_dir / "tv"
    assert main(["sweep-tv", *run_args(desk_dir, out), "--gammas", "0,0.001"]) == 0
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert [float(r["gamma"]) for r in rows] == [0.0, 0.001]


def test_cli_net_tools(desk_dir, tmp_path):
    assert main(["dump-net", "--net", str(desk_dir / "net.pgn"), "--out", str(tmp_path / "n.txt")]) == 0
    a, b = load_network(desk_dir / "net.pgn"), load_text(tmp_path / "n.txt")
    np.testing.assert_array_equal(a.layers[0].weights, b.layers[0].weights)


def test_cli_errors(desk_dir, tmp_path):
    with pytest.raises(SystemExit):
        main(["generate", "--net", "seeded:tiny-a:1", "--ref", "nope", "--layer", "conv1_1", "--out", str(tmp_path)])
    with pytest.raises(SystemExit):
        main(["generate", *run_args(desk_dir, tmp_path)[:-2], "--mask", "maybe", "--out", str(tmp_path)])
