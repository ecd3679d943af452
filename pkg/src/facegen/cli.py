"""Command-line interface: ``facegen generate | sweep-layers | sweep-tv | ...``."""

import argparse
import csv
import logging
import sys
from pathlib import Path

from facegen import dataio, desk
from facegen.generator import GenerationDiverged, OptimizerConfig, layer_sweep, run_generation, tv_sweep
from facegen.guided import CorpusEntry, guided_from_images, parse_query, select_guided_set
from facegen.losses import ObjectiveConfig
from facegen.masks import build_mask, load_attribute_map, write_pgm
from facegen.network import ARCHS, dump_text, load_network, make_seeded_network, save_network

log = logging.getLogger("facegen")


def _on_off(value):
    v = value.lower()
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return v == "on"


def _csv_list(value):
    return [v.strip() for v in value.split(",") if v.strip()]


def _net_arg(spec):
    """Path to a PGN1 file, or ``seeded:<arch>:<seed>``."""
    if spec.startswith("seeded:"):
        _, arch, seed = spec.split(":")
        return make_seeded_network(int(seed), arch)
    return load_network(spec)


def _add_run_args(p):
    p.add_argument("--net", required=True, help="PGN1 weight file or seeded:<arch>:<seed>")
    p.add_argument("--images", help="directory of corpus images named <id>.<ext>")
    p.add_argument("--landmarks", help="landmarks CSV: id,x1,y1,...,x68,y68")
    p.add_argument("--attributes", help="attribute CSV: id,<attr1>,...")
    p.add_argument("--exclude", help="file listing corpus ids to leave out")
    p.add_argument("--augment-flip", action="store_true", help="add horizontally mirrored entries")
    p.add_argument("--size", type=int, nargs=2, metavar=("H", "W"), help="resize all images")
    p.add_argument("--ref", required=True, help="corpus id or image path")
    p.add_argument("--attrs", default="", help='attribute query, e.g. "with-glasses>0, smiling"')
    p.add_argument("--guided", nargs="+", help="explicit guided image paths (skips retrieval)")
    p.add_argument("--guided-weights", type=float, nargs="+")
    p.add_argument("--layer", required=True)
    p.add_argument("--content-layer", help="layer for the ranking content distance (default: --layer)")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--tv-beta", type=float, default=2.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--weights", choices=("uniform", "inverse-distance"), default="uniform")
    p.add_argument("--include-ref", action="store_true", help="allow the reference in its own guided set")
    p.add_argument("--mask", type=_on_off, default=False, metavar="on|off")
    p.add_argument("--margin", type=float, help="mask margin in pixels (default scales with size)")
    p.add_argument("--attr-map", help="attribute -> landmark indices CSV")
    p.add_argument("--premask-guided", action="store_true")
    p.add_argument("--color", type=_on_off, default=False, metavar="on|off")
    p.add_argument("--init", choices=("blank-gray", "reference-copy", "seeded-noise"), default="blank-gray")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--window", type=int, help="convergence window (default: min(10, --max-iters))")
    p.add_argument("--rel-tol", type=float, default=1e-4)
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--no-clamp", action="store_true")
    p.add_argument("--out", required=True)


def _resolve(args):
    net = _net_arg(args.net)
    corpus = []
    if args.attributes:
        if not (args.images and args.landmarks):
            raise SystemExit("--attributes needs --images and --landmarks")
        corpus = dataio.load_corpus(args.images, args.landmarks, args.attributes,
                                    args.exclude, args.augment_flip, args.size)
    by_id = {e.id: e for e in corpus}
    if args.ref in by_id:
        ref = by_id[args.ref]
    else:
        path = Path(args.ref)
        if not path.is_file():
            raise SystemExit(f"--ref {args.ref!r} is neither a corpus id nor an image file")
        img = dataio.read_image(path, args.size)
        lm = None
        if args.landmarks:
            lm = dataio.read_landmarks_csv(args.landmarks).get(path.stem)
        ref = CorpusEntry(path.stem, img, lm, {})

    if args.guided:
        images = [dataio.read_image(p, args.size or ref.image.shape[:2]) for p in args.guided]
        guided = guided_from_images(images, args.guided_weights, [Path(p).stem for p in args.guided])
    else:
        if not corpus:
            raise SystemExit("corpus retrieval needs --images/--landmarks/--attributes (or use --guided)")
        if ref.landmarks is None:
            raise SystemExit("reference landmarks are required for ranking")
        guided = select_guided_set(corpus, args.attrs, ref, args.k, args.alpha, args.weights,
                                   net, args.content_layer or args.layer, args.include_ref)

    mask = None
    if args.mask:
        if ref.landmarks is None:
            raise SystemExit("--mask on needs reference landmarks")
        names = [name for name, op, _ in parse_query(args.attrs) if op == ">"]
        amap = load_attribute_map(args.attr_map)
        mask = build_mask(names, ref.landmarks, amap, args.margin, ref.image.shape[:2])

    obj = ObjectiveConfig(args.layer, args.lam, args.gamma, args.tv_beta,
                          premask_guided=args.premask_guided)
    if args.window is None:
        args.window = min(10, args.max_iters)
    opt = OptimizerConfig(args.lr, args.max_iters, args.window, args.rel_tol, args.init, args.seed,
                          not args.no_clamp, args.momentum)
    return net, ref, guided, mask, obj, opt


def _params(args, guided):
    params = {k: v for k, v in vars(args).items() if k != "func"}
    params["guided_ids"] = ",".join(guided.ids)
    params["guided_weights"] = ",".join(repr(float(w)) for w in guided.weights)
    return params


def _write_run(result, out, mask=None):
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_image(result.image, out / "generated.png")
    dataio.write_image(result.raw_image, out / "raw.png")
    dataio.write_trace_csv(result.trace, out / "trace.csv")
    if mask is not None:
        write_pgm(mask, out / "mask.pgm")
    if result.color_transform is not None:
        result.color_transform.save(out / "color.json")


def cmd_generate(args):
    net, ref, guided, mask, obj, opt = _resolve(args)
    result = run_generation(net, obj, opt, guided, ref, mask, args.color)
    out = Path(args.out)
    _write_run(result, out, mask)
    params = _params(args, guided)
    params.update(steps=result.steps, converged=result.converged)
    dataio.write_config(params, out / "config.resolved")
    t0, t1 = result.trace[0], result.trace[-1]
    print(f"{result.steps} steps, converged={result.converged}, "
          f"total {t0.total:.6g} -> {t1.total:.6g}, sqerr {t1.sqerr:.6g}")
    return 0


def _write_sweep(rows, out, key):
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([key, "sqerr", "tv", "steps", "converged"])
        for r in rows:
            w.writerow([r.value, repr(r.sqerr), repr(r.tv), r.result.steps, r.result.converged])


def cmd_sweep_layers(args):
    net, ref, guided, mask, obj, opt = _resolve(args)
    rows = layer_sweep(net, obj, opt, guided, ref, args.layers, mask, args.color, args.workers)
    out = Path(args.out)
    for r in rows:
        _write_run(r.result, out / str(r.value), mask)
    _write_sweep(rows, out, "layer")
    dataio.write_config(_params(args, guided), out / "config.resolved")
    for r in rows:
        print(f"{r.value}\t{r.sqerr:.6g}")
    return 0


def cmd_sweep_tv(args):
    net, ref, guided, mask, obj, opt = _resolve(args)
    rows = tv_sweep(net, obj, opt, guided, ref, args.gammas, mask, args.color, args.workers)
    out = Path(args.out)
    for r in rows:
        _write_run(r.result, out / f"gamma_{r.value:g}", mask)
    _write_sweep(rows, out, "gamma")
    dataio.write_config(_params(args, guided), out / "config.resolved")
    for r in rows:
        print(f"{r.value:g}\tsqerr={r.sqerr:.6g}\ttv={r.tv:.6g}")
    return 0


def cmd_make_net(args):
    net = make_seeded_network(args.seed, args.arch)
    save_network(net, args.out)
    print(f"wrote {args.arch} (seed {args.seed}): {', '.join(net.layer_names)}")
    return 0


def cmd_dump_net(args):
    dump_text(load_network(args.net), args.out)
    return 0


def cmd_make_desk_data(args):
    corpus = desk.make_corpus(args.seed, args.n, args.size)
    out = dataio.save_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} entries to {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="facegen", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate one image")
    _add_run_args(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sweep-layers", help="one run per feature layer")
    _add_run_args(p)
    p.add_argument("--layers", type=_csv_list, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep_layers)

    p = sub.add_parser("sweep-tv", help="one run per TV weight")
    _add_run_args(p)
    p.add_argument("--gammas", type=lambda s: [float(v) for v in _csv_list(s)], required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep_tv)

    p = sub.add_parser("make-net", help="write a seeded network weight file")
    p.add_argument("--arch", choices=sorted(ARCHS), default="tiny-a")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_net)

    p = sub.add_parser("dump-net", help="text dump of a weight file, one value per line")
    p.add_argument("--net", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_net)

    p = sub.add_parser("make-desk-data", help="write a synthetic corpus for trying the CLI")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=24)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_desk_data)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, GenerationDiverged) as exc:
        # library errors (bad inputs, shortfalls, divergence) end with a message, not a traceback
        print(f"facegen: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
