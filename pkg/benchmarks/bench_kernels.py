"""Compiled vs numpy kernels: conv forward/backward, max-pool, one objective step.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from facegen.kernels import available_backends, get_backend

CASES = [("conv fwd 3->8 32x32", 3, 8, 32), ("conv fwd 8->16 64x64", 8, 16, 64)]


def bench_kernels(name, repeat):
    k = get_backend(name)
    rng = np.random.default_rng(0)
    rows = []
    for label, cin, cout, size in CASES:
        x = rng.normal(size=(cin, size, size))
        w = rng.normal(size=(cout, cin, 3, 3))
        b = np.zeros(cout)
        y = k.conv2d_forward(x, w, b, 1, 1)
        rows.append((label, min(timeit.repeat(lambda: k.conv2d_forward(x, w, b, 1, 1), number=5, repeat=repeat)) / 5))
        rows.append((label.replace("fwd", "bwd"),
                     min(timeit.repeat(lambda: k.conv2d_backward_input(y, w, x.shape, 1, 1),
                                       number=5, repeat=repeat)) / 5))
        _, arg = k.maxpool_forward(y, 2, 2)
        rows.append((f"maxpool 2x2 {cout}x{size}x{size}",
                     min(timeit.repeat(lambda: k.maxpool_forward(y, 2, 2), number=5, repeat=repeat)) / 5))
    return rows


def bench_objective(repeat):
    # backend is fixed at import, so this part runs in the selected process
    from facegen.desk import desk_setup
    from facegen.losses import Objective
    s = desk_setup()
    obj = Objective(s.net, s.obj_cfg, s.guided, s.ref.image)
    x = np.full(s.ref.image.shape, 0.5)
    return min(timeit.repeat(lambda: obj.value_and_grad(x), number=5, repeat=repeat)) / 5


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--objective-only", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args()
    if args.objective_only:
        print(repr(bench_objective(args.repeat)))
        return
    backends = available_backends()
    results = {b: dict(bench_kernels(b, args.repeat)) for b in backends}
    for b in backends:
        env = dict(os.environ, FACEGEN_BACKEND=b)
        out = subprocess.run([sys.executable, __file__, "--objective-only", "--repeat", str(args.repeat)],
                             env=env, capture_output=True, text=True, check=True)
        results[b]["desk objective value+grad 32x32"] = float(out.stdout.strip())
    labels = list(results[backends[0]])
    print(f"{'case':36s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label in labels:
        t = [results[b][label] for b in backends]
        line = f"{label:36s}" + "".join(f"{v * 1e3:10.3f}ms" for v in t)
        if len(t) > 1:
            line += f"{t[1] / t[0]:11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
