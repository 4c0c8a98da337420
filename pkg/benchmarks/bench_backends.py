"""Compiled vs pure-Python kernels on the same random match graphs.

    python3 benchmarks/bench_backends.py [--out backends.csv]

Both backends must return identical results; the script checks that before
timing and prints per-kernel medians and the speedup.
"""

import argparse
import csv
import statistics
import sys

import numpy as np

from xviewgeo import _backend
from xviewgeo.bench import _time_call, random_graph
from xviewgeo.domset import SolverConfig, solve
from xviewgeo.gmcp import solve_exact


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out")
    ap.add_argument("--trials", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if "compiled" not in _backend.available():
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1

    shapes = [("domset", 4, 10), ("domset", 5, 40), ("domset", 6, 100),
              ("gmcp_exact", 4, 6), ("gmcp_exact", 4, 10), ("gmcp_exact", 5, 8)]
    cfg = SolverConfig()
    rows = []
    for kernel, nc, k in shapes:
        rng = np.random.default_rng([args.seed, nc, k])
        graphs = [random_graph(nc, k, rng) for _ in range(args.trials)]
        times = {}
        for name in ("compiled", "python"):
            if kernel == "domset":
                outs = [solve(g.A, cfg, backend=name) for g in graphs]
                key = [(o.support, o.iterations) for o in outs]
                fn = [lambda g=g, name=name: solve(g.A, cfg, backend=name) for g in graphs]
            else:
                outs = [solve_exact(g, backend=name) for g in graphs]
                key = [o.selection for o in outs]
                fn = [lambda g=g, name=name: solve_exact(g, backend=name) for g in graphs]
            times[name] = (key, statistics.median(_time_call(f, 0.05) * 1e3 for f in fn))
        if times["compiled"][0] != times["python"][0]:
            print(f"backends disagree on {kernel} nc={nc} k={k}", file=sys.stderr)
            return 2
        c_ms, p_ms = times["compiled"][1], times["python"][1]
        rows.append((kernel, nc, k, nc * k, c_ms, p_ms, p_ms / c_ms))
        print(f"{kernel:10s} nc={nc} k={k:3d}  compiled {c_ms:9.3f} ms  python {p_ms:9.3f} ms"
              f"  speedup {p_ms / c_ms:6.1f}x")

    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kernel", "nc", "k", "n", "compiled_ms", "python_ms", "speedup"])
            for r in rows:
                w.writerow([*r[:4], f"{r[4]:.4f}", f"{r[5]:.4f}", f"{r[6]:.2f}"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
