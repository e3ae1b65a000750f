"""Compare the numba and numpy backends of the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--windows 5 9 13]

For each window radius a fixed set of GAF samples is drawn; each backend then
runs Horner evaluation on the contour nodes and the full Aberth root solve.
The script also reports the largest root discrepancy between the backends.
"""
import argparse
import time

import numpy as np

from mdlab import _kernels, gaf
from mdlab.rng import SeededStream


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def bench(windows, repeat, samples):
    rows = []
    for Rw in windows:
        gs = [gaf.sample_gaf(Rw, SeededStream(0, 0, (i,))) for i in range(samples)]
        nodes = (Rw / gs[0].s) * np.exp(2j * np.pi * np.arange(4096) / 4096)
        roots = {}
        for name in ("numba", "numpy"):
            k = _kernels.kernels(name)
            tol = 4 * np.finfo(float).eps
            starts = [gaf._newton_polygon_start(g.b) for g in gs]
            k["aberth"](gs[0].b, starts[0], 200, tol)  # warm-up (JIT compile)
            k["horner"](gs[0].b, nodes)
            t_h = _time(lambda: [k["horner"](g.b, nodes) for g in gs], repeat) / samples
            t_a = _time(lambda: [k["aberth"](g.b, z0, 200, tol) for g, z0 in zip(gs, starts)], repeat) / samples
            roots[name] = [k["aberth"](g.b, z0, 200, tol)[0] * g.s for g, z0 in zip(gs, starts)]
            rows.append((Rw, gs[0].N, name, t_h, t_a))
        # Hausdorff distance between the two root sets, sample by sample
        diff = max(max(np.abs(a[:, None] - b[None, :]).min(axis=1).max(),
                       np.abs(a[:, None] - b[None, :]).min(axis=0).max())
                   for a, b in zip(roots["numba"], roots["numpy"]))
        rows.append((Rw, gs[0].N, "max |root diff|", diff, None))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--windows", type=float, nargs="+", default=[5, 9, 13])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--samples", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"{'R_w':>5} {'N':>5} {'backend':>16} {'horner [s]':>12} {'aberth [s]':>12}")
    for Rw, N, name, a, b in bench(args.windows, args.repeat, args.samples):
        if b is None:
            print(f"{Rw:5g} {N:5d} {name:>16} {a:12.3g}")
        else:
            print(f"{Rw:5g} {N:5d} {name:>16} {a:12.3e} {b:12.3e}")


if __name__ == "__main__":
    main()
