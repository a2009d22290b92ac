"""Time the compiled and numpy point-cloud kernels on desk-sized inputs.

    python benchmarks/bench_kernels.py [--points 4096] [--repeat 3]

Also checks that both backends return identical results on each input.
"""
import argparse
import time

import numpy as np

from vffr import pcops
from vffr.pcops import EvgParams


def tube_cloud(n, seed=0):
    """Noisy points on a bent tube, roughly what a lofted vessel looks like."""
    rng = np.random.default_rng(seed)
    s = rng.uniform(0, 1, n)
    th = rng.uniform(0, 2 * np.pi, n)
    axis = np.column_stack([s - 0.5, 0.2 * np.sin(3 * s), 0.1 * np.cos(2 * s)])
    r = 0.02
    return axis + r * np.column_stack([np.zeros(n), np.cos(th), np.sin(th)])


def cases(pts):
    m = len(pts) // 4
    centers = pts[pcops.farthest_point_sampling(pts, m, 0)]
    return {
        "fps": lambda: pcops.farthest_point_sampling(pts, m, 0),
        "ball_query": lambda: pcops.ball_query(pts, centers, 0.04, 32).indices,
        "knn_k16": lambda: pcops.knn(pts, centers, 16)[0],
        "evg_query": lambda: pcops.evg_query(pts, centers, EvgParams(64, 0.002, 0.08, 64)).indices,
        "interpolate": lambda: pcops.three_nn_interpolate(centers, np.ones((m, 8)), pts),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    pts = tube_cloud(args.points)
    backends = pcops.available_backends()
    results = {}
    for b in backends:
        pcops.set_backend(b)
        results[b] = {name: best_of(fn, args.repeat) for name, fn in cases(pts).items()}
    names = list(results[backends[0]])
    print(f"{args.points} points, best of {args.repeat}")
    print(f"{'kernel':<12}" + "".join(f"{b + ' (ms)':>16}" for b in backends)
          + ("   speedup  same" if len(backends) == 2 else ""))
    for name in names:
        row = f"{name:<12}" + "".join(f"{1e3 * results[b][name][0]:>16.2f}" for b in backends)
        if len(backends) == 2:
            (tc, oc), (tp, op) = results["cython"][name], results["python"][name]
            row += f"{tp / tc:>10.1f}x  {np.array_equal(oc, op) or np.allclose(oc, op, rtol=1e-12)}"
        print(row)


if __name__ == "__main__":
    main()
