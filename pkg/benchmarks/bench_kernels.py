"""Time the numba kernels against their numpy twins on realistic inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]

The first numba call per kernel is reported separately as compile time.
"""

import argparse
import time

import numpy as np

from gamma_forge import _kernels
from gamma_forge.group_model import build_ball, preset


def _inputs():
    ball = build_ball(preset("free2"), 6)
    nbr = np.ascontiguousarray(ball.nbr, dtype=np.int32)
    dense = ball.dense().astype(np.int32)
    core = ball.core(3)
    dword = np.ascontiguousarray(dense[np.ix_(core, core)])
    dhat = dword.astype(np.float64)
    pos = {int(v): i for i, v in enumerate(core)}
    edges = np.array([(pos[a], pos[b]) for a, b in ball.edges if a in pos and b in pos], dtype=np.int32)
    edges = np.concatenate([edges, edges[:, ::-1]])
    safe = np.ones(dword.shape, dtype=np.bool_)
    rng = np.random.default_rng(0)
    a = rng.normal(size=(120, 120))
    # triangles e, a^k, b^k with their distinguished sides
    paths = np.zeros((20, 3, 8), dtype=np.int32)
    lengths = np.zeros((20, 3), dtype=np.int32)
    for k in range(20):
        n = 1 + k % 3
        sides = [
            [ball.element("a" * i) if i else 0 for i in range(n + 1)],
            [ball.element("b" * i) if i else 0 for i in range(n + 1)],
            [ball.element("a" * i) if i else 0 for i in range(n, 0, -1)]
            + [ball.element("b" * i) if i else 0 for i in range(n + 1)],
        ]
        for j, p in enumerate(sides):
            paths[k, j, : len(p)] = p
            lengths[k, j] = len(p)
    return {
        "bfs_row": (nbr, 0),
        "all_pairs": (nbr,),
        "rho_scan": (dhat, dword, edges, safe, int(dword.max())),
        "triangle_thinness": (dense, paths, lengths),
        "sym_eigvals": (a @ a.T, 1e-15, 100),
    }


def _time(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    inputs = _inputs()
    if _kernels.NUMBA_KERNELS is None:
        print("numba is not importable; only numpy timings are shown")
    print(f"{'kernel':<20}{'numpy s':>12}{'numba s':>12}{'compile s':>12}{'speedup':>10}")
    for name, kargs in inputs.items():
        t_np = _time(_kernels.NUMPY_KERNELS[name], kargs, args.repeat)
        if _kernels.NUMBA_KERNELS is None:
            print(f"{name:<20}{t_np:>12.5f}")
            continue
        fn = _kernels.NUMBA_KERNELS[name]
        t0 = time.perf_counter()
        fn(*kargs)
        compile_s = time.perf_counter() - t0
        t_nb = _time(fn, kargs, args.repeat)
        print(f"{name:<20}{t_np:>12.5f}{t_nb:>12.5f}{compile_s:>12.3f}{t_np / t_nb:>10.2f}x")


if __name__ == "__main__":
    main()
