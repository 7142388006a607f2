"""Compare the compiled and numpy MLP kernels on training-sized batches.

Run: python benchmarks/bench_kernels.py
"""
import time

import numpy as np

from hjsolve._backend import get_kernels

CASES = [
    # (label, input dim, hidden widths, batch size)
    ("eikonal 2d [20], stencil batch", 2, (20,), 5 * 60 + 20),
    ("riccati 2d [50,50], stencil batch", 3, (50, 50), 6 * 100 + 50),
    ("car block [60,60,60], stencil batch", 2, (60, 60, 60), 5 * 800 + 100),
    ("tiny [20], single point (rollout)", 3, (20,), 4),
]


def make_case(d_in, hidden, n, seed=0):
    rng = np.random.default_rng(seed)
    sizes = (d_in,) + hidden + (1,)
    W = [rng.standard_normal((b, a)) / np.sqrt(a) for a, b in zip(sizes[:-1], sizes[1:])]
    b = [rng.standard_normal(s) * 0.1 for s in sizes[1:]]
    X = rng.standard_normal((n, d_in))
    up = rng.standard_normal(n)
    return W, b, X, up


def time_kernels(kern, W, b, X, up, repeats):
    gW = [np.zeros_like(w) for w in W]
    gb = [np.zeros_like(x) for x in b]
    t0 = time.perf_counter()
    for _ in range(repeats):
        _, acts = kern.mlp_forward(X, W, b)
        kern.mlp_backward(W, acts, up, gW, gb)
    return (time.perf_counter() - t0) / repeats


def main():
    py = get_kernels("python")
    try:
        cy = get_kernels("cython")
    except ImportError:
        print("compiled kernels not built; only the numpy path is available")
        cy = None
    print(f"{'case':40s} {'numpy [us]':>12s} {'compiled [us]':>14s} {'speedup':>8s}")
    for label, d_in, hidden, n in CASES:
        W, b, X, up = make_case(d_in, hidden, n)
        repeats = max(20, int(2e7 / (n * sum(hidden) ** 2 + 1)))
        repeats = min(repeats, 20000)
        t_py = time_kernels(py, W, b, X, up, repeats)
        if cy is None:
            print(f"{label:40s} {1e6 * t_py:12.1f}")
            continue
        t_cy = time_kernels(cy, W, b, X, up, repeats)
        print(f"{label:40s} {1e6 * t_py:12.1f} {1e6 * t_cy:14.1f} {t_py / t_cy:8.2f}")


if __name__ == "__main__":
    main()
