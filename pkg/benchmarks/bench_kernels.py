"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 500] [--repeat 5]

Prints one line per kernel with the best-of-`repeat` wall time for each
backend and the speed-up. Also checks the two backends agree.
"""

import argparse
import timeit

import numpy as np

from crashprint._core import _fallback

try:
    from crashprint._core import _kernels
except ImportError:
    _kernels = None


def cases(n, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 16))
    d2 = ((x[:, None] - x[None]) ** 2).sum(-1)
    p = rng.uniform(size=(n, n))
    p = p + p.T
    np.fill_diagonal(p, 0.0)
    p /= p.sum()
    y = rng.normal(size=(n, 2))
    labels = rng.integers(0, 8, n).astype(np.int64)
    perplexity = min(30.0, n / 4)
    return {
        "binary_search_perplexity": lambda m: m.binary_search_perplexity(d2, perplexity),
        "tsne_gradient": lambda m: m.tsne_gradient(p, y),
        "cluster_distance_sums": lambda m: m.cluster_distance_sums(x, labels, 8),
    }


def first(out):
    return out[0] if isinstance(out, tuple) else out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return
    print(f"n={args.n}, best of {args.repeat}")
    print(f"{'kernel':<26} {'cython s':>10} {'numpy s':>10} {'speed-up':>9} {'max |diff|':>11}")
    for name, fn in cases(args.n).items():
        fast = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat))
        slow = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat))
        diff = float(np.max(np.abs(first(fn(_kernels)) - first(fn(_fallback)))))
        print(f"{name:<26} {fast:>10.4f} {slow:>10.4f} {slow / fast:>8.1f}x {diff:>11.2e}")


if __name__ == "__main__":
    main()
