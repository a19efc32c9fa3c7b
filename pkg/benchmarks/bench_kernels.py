"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Prints best-of-``repeat`` wall times per kernel and the speed-up. Inputs are
fixed by seed, and both backends get identical arrays.
"""
import argparse
import timeit

import numpy as np

from qrgmm import _pykernels as py

try:
    from qrgmm import _ckernels as cy
except ImportError:
    cy = None


def cases(quick):
    rng = np.random.default_rng(0)
    n = 2000 if quick else 10000
    X = np.column_stack([np.ones(n), rng.uniform(0, 10, size=(n, 3))])
    y = X @ [5, 1, 2, 0.5] + (1 + 0.1 * X[:, 1]) * rng.normal(size=n)
    v = np.sort(rng.normal(size=299))
    u = rng.uniform(size=100000)
    V = np.sort(rng.normal(size=(20000, 99)), axis=1)
    uu = rng.uniform(size=20000)
    a = np.sort(rng.normal(size=100000))
    b = np.sort(rng.normal(size=70000))
    return [
        (f"qr_ipm n={n} p=4 tau=0.3", lambda k: k.qr_ipm(X, y, 0.3)),
        ("interp_nodes m=300 K=1e5", lambda k: k.interp_nodes(v, u)),
        ("interp_rows 2e4 x 99", lambda k: k.interp_rows(V, uu)),
        ("ks_sorted 1e5 vs 7e4", lambda k: k.ks_sorted(a, b)),
        ("wasserstein_sorted 1e5 vs 7e4", lambda k: k.wasserstein_sorted(a, b)),
    ]


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller solver problem")
    args = ap.parse_args(argv)
    print(f"{'kernel':34s} {'numpy ms':>10s} {'cython ms':>10s} {'speed-up':>9s}")
    for name, call in cases(args.quick):
        tp = best_time(lambda: call(py), args.repeat)
        if cy is None:
            print(f"{name:34s} {1e3 * tp:10.2f} {'n/a':>10s} {'':>9s}")
            continue
        tc = best_time(lambda: call(cy), args.repeat)
        print(f"{name:34s} {1e3 * tp:10.2f} {1e3 * tc:10.2f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
