#!/usr/bin/env python3
"""Compare the compiled and pure-numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--series 2000] [--length 72] [--repeat 5]

Prints the best-of-``repeat`` wall time of each kernel per backend, the
speed-up, and the largest relative disagreement between backends.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from trendbreak import _pykernels

try:
    from trendbreak import _ckernels
except ImportError:
    _ckernels = None


def _cases(x, lo, hi, T):
    return {
        "single_fit": lambda k: k.single_fit(x),
        "dual_fit": lambda k: k.dual_fit(x, T),
        "dual_rss_curves": lambda k: k.dual_rss_curves(x, lo, hi),
    }


def _max_rel(a, b):
    a, b = (np.asarray(v, dtype=np.float64) for v in (a, b))
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--series", type=int, default=2000)
    ap.add_argument("--length", type=int, default=72)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    n = args.length
    x = np.cumsum(rng.standard_normal((args.series, n)), axis=1) * 0.1 + 280.0
    lo, hi = 2, n - 2
    T = rng.integers(lo, hi + 1, size=args.series)
    backends = {"numpy": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled backend not built; timing numpy only")

    print(f"{args.series} series of length {n}, best of {args.repeat}")
    print(f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends) + f"{'speed-up':>10}{'max rel diff':>14}")
    for name, fn in _cases(x, lo, hi, T).items():
        times = {b: min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat))
                 for b, k in backends.items()}
        line = f"{name:<16}" + "".join(f"{t:>11.4f}s" for t in times.values())
        if len(backends) == 2:
            ref, fast = fn(_pykernels), fn(_ckernels)
            ref = ref if isinstance(ref, tuple) else (ref,)
            fast = fast if isinstance(fast, tuple) else (fast,)
            diff = max(_max_rel(a, b) for a, b in zip(fast, ref))
            line += f"{times['numpy'] / times['cython']:>9.1f}x{diff:>14.2e}"
        print(line)


if __name__ == "__main__":
    main()
