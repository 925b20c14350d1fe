"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The library picks a backend at import time; set BLOWUPFORGE_DISABLE_JIT=1
to force numpy.  Here both variants are called directly so one run shows
both columns, and each pair is checked for agreement first.
"""

import argparse
import time

import numpy as np

from blowupforge import kernels as K


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    t = np.sort(rng.uniform(-0.1, 1.1, 200_000))
    cdf = (t, 0.0, 1.0, 1 / 3, 0.5, 0.5, 40)
    yield "cantor_cdf 2e5 pts", K.cantor_cdf_numba, K.cantor_cdf_numpy, cdf

    pts = rng.uniform(0, 1, (5_000, 2))
    w = rng.uniform(0, 1, 5_000)
    lo = rng.uniform(0, 0.9, (2_000, 2))
    hi = lo + 0.1
    yield "atom_box 5e3 atoms x 2e3 boxes", K.atom_box_numba, K.atom_box_numpy, (pts, w, lo, hi, K.CHARGE)

    x = rng.uniform(0, 1, (20_000, 2))
    c = rng.uniform(0, 1, (500, 2))
    r = np.full(500, 0.02)
    e = np.full(500, 0.1)
    a = rng.normal(size=(500, 2))
    yield "bump_eval 2e4 pts x 500 terms", K.bump_numba, K.bump_numpy, (x, c, r, e, a)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        print("numba is not installed; only the numpy column is meaningful")
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for name, jit_fn, np_fn, args_ in cases(rng):
        a, b = jit_fn(*args_), np_fn(*args_)
        a, b = (a if isinstance(a, tuple) else (a,)), (b if isinstance(b, tuple) else (b,))
        for u, v in zip(a, b):
            assert np.allclose(u, v, rtol=1e-12, atol=1e-12), name
        tj = best_of(lambda: jit_fn(*args_), args.repeat)
        tn = best_of(lambda: np_fn(*args_), args.repeat)
        print(f"{name:36s} {tj:10.4f} {tn:10.4f} {tn / tj:8.1f}x")


if __name__ == "__main__":
    main()
