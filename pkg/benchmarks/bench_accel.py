"""Time the compiled and pure-numpy paths of each hot loop.

    python3 benchmarks/bench_accel.py [--repeat 5]

The first compiled call is made before timing so JIT cost is excluded; it
is reported separately.
"""

import argparse
import time

import numpy as np

from fpemu import _accel


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    X = rng.standard_normal((600, 6))
    Y = rng.standard_normal((500, 6))
    yield "correlation matrix 600x500 (matern)", (X, Y, 0.9, _accel.MATERN_5_2, 2.0), \
        _accel.radial_correlation_numpy, _accel.radial_correlation_numba

    T = 200_000
    xi = rng.uniform(-1, 1, (T, 3))
    u = 1.0 - rng.random(T)
    yield f"hydrogen chain {T} steps", (np.array([1.0, 0.0, 0.0]), 0.8, 1.2, xi, u, 1000, 1, 1e-12), \
        _accel.hydrogen_chain_numpy, _accel.hydrogen_chain_numba

    R = rng.standard_normal((7, 3))
    B = np.sqrt(((R[:, None] - R[None]) ** 2).sum(-1))
    p = rng.permutation(7)
    labels = np.zeros(7, dtype=np.int64)
    yield "exhaustive alignment N=7", (B[np.ix_(p, p)], B, labels, labels, 1e-12), \
        _accel.exhaustive_alignment_numpy, _accel.exhaustive_alignment_numba


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"numba available: {_accel.HAVE_NUMBA}; dispatch uses numba: {_accel.USE_NUMBA}")
    print(f"{'kernel':40s} {'numpy [s]':>11s} {'numba [s]':>11s} {'speedup':>8s} {'first call [s]':>15s}")
    for name, args_, slow, fast in cases(np.random.default_rng(args.seed)):
        t0 = time.perf_counter()
        fast(*args_)
        warm = time.perf_counter() - t0
        t_np = best_of(lambda: slow(*args_), args.repeat)
        t_nb = best_of(lambda: fast(*args_), args.repeat)
        print(f"{name:40s} {t_np:11.4f} {t_nb:11.4f} {t_np / t_nb:8.1f} {warm:15.3f}")


if __name__ == "__main__":
    main()
