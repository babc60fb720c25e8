"""Compare the numba and numpy versions of the hot kernels.

    python benchmarks/bench_kernels.py [--points M] [--repeat R] [--quick]

Each kernel is timed on identical inputs in both variants (numba timings
exclude the first, compiling call) and the outputs are checked to agree.
"""

import argparse
import sys
import timeit

import numpy as np

from loylab import kernels


def _cases(m, n_times):
    rng = np.random.default_rng(0)
    e = np.sort(rng.uniform(0.0, 4.0, m))
    left = (rng.normal(size=(2, m)) + 1j * rng.normal(size=(2, m))) * 0.05
    right = left.conj().T.copy()
    zs = 2.0 + 0.01j + np.linspace(-0.2, 0.2, 64)
    coeffs = rng.normal(size=(m, 2)) + 1j * rng.normal(size=(m, 2))
    lam = np.array([2.0 - 0.002j, 2.03 - 0.003j])
    times = np.linspace(0.0, 500.0, n_times)
    x = (rng.normal(size=m * 8) + 1j * rng.normal(size=m * 8)) * 10.0 ** rng.uniform(-4, 1, m * 8)
    return {
        "exprel": ((x,), kernels.exprel_np, kernels.exprel_nb if kernels.numba else None),
        "resolvent_sandwich": ((left, e, right, 2.0 + 0.01j),
                               kernels.resolvent_sandwich_np, getattr(kernels, "resolvent_sandwich_nb", None)),
        "resolvent_sandwich_many": ((left, e, right, zs),
                                    kernels.resolvent_sandwich_many_np,
                                    getattr(kernels, "resolvent_sandwich_many_nb", None)),
        "product_amplitudes": ((coeffs, e, lam, times),
                               kernels.product_amplitudes_np, getattr(kernels, "product_amplitudes_nb", None)),
        "transient_kernel": ((e, lam, 300.0, 0.01),
                             kernels.transient_kernel_np, getattr(kernels, "transient_kernel_nb", None)),
    }


def _best(fn, args, repeat):
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=16000, help="continuum grid size")
    ap.add_argument("--times", type=int, default=200, help="time points for product_amplitudes")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="small sizes, one repeat (smoke test)")
    args = ap.parse_args(argv)
    if args.quick:
        args.points, args.times, args.repeat = 200, 10, 1

    print(f"numba available: {kernels.numba is not None}; library default path: "
          f"{'numba' if kernels.USE_NUMBA else 'numpy'}")
    print(f"grid points = {args.points}, time points = {args.times}")
    print(f"{'kernel':<26s}{'numpy [ms]':>12s}{'numba [ms]':>12s}{'speed-up':>10s}{'max rel diff':>14s}")
    for name, (a, f_np, f_nb) in _cases(args.points, args.times).items():
        t_np = _best(f_np, a, args.repeat)
        if f_nb is None:
            print(f"{name:<26s}{t_np * 1e3:12.3f}{'-':>12s}{'-':>10s}{'-':>14s}")
            continue
        out_nb = f_nb(*a)  # compile
        out_np = f_np(*a)
        diff = float(np.max(np.abs(out_nb - out_np)) / max(np.max(np.abs(out_np)), 1e-300))
        t_nb = _best(f_nb, a, args.repeat)
        print(f"{name:<26s}{t_np * 1e3:12.3f}{t_nb * 1e3:12.3f}{t_np / t_nb:10.2f}{diff:14.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
