"""Pair-counting kernel: numba against the numpy fallback.

Simulates a null-model pattern on a 20 x 20 window, discretizes it at a few
sampling intensities and times ``estimate_k`` with each kernel on the same
samples.  The two results must agree to 1e-12 relative.

    python benchmarks/bench_kernel.py [--phi 5 10 20] [--repeat 3]

Set ``FIBERK_DISABLE_NUMBA=1`` to check that the package runs without numba;
the numba column is then skipped.
"""

import argparse
import time

import numpy as np

from fiberk import _accel
from fiberk.fibers import SamplingConfig
from fiberk.geometry import Window
from fiberk.kstat import KGrid, estimate_k
from fiberk.simulate import NullModelSpec, simulate_null


def best_of(repeat, func):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = func()
        times.append(time.perf_counter() - start)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--phi", type=float, nargs="+", default=[2.0, 5.0, 10.0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    pattern, model = simulate_null(NullModelSpec(Window((20.0, 20.0)), (3.5, -0.15, 0.0), 2.0, seed=args.seed))
    grid = KGrid.regular(2.0, 20, [np.pi / 10, 3 * np.pi / 10, np.pi / 2])
    print(f"{len(pattern)} fibers, grid {grid.shape[0]}x{grid.shape[1]}, numba available: {_accel.HAVE_NUMBA}")

    if _accel.HAVE_NUMBA:
        start = time.perf_counter()
        estimate_k(pattern.discretize(SamplingConfig.poisson(1.0, 0)), model, pattern.window, grid, use_numba=True)
        print(f"first numba call (compile or cache load): {time.perf_counter() - start:.2f} s")

    header = f"{'phi':>6} {'samples':>8} {'pairs':>10} {'numpy s':>9}"
    print(header + (f" {'numba s':>9} {'speedup':>8}" if _accel.HAVE_NUMBA else ""))
    for phi in args.phi:
        samples = pattern.discretize(SamplingConfig.poisson(phi, args.seed))
        run = lambda flag: estimate_k(samples, model, pattern.window, grid, use_numba=flag)
        t_np, ref = best_of(args.repeat, lambda: run(False))
        line = f"{phi:>6g} {len(samples):>8d} {ref.diagnostics['n_pairs']:>10d} {t_np:>9.3f}"
        if _accel.HAVE_NUMBA:
            t_nb, fast = best_of(args.repeat, lambda: run(True))
            np.testing.assert_allclose(fast.k_hat, ref.k_hat, rtol=1e-12)
            line += f" {t_nb:>9.3f} {t_np / t_nb:>7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
