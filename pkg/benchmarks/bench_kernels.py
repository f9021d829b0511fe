"""Compare the numba and pure-numpy kernels on realistic inputs.

    python benchmarks/bench_kernels.py [--repeat N]

Prints the median time per call for each kernel pair and checks that the
two paths agree.  The first numba call (compilation) is excluded.
"""

import argparse
import statistics
import time

import numpy as np

from ctfsmc import kernels
from ctfsmc.models.ising import PartialCoarseLattice, _units, majority_coarsen_step
from ctfsmc.models.stereo import assemble, synthesize_stereo_pair


def timeit(fn, repeat):
    fn()  # warm-up / compile
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times)


def cases(rng):
    # partially coarsened 27x27 Ising lattice
    x = PartialCoarseLattice.from_spins(rng.choice([-1, 1], size=(27, 27)))
    for _ in range(40):
        x = majority_coarsen_step(x)
    unit, spin = _units(x)
    yield "ising pair sum 27x27", (kernels.np_unit_pair_sum, kernels.nb_unit_pair_sum), (unit, spin)

    left, right, disp = synthesize_stereo_pair(0, 40, 10, 4)
    blocks = [tuple(rng.integers(0, 5, size=4)) for _ in range(5 * 20)]
    d, bid, bvar = assemble(blocks, 10, 40)
    yield "stereo energy 10x40", (kernels.np_stereo_energy, kernels.nb_stereo_energy), \
        (left, right, d, bid, bvar, 5.0)

    cdf = np.cumsum(rng.random(10_000))
    cdf /= cdf[-1]
    u = (np.arange(10_000) + rng.random()) / 10_000
    yield "inverse cdf n=1e4", (kernels.np_inverse_cdf, kernels.nb_inverse_cdf), (cdf, u)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'numpy us':>12}{'numba us':>12}{'speedup':>10}  agree")
    for name, (np_fn, nb_fn), args_ in cases(rng):
        a, b = np_fn(*args_), nb_fn(*args_)
        agree = np.allclose(a, b, rtol=1e-9, atol=1e-9)
        t_np = timeit(lambda: np_fn(*args_), args.repeat)
        t_nb = timeit(lambda: nb_fn(*args_), args.repeat)
        print(f"{name:<24}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
