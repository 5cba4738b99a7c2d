"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints best-of-repeat time per call for each kernel and backend, and the speedup.
"""
import argparse
import timeit

import numpy as np

from kmaxbandits import _kernels_py
from kmaxbandits._subsets import all_subsets

try:
    from kmaxbandits import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rng):
    n, m, k = 12, 41, 3
    p = rng.dirichlet(np.ones(m), size=n)
    cum = np.cumsum(p, axis=1)
    subsets = all_subsets(n, k)
    values = np.arange(m) / (m - 1)
    q = rng.random((n, m))
    d, u = 3, 36
    psi = rng.uniform(0.1, 1.0, (u, d))
    counts = rng.integers(1, 500, u).astype(float)
    loss_psi = rng.uniform(0, 50, d)
    theta = rng.uniform(0.3, 1.0, d)
    return {
        f"subset_rewards (N={n}, K={k}, M={m}, {len(subsets)} subsets)": lambda mod: mod.subset_rewards(cum, subsets, values),
        f"q_to_p (N={n}, M={m})": lambda mod: mod.q_to_p(q),
        f"exp_nll_terms (d={d}, {u} distinct actions)": lambda mod: mod.exp_nll_terms(theta, psi, counts, loss_psi, 1.0),
    }


def best_time(fn, repeat):
    number, _ = timeit.Timer(fn).autorange()
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    if _ckernels is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
    print(f"{'kernel':<58}{'python':>12}{'cython':>12}{'speedup':>9}")
    for name, call in cases(np.random.default_rng(args.seed)).items():
        t_py = best_time(lambda: call(_kernels_py), args.repeat)
        if _ckernels is None:
            print(f"{name:<58}{t_py * 1e6:>10.1f}us{'-':>12}{'-':>9}")
            continue
        t_c = best_time(lambda: call(_ckernels), args.repeat)
        print(f"{name:<58}{t_py * 1e6:>10.1f}us{t_c * 1e6:>10.1f}us{t_py / t_c:>8.1f}x")


if __name__ == "__main__":
    main()
