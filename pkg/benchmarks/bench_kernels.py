"""Time the compiled and pure-Python kernel backends on the same inputs.

Run with ``python benchmarks/bench_kernels.py [--repeat R]``.
"""

import argparse
import timeit

import numpy as np

from urank import _kernels


def cases(rng):
    a = rng.normal(size=(300, 300))
    score, y = rng.integers(0, 50, size=400).astype(float), rng.normal(size=400)
    x, yl = rng.normal(size=2000), rng.integers(0, 5, size=2000).astype(float)
    m, sc, p = rng.integers(0, 40, size=400).astype(float), rng.normal(size=400), rng.dirichlet(np.ones(400))
    return {
        "offdiag_sum n=300": lambda impl: _kernels.offdiag_sum(a, impl),
        "pair_mistakes n=400": lambda impl: _kernels.pair_mistakes(score, y, impl),
        "stump_cut_counts n=2000": lambda impl: _kernels.stump_cut_counts(x, yl, impl),
        "weighted_discordance K=400": lambda impl: _kernels.weighted_discordance(m, sc, p, impl),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    impls = _kernels.backends()
    if "cython" not in impls:
        print("compiled extension not built; only the Python backend is available")
    print(f"{'case':<28}" + "".join(f"{name:>14}" for name in impls) + f"{'speedup':>10}")
    for label, func in cases(np.random.default_rng(0)).items():
        times = {}
        for name, impl in impls.items():
            reps = 1 if name == "python" else 20
            times[name] = min(timeit.repeat(lambda: func(impl), number=reps, repeat=args.repeat)) / reps
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<28}" + "".join(f"{secs * 1e3:>12.3f}ms" for secs in times.values()) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
