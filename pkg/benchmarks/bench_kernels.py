"""Compare the compiled kernels with the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from trapbose import _kernels_py, kernels


def cases(rng):
    x = np.geomspace(1e-4, 40.0, 200_000)
    mu = np.linspace(-20.0, 0.99, 2_000)
    occ = rng.uniform(0.0, 3.0, (20, 60))
    phi = rng.standard_normal((20, 60, 400))
    return {
        "g_half (2e5 points)": lambda m: m.g_half(x),
        "ideal_ladder (2e3 mu, T=2.75)": lambda m: m.ideal_ladder(mu, 2.75),
        "thermal_accumulate (1200 x 400)": lambda m: m.thermal_accumulate(occ, phi),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if kernels.BACKEND != "cython":
        print("compiled kernels are not built; only the NumPy fallback is timed")
    impls = {"numpy": _kernels_py}
    if kernels.BACKEND == "cython":
        impls["cython"] = kernels._impl
    print(f"{'kernel':34s} " + " ".join(f"{k:>12s}" for k in impls) + "   speed-up")
    for name, fn in cases(np.random.default_rng(0)).items():
        times = {k: min(timeit.repeat(lambda m=m: fn(m), number=1, repeat=args.repeat)) for k, m in impls.items()}
        ratio = times["numpy"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:34s} " + " ".join(f"{t * 1e3:10.2f}ms" for t in times.values()) + f"   {ratio:7.2f}x")


if __name__ == "__main__":
    main()
