"""Time the hot kernels on both backends (numba JIT vs NumPy fallback).

The package selects its backend at import time (numba when importable,
unless GG_PRIVACY_DISABLE_NUMBA is set); this script ignores that choice
and times every implementation registered in ``kernels.IMPLEMENTATIONS``
inside one process, so the two columns are measured on identical inputs.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --size 5000000 --repeats 9
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from ggprivacy import kernels


def build_inputs(size: int, seed: int) -> dict[str, tuple]:
    """One argument tuple per kernel, sized like a real accounting run."""
    rng = np.random.default_rng(seed)
    beta, sigma = 1.7, 2.3
    t = rng.normal(0.0, sigma, size)
    ell = rng.normal(0.5, 1.0, size)
    m = 2 ** 15
    h = 2.0 * 30.0 / (2 * m + 1)
    y = np.clip(rng.normal(0.5, 1.0, size), -(m + 0.49) * h, (m + 0.49) * h)
    g = rng.gamma(1.0 / beta, 1.0, size)
    signs = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    rows = rng.normal(0.0, 1.0, (size // 64, 64))
    return {
        "gg_loss": (t, 1.0, beta, sigma ** beta),
        "mixture_log_ratio": (ell, 0.05),
        "bin_counts": (y, h, m),
        "signed_power_scale": (g, signs, sigma, 1.0 / beta),
        "lbeta_norms": (rows, beta),
    }


def time_call(fn, args, repeats: int) -> float:
    """Median wall seconds over ``repeats`` calls (after one warmup)."""
    fn(*args)                       # warmup; also triggers JIT compilation
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=2_000_000,
                        help="elements per kernel call (default 2e6)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed calls per kernel (median is reported)")
    parser.add_argument("--seed", type=int, default=61803398)
    args = parser.parse_args()

    inputs = build_inputs(args.size, args.seed)
    backends = list(kernels.IMPLEMENTATIONS)
    print(f"active backend: {kernels.BACKEND}; "
          f"timing {', '.join(backends)} on {args.size:,} elements "
          f"(median of {args.repeats})\n")

    header = f"{'kernel':<20}" + "".join(f"{b + ' (ms)':>14}" for b in backends)
    if "numba" in backends:
        header += f"{'speedup':>10}{'max |diff|':>12}"
    print(header)
    print("-" * len(header))

    for name, call_args in inputs.items():
        times = {}
        results = {}
        for backend in backends:
            fn = kernels.IMPLEMENTATIONS[backend][name]
            times[backend] = time_call(fn, call_args, args.repeats)
            results[backend] = np.asarray(fn(*call_args), dtype=np.float64)
        row = f"{name:<20}" + "".join(f"{times[b] * 1e3:>14.2f}"
                                      for b in backends)
        if "numba" in backends:
            row += f"{times['numpy'] / times['numba']:>9.1f}x"
            diff = float(np.max(np.abs(results["numpy"] - results["numba"])))
            row += f"{diff:>12.1e}"
        print(row)


if __name__ == "__main__":
    main()
