"""Time each kernel's numba path against its numpy path.

    python3 benchmarks/bench_kernels.py [--repeat N]

The numba column is skipped when numba is not installed. First calls are
made before timing so compilation is excluded.
"""

import argparse
import time

import numpy as np

from disclosure_audit import kernels


def _cases(rng):
    cms = rng.normal(size=20_000)
    blob = rng.integers(0, 256, 200_000, dtype=np.uint8)
    d = 8
    values = rng.normal(size=1 << d)
    w1, w2 = kernels._shapley_weights(d)
    scores = rng.normal(size=(50_000, 5))
    codes = rng.integers(0, 200, 50_000)
    x = np.round(rng.normal(size=50_000), 2)
    return {
        "rolling_prior_stats": (
            lambda: kernels.rolling_prior_stats_numba(cms, 4),
            lambda: kernels.rolling_prior_stats_numpy(cms, 4),
        ),
        "crc64 (200 kB)": (
            lambda: kernels.crc64_numba(blob, kernels.CRC64_TABLE),
            lambda: kernels.crc64_numpy(blob.tobytes()),
        ),
        "shapley d=8": (
            lambda: kernels.shapley_from_values_numba(values, d, w1, w2),
            lambda: kernels.shapley_from_values_numpy(values, d, w1, w2),
        ),
        "cluster_sums": (
            lambda: kernels.cluster_sums_numba(scores, codes, 200),
            lambda: kernels.cluster_sums_numpy(scores, codes, 200),
        ),
        "midranks": (
            lambda: kernels.midranks_numba(x),
            lambda: kernels.midranks_numpy(x),
        ),
    }


def _best(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"numba available: {kernels.NUMBA_AVAILABLE}  (active backend: {kernels.BACKEND})")
    print(f"{'kernel':<22}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, (fast, slow) in _cases(rng).items():
        t_np = _best(slow, args.repeat)
        if kernels.NUMBA_AVAILABLE:
            t_nb = _best(fast, args.repeat)
            print(f"{name:<22}{t_nb * 1e3:>12.3f}{t_np * 1e3:>12.3f}{t_np / t_nb:>10.1f}")
        else:
            print(f"{name:<22}{'-':>12}{t_np * 1e3:>12.3f}{'-':>10}")


if __name__ == "__main__":
    main()
