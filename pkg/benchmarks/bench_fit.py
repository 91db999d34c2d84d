"""Benchmark the compiled fit kernel against the pure-numpy fallback.

Generates batches of noisy synthetic dose-response pairs and times
``fit_pairs`` on each backend, verifying that the fits agree. Run from the
repository root:

    python3 benchmarks/bench_fit.py [--pairs 200 1000 5000] [--points 8]
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from csabench._fit import _pykernel  # noqa: E402

try:
    from csabench._fit import _kernel
except ImportError:
    _kernel = None


def make_batch(n_pairs: int, n_points: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    doses = np.empty(n_pairs * n_points)
    viab = np.empty(n_pairs * n_points)
    offsets = np.arange(0, n_pairs * n_points + 1, n_points, dtype=np.int64)
    for i in range(n_pairs):
        einf = rng.uniform(0, 0.9)
        lec = rng.uniform(-11, -3)
        h = 10.0 ** rng.uniform(-1, 0.9)
        d = np.logspace(lec - 3, lec + 3, n_points)
        t = h * np.log(10.0) * (np.log10(d) - lec)
        curve = einf + (1 - einf) / (1 + np.exp(np.clip(t, -700, 700)))
        lo, hi = offsets[i], offsets[i + 1]
        doses[lo:hi] = d
        viab[lo:hi] = curve + rng.normal(0, 0.03, n_points)
    return doses, viab, offsets


def time_backend(fit_pairs, doses, viab, offsets, repeats: int = 3):
    best = np.inf
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fit_pairs(doses, viab, offsets)
        best = min(best, time.perf_counter() - start)
    return best, result


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pairs", type=int, nargs="+", default=[200, 1000, 5000])
    parser.add_argument("--points", type=int, default=8)
    args = parser.parse_args()

    if _kernel is None:
        print("compiled kernel not built; timing the pure backend only")

    header = f"{'pairs':>8} {'points':>7} {'pure (s)':>10} {'compiled (s)':>13} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for n_pairs in args.pairs:
        doses, viab, offsets = make_batch(n_pairs, args.points)
        t_pure, res_pure = time_backend(_pykernel.fit_pairs, doses, viab, offsets)
        if _kernel is None:
            print(f"{n_pairs:>8} {args.points:>7} {t_pure:>10.3f} {'-':>13} {'-':>8}")
            continue
        t_comp, res_comp = time_backend(_kernel.fit_pairs, doses, viab, offsets)
        max_diff = float(np.max(np.abs(res_pure[0] - res_comp[0])))
        if max_diff > 1e-4:  # the fit's own accuracy scale
            print(f"warning: backends disagree (max param diff {max_diff:.2e})")
        print(
            f"{n_pairs:>8} {args.points:>7} {t_pure:>10.3f} {t_comp:>13.4f} "
            f"{t_pure / t_comp:>7.0f}x"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
