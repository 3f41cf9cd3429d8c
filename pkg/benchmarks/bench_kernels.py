"""Time the compiled regime kernel against the numpy fallback.

    python3 benchmarks/bench_kernels.py --minutes 2000 --repeat 3
"""

import argparse
import math
import time

import numpy as np

from latency_arb import kernels
from latency_arb.price_models import GbmParams

MODES = {"fcfs": kernels.FCFS, "pga": kernels.PGA, "timeboost": kernels.TIMEBOOST}


def best_time(fn, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--minutes", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=6000, help="10 ms steps per minute")
    ap.add_argument("--sigma-daily", type=float, default=0.042)
    ap.add_argument("--fee", type=float, default=0.0005)
    ap.add_argument("--period", type=int, default=20, help="block or window length in steps")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    s = GbmParams(args.sigma_daily).step_sigma(10)
    lr = -0.5 * s * s + s * rng.standard_normal((args.minutes, args.steps))
    band_log = -math.log1p(-args.fee)

    print(f"compiled kernel available: {kernels._compiled is not None}; threads cap {kernels.thread_cap() or 'default'}")
    print(f"{args.minutes} minutes x {args.steps} steps, best of {args.repeat}")
    print(f"{'regime':<10} {'numpy s':>10} {'cython s':>10} {'speedup':>8}  agree")
    for name, mode in MODES.items():
        t_py, (rel_py, n_py) = best_time(
            lambda: kernels.run_minutes(lr, mode, band_log, args.period, backend="numpy"), args.repeat
        )
        if kernels._compiled is None:
            print(f"{name:<10} {t_py:>10.3f} {'n/a':>10} {'n/a':>8}  n/a")
            continue
        t_cy, (rel_cy, n_cy) = best_time(
            lambda: kernels.run_minutes(lr, mode, band_log, args.period, backend="cython"), args.repeat
        )
        agree = np.array_equal(n_py, n_cy) and np.allclose(rel_py, rel_cy, rtol=1e-12, atol=0)
        print(f"{name:<10} {t_py:>10.3f} {t_cy:>10.3f} {t_py / t_cy:>7.1f}x  {agree}")


if __name__ == "__main__":
    main()
