"""Pure numpy regime kernel, vectorized across minute windows.

Mirrors ``_kernels.pyx`` step for step; used when the compiled extension
is unavailable or ``LATENCY_ARB_PURE=1`` is set.
"""

import numpy as np

FCFS, PGA, TIMEBOOST = 0, 1, 2


def run_minutes(log_ratios, mode, band_log, period, rearm=False, n_threads=0):
    """Relative profit and trade count per minute row of ``log_ratios``.

    ``period`` is the block length (PGA) or the advantage window (Timeboost)
    in steps; FCFS ignores it. Profits are fractions of the pool value at
    the start of the minute.
    """
    lr = np.ascontiguousarray(log_ratios, dtype=np.float64)
    if lr.ndim != 2:
        raise ValueError("log_ratios must be 2-d (minutes x steps)")
    n_min, n = lr.shape
    b = float(band_log)
    eb = np.exp(b)
    s = np.zeros(n_min)
    a = np.zeros(n_min)
    value = np.ones(n_min)
    total = np.zeros(n_min)
    trades = np.zeros(n_min, dtype=np.int64)
    pending = np.zeros(n_min, dtype=bool)
    deadline = np.zeros(n_min, dtype=np.int64)

    for k in range(1, n + 1):
        s = s + lr[:, k - 1]
        x = s - a
        gap = (x > b) | (x < -b)
        if mode == FCFS:
            ex = gap
        elif mode == PGA:
            if k % period != 0:
                continue
            ex = gap
        else:
            if rearm:
                pending &= gap
            fire = pending & ((k >= deadline) | (k == n))
            pending &= ~fire
            start = ~pending & ~fire & gap
            if k == n or period == 0:
                now = start
            else:
                now = np.zeros(n_min, dtype=bool)
                deadline = np.where(start, k + period, deadline)
                pending |= start
            ex = (fire | now) & gap
        if not ex.any():
            continue
        up = ex & (x > b)
        down = ex & (x < -b)
        y = np.where(up, (x - b) / 2.0, (x + b) / 2.0)
        e = np.expm1(y)
        prof = np.where(up, 0.5 * eb * e * e, 0.5 * e * e)
        total = np.where(ex, total + value * prof, total)
        value = np.where(ex, value * (1.0 + e), value)
        a = np.where(up, s - b, np.where(down, s + b, a))
        trades += ex
    return total, trades
