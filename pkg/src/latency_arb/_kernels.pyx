# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled regime kernel: one sequential pass per minute, minutes in parallel."""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp, expm1

cnp.import_array()

FCFS, PGA, TIMEBOOST = 0, 1, 2


cdef inline void _minute(const double[:] lr, int mode, double b, double eb, long period,
                         bint rearm, double* out_total, long* out_trades) noexcept nogil:
    cdef Py_ssize_t n = lr.shape[0]
    cdef Py_ssize_t k
    cdef double s = 0.0, a = 0.0, value = 1.0, total = 0.0, x, y, e
    cdef long trades = 0, deadline = 0
    cdef bint pending = False, gap, fire, ex, start
    for k in range(1, n + 1):
        s = s + lr[k - 1]
        x = s - a
        gap = x > b or x < -b
        if mode == 0:
            ex = gap
        elif mode == 1:
            if k % period != 0:
                continue
            ex = gap
        else:
            if rearm and not gap:
                pending = False
            fire = pending and (k >= deadline or k == n)
            if fire:
                pending = False
            start = (not pending) and (not fire) and gap
            ex = fire and gap
            if start:
                if k == n or period == 0:
                    ex = True
                else:
                    deadline = k + period
                    pending = True
        if not ex:
            continue
        if x > b:
            y = (x - b) / 2.0
            e = expm1(y)
            total = total + value * (0.5 * eb * e * e)
            a = s - b
        else:
            y = (x + b) / 2.0
            e = expm1(y)
            total = total + value * (0.5 * e * e)
            a = s + b
        value = value * (1.0 + e)
        trades += 1
    out_total[0] = total
    out_trades[0] = trades


def run_minutes(log_ratios, int mode, double band_log, long period, bint rearm=False, int n_threads=0):
    cdef cnp.ndarray[double, ndim=2, mode="c"] arr = np.ascontiguousarray(log_ratios, dtype=np.float64)
    cdef const double[:, :] lr = arr
    cdef Py_ssize_t n_min = lr.shape[0]
    cdef Py_ssize_t i
    total_np = np.zeros(n_min, dtype=np.float64)
    trades_np = np.zeros(n_min, dtype=np.int64)
    cdef double[:] total = total_np
    cdef long[:] trades = trades_np
    cdef double eb = exp(band_log)
    cdef int nt = n_threads if n_threads > 0 else 0
    if nt == 1 or n_min < 2:
        for i in range(n_min):
            _minute(lr[i], mode, band_log, eb, period, rearm, &total[i], &trades[i])
    elif nt > 1:
        for i in prange(n_min, nogil=True, schedule="static", num_threads=nt):
            _minute(lr[i], mode, band_log, eb, period, rearm, &total[i], &trades[i])
    else:
        for i in prange(n_min, nogil=True, schedule="static"):
            _minute(lr[i], mode, band_log, eb, period, rearm, &total[i], &trades[i])
    return total_np, trades_np
