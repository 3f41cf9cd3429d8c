"""Backend selection for the regime kernel.

The compiled extension is used when importable; set ``LATENCY_ARB_PURE=1``
to force the numpy fallback. ``LATENCY_ARB_THREADS`` caps the worker
threads of the compiled kernel (0 = OpenMP default).
"""

import os

from . import _kernels_py

FCFS, PGA, TIMEBOOST = 0, 1, 2

try:
    if os.environ.get("LATENCY_ARB_PURE", "") not in ("", "0"):
        raise ImportError("pure backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"


def thread_cap() -> int:
    raw = os.environ.get("LATENCY_ARB_THREADS", "0")
    try:
        return max(0, int(raw))
    except ValueError:
        return 0


def run_minutes(log_ratios, mode, band_log, period, rearm=False, backend=None):
    """Dispatch to the selected backend; ``backend`` overrides ('cython' or 'numpy')."""
    name = backend or BACKEND
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not available")
        return _compiled.run_minutes(log_ratios, mode, band_log, int(period), bool(rearm), thread_cap())
    if name == "numpy":
        return _kernels_py.run_minutes(log_ratios, mode, band_log, int(period), bool(rearm))
    raise ValueError(f"unknown backend {name!r}")
