"""Replay price paths against a constant-product pool under FCFS, PGA and
Timeboost sequencing.

Each minute window starts with the pool at the external price and holding
``liquidity_usd``; profits compound through the pool-value factor inside
the window and are converted to dollars once per minute.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cpmm import log_profit


class Regime(str, enum.Enum):
    FCFS = "fcfs"
    PGA = "pga"
    TIMEBOOST = "timeboost"


_MODE = {Regime.FCFS: kernels.FCFS, Regime.PGA: kernels.PGA, Regime.TIMEBOOST: kernels.TIMEBOOST}


@dataclass(frozen=True)
class RegimeConfig:
    regime: Regime
    fee: float = 0.0005
    step_ms: int = 10
    block_time_ms: int | None = None
    t_w_ms: int | None = None
    liquidity_usd: float = 1e8
    minute_ms: int = 60_000
    # Timeboost only: cancel a pending deadline when the gap closes (non-canonical reading)
    rearm: bool = False
    # who receives PGA profits; a label only, no cash flow is modeled
    attribution: str = "block_producer"

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        if not 0.0 <= self.fee < 1.0:
            raise ValueError("fee must be in [0, 1)")
        if self.liquidity_usd <= 0:
            raise ValueError("liquidity_usd must be positive")
        if self.step_ms <= 0 or self.minute_ms % self.step_ms:
            raise ValueError("step_ms must be positive and divide minute_ms")
        if self.regime is Regime.PGA:
            if self.block_time_ms is None or self.block_time_ms <= 0 or self.block_time_ms % self.step_ms:
                raise ValueError("PGA needs a positive block_time_ms that is a multiple of step_ms")
        if self.regime is Regime.TIMEBOOST:
            if self.t_w_ms is None or self.t_w_ms < 0 or self.t_w_ms % self.step_ms:
                raise ValueError("Timeboost needs a non-negative t_w_ms that is a multiple of step_ms")

    @property
    def steps_per_minute(self) -> int:
        return self.minute_ms // self.step_ms

    @property
    def param_ms(self) -> int:
        if self.regime is Regime.PGA:
            return int(self.block_time_ms)
        if self.regime is Regime.TIMEBOOST:
            return int(self.t_w_ms)
        return 0

    @property
    def period_steps(self) -> int:
        return self.param_ms // self.step_ms if self.regime is not Regime.FCFS else 1


@dataclass(frozen=True)
class MinuteResult:
    minute_index: int
    profit_usd: float
    n_trades: int


@dataclass
class RegimeReport:
    config: RegimeConfig
    profits_usd: np.ndarray
    n_trades: np.ndarray
    mean: float = math.nan
    median: float = math.nan
    p99: float = math.nan
    stderr: float = math.nan
    backend: str = field(default=kernels.BACKEND)

    def __post_init__(self):
        if len(self.profits_usd):
            self.mean, self.median, self.p99 = report_stats(self.profits_usd)
            n = len(self.profits_usd)
            self.stderr = float(np.std(self.profits_usd, ddof=1) / math.sqrt(n)) if n > 1 else math.nan

    @property
    def minutes(self) -> list[MinuteResult]:
        return [MinuteResult(i, float(p), int(k)) for i, (p, k) in enumerate(zip(self.profits_usd, self.n_trades))]

    @property
    def n_minutes(self) -> int:
        return len(self.profits_usd)


def report_stats(profits) -> tuple[float, float, float]:
    """Mean, lower median and nearest-rank 99th percentile."""
    x = np.sort(np.asarray(profits, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("need at least one minute")
    median = x[(n - 1) // 2]
    p99 = x[max(1, math.ceil(0.99 * n)) - 1]
    return float(x.mean()), float(median), float(p99)


def minute_matrix(ratios, cfg: RegimeConfig) -> np.ndarray:
    """Reshape a per-step ratio path into ``(minutes, steps)`` log ratios."""
    r = np.asarray(getattr(ratios, "ratios", ratios), dtype=float)
    if r.ndim == 2:
        if r.shape[1] != cfg.steps_per_minute:
            raise ValueError(f"rows must hold {cfg.steps_per_minute} steps")
        return np.log(r)
    n = cfg.steps_per_minute
    full = len(r) // n
    if full * n != len(r):
        warnings.warn(f"dropping {len(r) - full * n} trailing steps of an incomplete minute", stacklevel=2)
    return np.log(r[: full * n]).reshape(full, n)


def simulate(path, cfg: RegimeConfig, backend: str | None = None) -> RegimeReport:
    """Run one regime over every complete minute of ``path``.

    ``path`` is a :class:`PricePath`, a 1-d array of per-step ratios, or a
    2-d ``(minutes, steps)`` ratio array.
    """
    lr = minute_matrix(path, cfg)
    if lr.shape[0] == 0:
        return RegimeReport(cfg, np.zeros(0), np.zeros(0, dtype=np.int64))
    band_log = -math.log1p(-cfg.fee)
    rel, trades = kernels.run_minutes(lr, _MODE[cfg.regime], band_log, cfg.period_steps, cfg.rearm, backend)
    return RegimeReport(cfg, rel * cfg.liquidity_usd, trades, backend=backend or kernels.BACKEND)


def _require(cfg: RegimeConfig, regime: Regime):
    if cfg.regime is not regime:
        raise ValueError(f"config is for {cfg.regime.value}, expected {regime.value}")


def simulate_fcfs(path, cfg: RegimeConfig, backend: str | None = None) -> RegimeReport:
    """Every opportunity is taken at the step it appears."""
    _require(cfg, Regime.FCFS)
    return simulate(path, cfg, backend)


def simulate_pga(path, cfg: RegimeConfig, backend: str | None = None) -> RegimeReport:
    """One maximal trade at each block boundary."""
    _require(cfg, Regime.PGA)
    return simulate(path, cfg, backend)


def simulate_timeboost(path, cfg: RegimeConfig, backend: str | None = None) -> RegimeReport:
    """First profitable step arms a deadline ``t_w`` later; trade there or at minute end."""
    _require(cfg, Regime.TIMEBOOST)
    return simulate(path, cfg, backend)


@dataclass(frozen=True)
class TradeEvent:
    step: int
    log_gap: float
    profit_rel: float
    pool_value_before: float


def trace_minute(log_ratios, cfg: RegimeConfig) -> list[TradeEvent]:
    """Plain-Python replay of one minute that records every trade.

    Slow; meant for inspection and for cross-checking the kernels.
    """
    b = -math.log1p(-cfg.fee)
    period = cfg.period_steps
    n = len(log_ratios)
    s = a = 0.0
    value = 1.0
    pending = False
    deadline = 0
    events = []
    for k in range(1, n + 1):
        s += float(log_ratios[k - 1])
        x = s - a
        gap = abs(x) > b
        if cfg.regime is Regime.FCFS:
            ex = gap
        elif cfg.regime is Regime.PGA:
            ex = gap and k % period == 0
        else:
            if cfg.rearm and not gap:
                pending = False
            fire = pending and (k >= deadline or k == n)
            if fire:
                pending = False
            ex = fire and gap
            if not pending and not fire and gap:
                if k == n or period == 0:
                    ex = True
                else:
                    pending, deadline = True, k + period
        if ex:
            profit, pool_val, x_after = log_profit(np.array([x]), b)
            events.append(TradeEvent(k, x, float(profit[0]), value))
            value *= float(pool_val[0])
            a = s - float(x_after[0])
    return events


REPORT_HEADER = ["regime", "param_ms", "mean_usd", "median_usd", "p99_usd", "n_minutes"]


def write_report_csv(reports, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for r in reports:
        w.writerow([r.config.regime.value, r.config.param_ms, repr(r.mean), repr(r.median), repr(r.p99), r.n_minutes])


def write_minutes_csv(report: RegimeReport, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["minute", "profit_usd", "n_trades"])
    for i, (p, k) in enumerate(zip(report.profits_usd, report.n_trades)):
        w.writerow([i, repr(float(p)), int(k)])


def emit_figure_data(report: RegimeReport, floor_usd: float = 0.01, bins_per_decade: int = 10):
    """Histogram and cumulative series for plotting.

    The first histogram bin collects minutes below ``floor_usd`` (the zero
    bin); above it bins are log-spaced. Returns ``(hist, cumulative)`` where
    ``hist`` is a list of ``(lo, hi, count)``.
    """
    p = np.asarray(report.profits_usd, dtype=float)
    cumulative = np.cumsum(p)
    hist = [(0.0, floor_usd, int(np.sum(p < floor_usd)))]
    big = p[p >= floor_usd]
    if len(big):
        top = math.ceil(math.log10(big.max() / floor_usd) * bins_per_decade) or 1
        edges = floor_usd * 10.0 ** (np.arange(top + 1) / bins_per_decade)
        if edges[-1] <= big.max():
            edges = np.append(edges, edges[-1] * 10.0 ** (1 / bins_per_decade))
        counts, _ = np.histogram(big, bins=edges)
        hist.extend((float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts))
    return hist, cumulative


def write_figure_csvs(report: RegimeReport, hist_fh, cum_fh) -> None:
    hist, cumulative = emit_figure_data(report)
    w = csv.writer(hist_fh, lineterminator="\n")
    w.writerow(["bin_lo_usd", "bin_hi_usd", "count"])
    for lo, hi, c in hist:
        w.writerow([repr(lo), repr(hi), c])
    w = csv.writer(cum_fh, lineterminator="\n")
    w.writerow(["minute", "cumulative_usd"])
    for i, c in enumerate(cumulative):
        w.writerow([i, repr(float(c))])
