"""Tick ingestion, fixed-grid resampling and empirical step distributions."""

from __future__ import annotations

import csv
import gzip
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .price_models import MS_PER_DAY, PriceChangeDistribution

log = logging.getLogger(__name__)

TICK_HEADER = ("timestamp_ms", "bid", "ask")


class FormatError(ValueError):
    """Input does not follow the tick CSV layout."""


@dataclass(frozen=True)
class TickRecord:
    timestamp: int
    bid: float
    ask: float

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)


@dataclass(frozen=True)
class TickSeries:
    """Validated ticks held as parallel arrays; iterates as :class:`TickRecord`."""

    timestamps: np.ndarray
    bids: np.ndarray
    asks: np.ndarray
    dropped: int = 0

    def __len__(self):
        return len(self.timestamps)

    def __iter__(self):
        for t, b, a in zip(self.timestamps, self.bids, self.asks):
            yield TickRecord(int(t), float(b), float(a))

    def __getitem__(self, i) -> TickRecord:
        return TickRecord(int(self.timestamps[i]), float(self.bids[i]), float(self.asks[i]))

    @property
    def mids(self) -> np.ndarray:
        return 0.5 * (self.bids + self.asks)


@dataclass(frozen=True)
class MidPriceSeries:
    start_timestamp: int
    step: int
    mids: np.ndarray

    def __len__(self):
        return len(self.mids)

    @property
    def timestamps(self) -> np.ndarray:
        return self.start_timestamp + self.step * np.arange(len(self.mids), dtype=np.int64)


@dataclass(frozen=True)
class PairStats:
    daily_volatility: float
    autocorr_50ms: float
    autocorr_defined: bool = True


def _open_text(source):
    if isinstance(source, (str, Path)):
        path = Path(source)
        if path.suffix == ".gz":
            return gzip.open(path, "rt", encoding="utf-8", newline="")
        return open(path, "r", encoding="utf-8", newline="")
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
        if data[:2] == b"\x1f\x8b":
            data = gzip.decompress(data)
        return io.StringIO(data.decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    # binary stream
    if not hasattr(source, "peek"):
        source = io.BufferedReader(source)
    head = source.peek(2)[:2]
    if head == b"\x1f\x8b":
        return gzip.open(source, "rt", encoding="utf-8", newline="")
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def ingest_ticks(source) -> TickSeries:
    """Parse a ``timestamp_ms,bid,ask`` CSV (path, bytes, or stream).

    Paths ending in ``.gz`` and gzip byte streams are decompressed. Rows
    that fail to parse, have non-positive prices, ``ask < bid`` or a
    timestamp earlier than the previous kept row are dropped and counted.
    """
    fh = _open_text(source)
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return TickSeries(np.zeros(0, np.int64), np.zeros(0), np.zeros(0), 0)
        if tuple(h.strip().lower() for h in header) != TICK_HEADER:
            raise FormatError(f"expected header {','.join(TICK_HEADER)!r}, got {','.join(header)!r}")
        ts, bids, asks = [], [], []
        dropped = 0
        last = None
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                t = int(row[0])
                b = float(row[1])
                a = float(row[2])
                if len(row) != 3:
                    raise ValueError("wrong field count")
            except (ValueError, IndexError):
                dropped += 1
                log.warning("line %d: malformed row dropped", lineno)
                continue
            if not (b > 0 and a > 0 and math.isfinite(a) and math.isfinite(b)) or a < b:
                dropped += 1
                log.warning("line %d: invalid quote (bid=%s, ask=%s) dropped", lineno, b, a)
                continue
            if last is not None and t < last:
                dropped += 1
                log.warning("line %d: timestamp goes backwards, row dropped", lineno)
                continue
            last = t
            ts.append(t)
            bids.append(b)
            asks.append(a)
    finally:
        if fh is not source:
            fh.close()
    return TickSeries(np.array(ts, dtype=np.int64), np.array(bids), np.array(asks), dropped)


def resample_mid(ticks: TickSeries, step: int = 10) -> MidPriceSeries:
    """Carry-forward mid prices on ``first, first+step, ...`` up to the last tick."""
    if len(ticks) == 0:
        raise ValueError("cannot resample an empty tick series")
    if step <= 0:
        raise ValueError("step must be positive")
    t0 = int(ticks.timestamps[0])
    n = (int(ticks.timestamps[-1]) - t0) // step + 1
    grid = t0 + step * np.arange(n, dtype=np.int64)
    idx = np.searchsorted(ticks.timestamps, grid, side="right") - 1
    return MidPriceSeries(t0, step, ticks.mids[idx])


def empirical_distribution(series: MidPriceSeries, pmax: float = 0.01, n_bins: int = 201) -> PriceChangeDistribution:
    """Histogram pmf of one-step mid ratios.

    Ratios are clamped into ``[1 - pmax, 1 + pmax]`` and put into ``n_bins``
    equal-width bins; each occupied bin is represented by the mean ratio of
    its members, which keeps the pmf mean equal to the mean clamped ratio.
    Empty bins are omitted.
    """
    if len(series) < 2:
        raise ValueError("need at least two grid points")
    if not 0 < pmax <= 0.5:
        raise ValueError("pmax must be in (0, 0.5]")
    if n_bins < 1 or n_bins % 2 == 0:
        raise ValueError("n_bins must be odd")
    mids = np.asarray(series.mids, dtype=float)
    r = np.clip(mids[1:] / mids[:-1], 1.0 - pmax, 1.0 + pmax)
    width = 2.0 * pmax / n_bins
    idx = np.clip(np.floor((r - (1.0 - pmax)) / width).astype(np.int64), 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=r, minlength=n_bins)
    occ = counts > 0
    ratios = sums[occ] / counts[occ]
    probs = counts[occ] / counts.sum()
    return PriceChangeDistribution(series.step, ratios, probs, pmax)


def pair_stats(series: MidPriceSeries, window_ms: int = 50) -> PairStats:
    """Daily volatility of step log returns and lag-1 autocorrelation of
    non-overlapping ``window_ms`` log returns."""
    if len(series) < 3:
        raise ValueError("need at least three grid points")
    lr = np.diff(np.log(np.asarray(series.mids, dtype=float)))
    sd = float(np.std(lr, ddof=1))
    # differences of logs carry rounding noise of a few ulps of log(mid);
    # dispersion below that floor means the returns are constant
    floor = 16 * np.finfo(float).eps * max(1.0, float(np.abs(np.log(series.mids)).max()))
    if sd <= floor:
        sd = 0.0
    vol = sd * math.sqrt(MS_PER_DAY / series.step)
    k = max(1, round(window_ms / series.step))
    m = len(lr) // k
    agg = lr[: m * k].reshape(m, k).sum(axis=1) if m else np.zeros(0)
    if m < 3 or np.std(agg) <= floor * k:
        return PairStats(vol, 0.0, False)
    a, b = agg[:-1], agg[1:]
    rho = float(np.corrcoef(a, b)[0, 1])
    if not math.isfinite(rho):
        return PairStats(vol, 0.0, False)
    return PairStats(vol, rho, True)
