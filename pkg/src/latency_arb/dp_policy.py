"""Backward induction for the time-advantaged arbitrageur.

State is ``(p, t_w, t)``: price ratio, elapsed time in the advantage window
and elapsed time in the horizon. Values are fractions of the current pool
value. The price grid is uniform in ``log p``, symmetric around 1, and for a
positive fee its spacing is chosen so both band edges ``1 - f`` and
``1 / (1 - f)`` are grid nodes.

Transitions that leave the grid are valued as an immediate maximal
arbitrage at the landing price (profit plus scaled continuation from the
band edge). For a fee-less pool this boundary value equals the exact value
function, so the no-fee indifference result holds on every node.
"""

from __future__ import annotations

import enum
import io
import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .cpmm import log_profit
from .price_models import PriceChangeDistribution


# rounding noise in arb - wait stays within a few ulps of the values compared
TIE_RTOL = 256 * np.finfo(float).eps


class Action(enum.IntEnum):
    WAIT = 0
    ARB = 1


@dataclass(frozen=True)
class DpConfig:
    delta_ms: int = 10
    t_w_max_ms: int = 200
    horizon_ms: int = 60_000
    fee: float = 0.0005
    n_price: int = 201
    pmax_total: float = 0.003

    def __post_init__(self):
        if self.delta_ms <= 0 or self.t_w_max_ms <= 0 or self.horizon_ms <= 0:
            raise ValueError("time parameters must be positive")
        if self.t_w_max_ms % self.delta_ms or self.horizon_ms % self.delta_ms:
            raise ValueError("delta_ms must divide t_w_max_ms and horizon_ms")
        if not 0.0 <= self.fee < 1.0:
            raise ValueError("fee must be in [0, 1)")
        if self.n_price < 3 or self.n_price % 2 == 0:
            raise ValueError("n_price must be an odd integer >= 3")
        if not 0 < self.pmax_total < 1:
            raise ValueError("pmax_total must be in (0, 1)")
        if self.fee > 0 and self.band_steps >= self.n_price // 2:
            raise ValueError("price grid does not extend beyond the no-arbitrage band; raise pmax_total")

    @property
    def n_window(self) -> int:
        return self.t_w_max_ms // self.delta_ms

    @property
    def n_horizon(self) -> int:
        return self.horizon_ms // self.delta_ms

    @property
    def band_log(self) -> float:
        return -math.log1p(-self.fee)

    @property
    def band_steps(self) -> int:
        if self.fee == 0:
            return 0
        h0 = math.log1p(self.pmax_total) / (self.n_price // 2)
        return max(1, round(self.band_log / h0))

    @property
    def log_step(self) -> float:
        if self.fee == 0:
            return math.log1p(self.pmax_total) / (self.n_price // 2)
        return self.band_log / self.band_steps

    @property
    def log_grid(self) -> np.ndarray:
        half = self.n_price // 2
        return np.arange(-half, half + 1) * self.log_step

    @property
    def price_grid(self) -> np.ndarray:
        return np.exp(self.log_grid)


@dataclass
class SolveDiagnostics:
    max_abs_advantage: float = 0.0
    profitable_states: int = 0
    profitable_wait: int = 0
    min_wait_margin: float = math.inf
    offgrid_mass: float = 0.0

    @property
    def wait_fraction(self) -> float:
        if self.profitable_states == 0:
            return 1.0
        return self.profitable_wait / self.profitable_states


@dataclass
class PolicyTables:
    """Solved policy.

    ``action[t, i, w]`` holds the decision for horizon step ``t``, price node
    ``i`` and window step ``w``. ``values`` maps retained horizon steps to
    ``(n_price, n_window + 1)`` value layers; step 0 is always kept.
    """

    config: DpConfig
    action: np.ndarray
    values: dict[int, np.ndarray]
    diagnostics: SolveDiagnostics = field(default_factory=SolveDiagnostics)

    def layer(self, t_step: int) -> np.ndarray:
        try:
            return self.values[t_step]
        except KeyError:
            raise KeyError(
                f"value layer t={t_step * self.config.delta_ms} ms was not retained; solve with value_stride=1"
            ) from None

    @property
    def value0(self) -> np.ndarray:
        return self.values[0]


class _Model:
    """Precomputed per-node quantities and the transition operator."""

    def __init__(self, config: DpConfig, dist: PriceChangeDistribution):
        self.config = config
        xs = config.log_grid
        n = len(xs)
        half = n // 2
        m = config.band_steps
        b = config.band_log
        self.xs = xs
        self.e_hi = half + m
        self.e_lo = half - m
        k = np.arange(n) - half
        self.up = k > m
        self.down = k < -m
        self.inband = ~(self.up | self.down)
        profit, pool_val, _ = log_profit(xs, b)
        # classify by index so rounding in exp/log cannot move a node across the band edge
        profit[self.inband] = 0.0
        pool_val[self.inband] = 1.0
        pool_val[self.up] = np.exp((xs[self.up] - m * config.log_step) / 2.0)
        pool_val[self.down] = np.exp((xs[self.down] + m * config.log_step) / 2.0)
        self.profit = profit
        self.pool_val = pool_val

        h = config.log_step
        zs = dist.log_ratios()
        qs = dist.probs
        keep = qs > 0
        zs, qs = zs[keep], qs[keep]
        target = xs[:, None] + zs[None, :]
        pos = (target - xs[0]) / h
        near = np.rint(pos)
        aligned = np.abs(pos - near) < 1e-9
        pos = np.where(aligned, near, pos)
        lo_idx = np.floor(pos).astype(np.int64)
        frac = pos - lo_idx
        inside = (pos >= 0) & (pos <= n - 1)

        rows, cols, vals = [], [], []
        ii = np.broadcast_to(np.arange(n)[:, None], target.shape)
        qq = np.broadcast_to(qs[None, :], target.shape)
        sel = inside
        l = np.clip(lo_idx[sel], 0, n - 1)
        fr = frac[sel]
        rows.append(ii[sel]); cols.append(l); vals.append(qq[sel] * (1 - fr))
        nz = sel & (frac > 0)
        rows.append(ii[nz]); cols.append(np.clip(lo_idx[nz] + 1, 0, n - 1)); vals.append(qq[nz] * frac[nz])
        r = np.concatenate(rows); c = np.concatenate(cols); v = np.concatenate(vals)
        W = sparse.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
        W.sum_duplicates()
        if W.nnz > 0.05 * n * n:
            self.W = W.toarray()
        else:
            self.W = W

        out = ~inside
        off_profit, off_pool, _ = log_profit(np.where(out, target, 0.0), b)
        above = out & (target > xs[-1])
        below = out & (target < xs[0])
        self.c_off = np.sum(np.where(out, qq * off_profit, 0.0), axis=1)
        self.d_hi = np.sum(np.where(above, qq * off_pool, 0.0), axis=1)
        self.d_lo = np.sum(np.where(below, qq * off_pool, 0.0), axis=1)
        self.zs, self.qs = zs, qs

    def wait_layer(self, v_next: np.ndarray) -> np.ndarray:
        """Expected next-step value for window steps ``0 .. n_window-1``."""
        cont = self.c_off + self.d_hi * v_next[self.e_hi, 0] + self.d_lo * v_next[self.e_lo, 0]
        return self.W @ v_next[:, 1:] + cont[:, None]

    def arb_vector(self, wait: np.ndarray) -> np.ndarray:
        cont = np.where(self.up, wait[self.e_hi, 0], wait[self.e_lo, 0])
        arb = self.profit + self.pool_val * cont
        arb[self.inband] = wait[self.inband, 0]
        return arb


def _offgrid_mass(model: _Model) -> float:
    """Probability of leaving the grid within one window, starting at a band edge."""
    cfg = model.config
    h = cfg.log_step
    steps = np.rint(model.zs / h).astype(int)
    span = int(np.abs(steps).max()) * cfg.n_window
    size = 2 * span + 1
    pmf = np.zeros(size)
    pmf[span] = 1.0
    kernel = np.zeros(2 * int(np.abs(steps).max()) + 1)
    np.add.at(kernel, steps + int(np.abs(steps).max()), model.qs)
    for _ in range(cfg.n_window):
        pmf = np.convolve(pmf, kernel, mode="same")
    room = cfg.n_price // 2 - cfg.band_steps
    offs = np.arange(size) - span
    return float(pmf[offs > room].sum())


def solve(
    config: DpConfig,
    dist: PriceChangeDistribution,
    value_stride: int | None = None,
    tie_rtol: float = TIE_RTOL,
) -> PolicyTables:
    """Fill the policy tables backward from the end of the horizon.

    At interior states Arb is chosen only when its value exceeds the wait
    value by more than ``tie_rtol`` relative to the larger of the two; ties
    go to Wait. ``value_stride`` keeps every ``value_stride``-th value layer
    (``None`` keeps only ``t = 0``).
    """
    if dist.step_ms != config.delta_ms:
        raise ValueError(f"distribution step {dist.step_ms} ms != solver step {config.delta_ms} ms")
    model = _Model(config, dist)
    diag = SolveDiagnostics()
    diag.offgrid_mass = _offgrid_mass(model)
    if diag.offgrid_mass > 1e-6:
        warnings.warn(
            f"price grid clips the dynamics: {diag.offgrid_mass:.3g} of the mass leaves the grid "
            "within one window from the band edge",
            stacklevel=2,
        )
    n, nw, nt = config.n_price, config.n_window, config.n_horizon
    action = np.zeros((nt + 1, n, nw + 1), dtype=np.int8)
    values: dict[int, np.ndarray] = {}

    v = np.repeat(model.profit[:, None], nw + 1, axis=1)
    action[nt] = (model.profit > 0)[:, None]
    if value_stride and nt % value_stride == 0:
        values[nt] = v.copy()
    profitable = model.profit > 0
    n_prof = int(profitable.sum()) * nw

    for t in range(nt - 1, -1, -1):
        wait = model.wait_layer(v)
        arb = model.arb_vector(wait)
        adv = arb[:, None] - wait
        take = adv > tie_rtol * np.maximum(np.abs(wait), np.abs(arb)[:, None])
        v = np.empty((n, nw + 1))
        v[:, :nw] = np.where(take, arb[:, None], wait)
        v[:, nw] = arb
        action[t, :, :nw] = take
        action[t, :, nw] = Action.ARB
        diag.max_abs_advantage = max(diag.max_abs_advantage, float(np.abs(adv).max()))
        if n_prof:
            diag.profitable_states += n_prof
            diag.profitable_wait += int((~take[profitable]).sum())
            diag.min_wait_margin = min(diag.min_wait_margin, float(-adv[profitable].max()))
        if t == 0 or (value_stride and t % value_stride == 0):
            values[t] = v
    return PolicyTables(config, action, values, diag)


def _t_step(config: DpConfig, t_ms: float) -> int:
    k = round(t_ms / config.delta_ms)
    if not 0 <= k <= config.n_horizon or abs(k * config.delta_ms - t_ms) > 1e-9:
        raise ValueError(f"t={t_ms} ms is not a grid time in [0, {config.horizon_ms}]")
    return k


def _w_step(config: DpConfig, t_w_ms: float) -> int:
    k = round(t_w_ms / config.delta_ms)
    if not 0 <= k <= config.n_window or abs(k * config.delta_ms - t_w_ms) > 1e-9:
        raise ValueError(f"t_w={t_w_ms} ms is not a grid time in [0, {config.t_w_max_ms}]")
    return k


def value_at(tables: PolicyTables, p: float, t_w_ms: float, t_ms: float) -> float:
    """``opt(p, t_w, t)``: linear in log price on the grid, boundary rule outside."""
    cfg = tables.config
    layer = tables.layer(_t_step(cfg, t_ms))
    w = _w_step(cfg, t_w_ms)
    xs = cfg.log_grid
    x = math.log(p)
    if xs[0] <= x <= xs[-1]:
        return float(np.interp(x, xs, layer[:, w]))
    half = cfg.n_price // 2
    edge = half + cfg.band_steps if x > 0 else half - cfg.band_steps
    profit, pool_val, _ = log_profit(np.array([x]), cfg.band_log)
    return float(profit[0] + pool_val[0] * layer[edge, 0])


def wait_value(p: float, t_w_ms: float, t_ms: float, tables: PolicyTables, dist: PriceChangeDistribution) -> float:
    """Expected value of waiting one step from ``(p, t_w, t)``."""
    cfg = tables.config
    if t_ms >= cfg.horizon_ms or t_w_ms >= cfg.t_w_max_ms:
        raise ValueError("waiting requires t < T and t_w < T_w")
    d = cfg.delta_ms
    return float(sum(q * value_at(tables, p * r, t_w_ms + d, t_ms + d) for r, q in zip(dist.ratios, dist.probs) if q > 0))


def arb_value(p: float, t_w_ms: float, t_ms: float, tables: PolicyTables) -> float:
    """Immediate maximal arbitrage plus the scaled continuation from the band edge."""
    cfg = tables.config
    if t_ms >= cfg.horizon_ms:
        raise ValueError("arb_value requires t < T")
    x = math.log(p)
    b = cfg.band_log
    if -b <= x <= b:
        return value_at(tables, p, 0, t_ms)
    profit, pool_val, x_after = log_profit(np.array([x]), b)
    return float(profit[0] + pool_val[0] * value_at(tables, math.exp(x_after[0]), 0, t_ms))


def advantage_check(p: float, t_w_ms: float, t_ms: float, tables: PolicyTables, dist: PriceChangeDistribution) -> float:
    """``arb - wait``; positive means arbitraging now beats waiting."""
    return arb_value(p, t_w_ms, t_ms, tables) - wait_value(p, t_w_ms, t_ms, tables, dist)


def decide(tables: PolicyTables, p: float, t_w_ms: float, t_ms: float) -> Action:
    cfg = tables.config
    t = _t_step(cfg, t_ms)
    w = _w_step(cfg, t_w_ms)
    xs = cfg.log_grid
    x = math.log(p)
    profitable = abs(x) > cfg.band_log
    if x < xs[0] or x > xs[-1]:
        return Action.ARB if profitable else Action.WAIT
    i = int(np.clip(np.rint((x - xs[0]) / cfg.log_step), 0, cfg.n_price - 1))
    return Action(int(tables.action[t, i, w]))


def export_policy_csv(tables: PolicyTables, out, t_stride: int = 1) -> int:
    """Write ``p,t_w_ms,t_ms,value,action`` rows; value is blank for unretained layers."""
    cfg = tables.config
    ps = [float(p) for p in cfg.price_grid]
    rows = 0
    out.write("p,t_w_ms,t_ms,value,action\n")
    for t in range(0, cfg.n_horizon + 1, t_stride):
        layer = tables.values.get(t)
        act = tables.action[t]
        buf = io.StringIO()
        for i, p in enumerate(ps):
            for w in range(cfg.n_window + 1):
                val = "" if layer is None else repr(float(layer[i, w]))
                name = "arb" if act[i, w] else "wait"
                buf.write(f"{p!r},{w * cfg.delta_ms},{t * cfg.delta_ms},{val},{name}\n")
                rows += 1
        out.write(buf.getvalue())
    return rows


VALUE_MAGIC = b"LARBVAL1"


def write_values_binary(tables: PolicyTables, path) -> None:
    """Flat little-endian value dump.

    Layout: 8-byte magic ``LARBVAL1``; uint32 n_price, n_window+1, n_layers;
    float64 price grid [n_price]; int64 layer times in ms [n_layers];
    float64 values row-major [n_layers, n_price, n_window+1].
    """
    cfg = tables.config
    steps = sorted(tables.values)
    with open(path, "wb") as fh:
        fh.write(VALUE_MAGIC)
        fh.write(struct.pack("<III", cfg.n_price, cfg.n_window + 1, len(steps)))
        fh.write(cfg.price_grid.astype("<f8").tobytes())
        fh.write(np.array([s * cfg.delta_ms for s in steps], dtype="<i8").tobytes())
        for s in steps:
            fh.write(np.ascontiguousarray(tables.values[s], dtype="<f8").tobytes())


def read_values_binary(path):
    """Inverse of :func:`write_values_binary`: ``(price_grid, times_ms, values)``."""
    with open(path, "rb") as fh:
        if fh.read(8) != VALUE_MAGIC:
            raise ValueError("not a value-table file")
        n_price, n_w, n_layers = struct.unpack("<III", fh.read(12))
        grid = np.frombuffer(fh.read(8 * n_price), dtype="<f8")
        times = np.frombuffer(fh.read(8 * n_layers), dtype="<i8")
        vals = np.frombuffer(fh.read(8 * n_layers * n_price * n_w), dtype="<f8")
    return grid, times, vals.reshape(n_layers, n_price, n_w)


def gbm_step_distribution(params, config: DpConfig, n_sigma: float = 8.0):
    """GBM step pmf aligned with the solver's price grid.

    Support covers ``n_sigma`` step standard deviations (at least one grid
    step each side) and never exceeds the grid half-width.
    """
    from .price_models import gbm_distribution_on_grid

    h = config.log_step
    sig = params.step_sigma(config.delta_ms)
    half = max(1, min(config.n_price // 2, math.ceil(n_sigma * sig / h)))
    return gbm_distribution_on_grid(params, config.delta_ms, h, 2 * half + 1)
