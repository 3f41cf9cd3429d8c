"""Closed-form arbitrage quantities for a constant-product pool.

Prices are expressed as the ratio ``p`` of the external price to the pool's
marginal price. Fees are charged on the input side and are not added to the
reserves, so the post-trade marginal price (with fee) equals the external
price exactly.

Relative profits are fractions of the pool value ``2Y`` measured at the
pool price before the trade.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

P_MIN = 1e-6
P_MAX = 1e6


class DomainError(ValueError):
    """Raised for prices, fees or reserves outside their valid domain."""


def _check_fee(f: float) -> None:
    if not (0.0 <= f < 1.0) or math.isnan(f):
        raise DomainError(f"fee must be in [0, 1), got {f!r}")


def _check_ratio(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < P_MIN) or np.any(arr > P_MAX):
        raise DomainError(f"price ratio must be in [{P_MIN}, {P_MAX}], got {p!r}")
    return arr


def _out(arr: np.ndarray, like):
    if np.ndim(like) == 0:
        return float(arr)
    return arr


def band(f: float) -> tuple[float, float]:
    """Closed no-arbitrage interval ``[1 - f, 1 / (1 - f)]``."""
    _check_fee(f)
    return 1.0 - f, 1.0 / (1.0 - f)


def p_arb(p, f: float):
    """Price ratio left after the maximal arbitrage trade."""
    _check_fee(f)
    arr = _check_ratio(p)
    lo, hi = 1.0 - f, 1.0 / (1.0 - f)
    res = np.where(arr > hi, hi, np.where(arr < lo, lo, arr))
    return _out(res, p)


def arb_profit(p, f: float):
    """Maximal arbitrage profit as a fraction of the pool value.

    Evaluated as a half square, ``0.5 * (sqrt(p) - 1/sqrt(1-f))**2`` above the
    band, with the difference rewritten through ``p*(1-f) - 1 = (p-1) - p*f``
    so that it keeps full relative precision near the band edges.
    """
    _check_fee(f)
    arr = _check_ratio(p)
    lo, hi = 1.0 - f, 1.0 / (1.0 - f)
    g = 1.0 - f
    sg = math.sqrt(g)
    pm1 = arr - 1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        # sqrt(p) - 1/sqrt(g) = (p g - 1) / (sqrt(g) (sqrt(p g) + 1))
        d_up = (pm1 - arr * f) / (sg * (np.sqrt(arr * g) + 1.0))
        # sqrt(p/g) - 1 = (p - g) / (g (sqrt(p/g) + 1))
        d_down = (pm1 + f) / (g * (np.sqrt(arr / g) + 1.0))
    res = np.where(arr > hi, 0.5 * d_up * d_up, np.where(arr < lo, 0.5 * d_down * d_down, 0.0))
    return _out(res, p)


def pool_val_factor(p, f: float):
    """Factor by which the pool value (at pool price) changes after the trade."""
    _check_fee(f)
    arr = _check_ratio(p)
    res = np.sqrt(arr / np.asarray(p_arb(arr, f)))
    return _out(res, p)


def log_profit(x, band_log: float):
    """Profit and pool-value factor as functions of the log price ratio.

    ``band_log`` is ``-log(1 - f)``. Returns ``(profit, pool_val, x_after)``
    arrays; points on or inside the band give ``(0, 1, x)``. Used by the
    solver and the simulators, which work in log prices.
    """
    x = np.asarray(x, dtype=float)
    b = band_log
    up = x > b
    down = x < -b
    profit = np.zeros_like(x)
    pool_val = np.ones_like(x)
    x_after = x.copy()
    if np.any(up):
        e = np.expm1((x[up] - b) / 2.0)
        profit[up] = 0.5 * math.exp(b) * e * e
        pool_val[up] = np.exp((x[up] - b) / 2.0)
        x_after[up] = b
    if np.any(down):
        e = np.expm1((x[down] + b) / 2.0)
        profit[down] = 0.5 * e * e
        pool_val[down] = np.exp((x[down] + b) / 2.0)
        x_after[down] = -b
    return profit, pool_val, x_after


@dataclass(frozen=True)
class PoolState:
    x: float
    y: float

    def __post_init__(self):
        if not (self.x > 0 and self.y > 0) or not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DomainError(f"reserves must be positive and finite, got ({self.x}, {self.y})")

    @property
    def price(self) -> float:
        return self.y / self.x

    def value(self, price: float | None = None) -> float:
        """Pool value in numéraire at ``price`` (defaults to the pool price)."""
        if price is None:
            price = self.price
        return self.x * price + self.y


@dataclass(frozen=True)
class ArbTrade:
    """Result of the maximal arbitrage trade.

    ``dx`` is the risky asset taken out of the pool by the arbitrageur
    (negative when selling into the pool, including the fee), ``dy`` the
    numéraire paid to the pool (negative when received).
    """

    dx: float
    dy: float
    new_x: float
    new_y: float
    profit_abs: float

    @property
    def is_zero(self) -> bool:
        return self.dx == 0.0 and self.dy == 0.0


def maximal_trade(pool: PoolState, p_ext: float, f: float) -> ArbTrade:
    """Explicit maximal arbitrage trade against ``pool`` at external price ``p_ext``.

    Reserve changes are formed from ``u - 1`` (or ``1 - v``) computed without
    cancellation, and ``profit_abs`` is ``dx * p_ext - dy`` in its factored
    form ``Y (u-1)^2 / (1-f)`` (resp. ``Y (1-v)^2``), which stays accurate
    for gaps just outside the band.
    """
    _check_fee(f)
    if not (p_ext > 0 and math.isfinite(p_ext)):
        raise DomainError(f"external price must be positive, got {p_ext!r}")
    X, Y = pool.x, pool.y
    r = p_ext / pool.price
    _check_ratio(r)
    g = 1.0 - f
    # classify on the ratio, exactly as p_arb does, so both agree on the band
    if r > 1.0 / g:
        u = math.sqrt(g * r)
        um1 = ((r - 1.0) - r * f) / (u + 1.0)
        dx = X * um1 / u
        dy = Y * um1 / g
        new_x, new_y = X - dx, Y * u
        profit = Y * um1 * um1 / g
    elif r < g:
        v = math.sqrt(r / g)
        omv = ((1.0 - r) - f) / (g * (1.0 + v))
        dx = -X * omv / (v * g)
        dy = -Y * omv
        new_x, new_y = X / v, Y * v
        profit = Y * omv * omv
    else:
        return ArbTrade(0.0, 0.0, X, Y, 0.0)
    if not profit > 0.0:
        return ArbTrade(0.0, 0.0, X, Y, 0.0)
    return ArbTrade(dx, dy, new_x, new_y, profit)
