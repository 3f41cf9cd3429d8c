"""Fee-capture game for labeled time-advantaged trades (no trading fee).

The pool lets the advantaged arbitrageur move its marginal price to any
``P1`` but keeps an ``alpha`` share of the standard arbitrage loss. The
arbitrageur picks ``P1`` to maximize profit at the true price ``P``.

The arbitrageur profit used here is derived directly from the adapted
reserves, ``(X - X1) * P - (Y1 - Y)``; its leading coefficient is
``1 - alpha/2``, which is what reproduces the ``alpha = 1`` outcome.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .cpmm import DomainError, PoolState


@dataclass(frozen=True)
class CaptureParams:
    alpha: float
    p: float
    pool: PoolState

    def __post_init__(self):
        _check(self.p, self.alpha)


@dataclass(frozen=True)
class CaptureOutcome:
    alpha: float
    p: float
    p1_star: float
    arb_profit_abs: float
    pool_capture_abs: float
    unrealized_abs: float
    map_abs: float


def _check(p, alpha):
    if not (0.0 <= alpha <= 1.0):
        raise DomainError(f"alpha must be in [0, 1], got {alpha!r}")
    if not (p > 0 and math.isfinite(p)):
        raise DomainError(f"price ratio must be positive, got {p!r}")


def adapted_reserves(pool: PoolState, p1: float, alpha: float) -> tuple[float, float]:
    """Reserves after a labeled trade that moves the marginal price to ``p1 * P0``."""
    _check(p1, alpha)
    X, Y = pool.x, pool.y
    P1 = p1 * pool.price
    x1 = (1 - alpha) * math.sqrt(X * Y / P1) + 0.5 * alpha * (X + Y / P1)
    y1 = (1 - alpha) * math.sqrt(X * Y * P1) + 0.5 * alpha * (X * P1 + Y)
    assert x1 > 0 and y1 > 0
    return x1, y1


def arbitrageur_profit(p: float, p1: float, alpha: float) -> float:
    """Arbitrageur profit in units of ``Y`` for target ``p1`` at true ratio ``p``.

    Expanded form::

        (1 - a/2) p - (a/2) p/p1 - (1 - a) p/sqrt(p1) - (1 - a) sqrt(p1) - (a/2) p1 + (1 - a/2)

    evaluated in the factored form ``(1-a)(u-1)(p-u)/u + (a/2)(p1-1)(p-p1)/p1``
    with ``u = sqrt(p1)``, which keeps full relative precision for small gaps.
    """
    _check(p, alpha)
    _check(p1, alpha)
    u = math.sqrt(p1)
    um1 = (p1 - 1.0) / (u + 1.0)
    # p - u as (p - p1) + u (u - 1): no cancellation when p1 is close to p
    pmu = (p - p1) + u * um1
    return (1.0 - alpha) * um1 * pmu / u + 0.5 * alpha * (p1 - 1.0) * (p - p1) / p1


def _stationarity(p1, p, alpha):
    h = 0.5 * alpha
    g = 0.5 * (1.0 - alpha)
    return h * p / (p1 * p1) + g * p / p1**1.5 - g / math.sqrt(p1) - h


def best_response(p: float, alpha: float) -> float:
    """Profit-maximizing target ratio for the advantaged arbitrageur.

    Solves the first-order condition on ``(1, p]`` by bracketed Brent
    iteration; for ``p < 1`` the problem is mirrored through ``1/p``.
    """
    _check(p, alpha)
    if p == 1.0:
        return 1.0
    if p < 1.0:
        return 1.0 / best_response(1.0 / p, alpha)
    hi = _stationarity(p, p, alpha)
    if hi >= 0.0:
        return p
    return optimize.brentq(_stationarity, 1.0, p, args=(p, alpha), xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def maximal_arbitrage_profit(pool: PoolState, P: float) -> float:
    """``X P - 2 sqrt(X Y P) + Y``: fee-less standard arbitrage profit at price ``P``."""
    return (math.sqrt(pool.x * P) - math.sqrt(pool.y)) ** 2


def capture_split(p: float, alpha: float, pool: PoolState | None = None) -> CaptureOutcome:
    """Split of the maximal arbitrage value at true ratio ``p``.

    All amounts are numéraire valued at the true price. Pool capture is the
    remainder ``MAP - arb - unrealized``.
    """
    _check(p, alpha)
    pool = pool or PoolState(1.0, 1.0)
    P = p * pool.price
    map_abs = pool.y * ((p - 1.0) / (math.sqrt(p) + 1.0)) ** 2
    if p == 1.0:
        return CaptureOutcome(alpha, p, 1.0, 0.0, 0.0, 0.0, 0.0)
    p1 = best_response(p, alpha)
    if p > 1.0:
        arb = pool.y * arbitrageur_profit(p, p1, alpha)
        x1, y1 = adapted_reserves(pool, p1, alpha)
    else:
        # mirror: swap the roles of the two assets, then value back at P
        mirror = PoolState(pool.y, pool.x)
        x1m, y1m = adapted_reserves(mirror, 1.0 / p1, alpha)
        x1, y1 = y1m, x1m
        arb = pool.x * arbitrageur_profit(1.0 / p, 1.0 / p1, alpha) * P
    unrealized = maximal_arbitrage_profit(PoolState(x1, y1), P)
    return CaptureOutcome(alpha, p, p1, arb, map_abs - arb - unrealized, unrealized, map_abs)


@dataclass(frozen=True)
class SweepResult:
    outcomes: list[CaptureOutcome]

    @property
    def argmax_pool_alpha(self) -> float:
        best = max(self.outcomes, key=lambda o: o.pool_capture_abs)
        return best.alpha


def alpha_sweep(p: float, alphas, pool: PoolState | None = None) -> SweepResult:
    alphas = list(alphas)
    if not alphas:
        raise ValueError("alpha grid is empty")
    return SweepResult([capture_split(p, float(a), pool) for a in alphas])


SWEEP_HEADER = ["alpha", "p", "p1_star", "arb_share", "pool_share", "unrealized_share", "map"]


def sweep_rows(result: SweepResult):
    for o in result.outcomes:
        m = o.map_abs
        shares = (o.arb_profit_abs / m, o.pool_capture_abs / m, o.unrealized_abs / m) if m > 0 else (0.0, 0.0, 0.0)
        yield [repr(o.alpha), repr(o.p), repr(o.p1_star), *(repr(float(s)) for s in shares), repr(m)]
