"""Latency arbitrage on constant-product pools: pool math, optimal timing,
ordering-regime simulation and fee-capture analysis."""

from .cpmm import DomainError, PoolState, arb_profit, band, maximal_trade, p_arb, pool_val_factor
from .price_models import GbmParams, PriceChangeDistribution, gbm_distribution, gbm_path, mean_reverting_path
from .dp_policy import Action, DpConfig, PolicyTables, decide, solve
from .regime_sim import Regime, RegimeConfig, RegimeReport, simulate
from .capture_game import alpha_sweep, best_response, capture_split

__version__ = "0.1.0"

__all__ = [
    "Action",
    "DomainError",
    "DpConfig",
    "GbmParams",
    "PolicyTables",
    "PoolState",
    "PriceChangeDistribution",
    "Regime",
    "RegimeConfig",
    "RegimeReport",
    "alpha_sweep",
    "arb_profit",
    "band",
    "best_response",
    "capture_split",
    "decide",
    "gbm_distribution",
    "gbm_path",
    "maximal_trade",
    "mean_reverting_path",
    "p_arb",
    "pool_val_factor",
    "simulate",
    "__version__",
]
