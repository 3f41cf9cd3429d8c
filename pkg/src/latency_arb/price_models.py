"""Price-change distributions and price-path generators.

Random streams use numpy's ``PCG64`` bit generator seeded through
``SeedSequence(seed, spawn_key=(index,))``, so each path index (for example
each simulated minute) gets an independent, reproducible stream.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

MS_PER_DAY = 86_400_000


@dataclass(frozen=True)
class PriceChangeDistribution:
    """Discrete pmf of the multiplicative price change over one step."""

    step_ms: int
    ratios: np.ndarray
    probs: np.ndarray
    pmax: float | None = None

    def __post_init__(self):
        ratios = np.asarray(self.ratios, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if ratios.ndim != 1 or ratios.shape != probs.shape or ratios.size == 0:
            raise ValueError("ratios and probs must be non-empty 1-d arrays of equal length")
        if np.any(ratios <= 0) or np.any(np.diff(ratios) <= 0):
            raise ValueError("ratios must be positive and strictly increasing")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probs must be non-negative and sum to 1 (sum={probs.sum()!r})")
        if self.pmax is not None:
            tol = 1e-12
            if ratios[0] < 1 - self.pmax - tol or ratios[-1] > 1 + self.pmax + tol:
                raise ValueError("ratios must lie in [1 - pmax, 1 + pmax]")
        ratios.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "ratios", ratios)
        object.__setattr__(self, "probs", probs)

    def mean(self) -> float:
        return float(np.dot(self.probs, self.ratios))

    def mean_sqrt(self) -> float:
        return float(np.dot(self.probs, np.sqrt(self.ratios)))

    def log_ratios(self) -> np.ndarray:
        return np.log(self.ratios)

    def to_json(self) -> str:
        doc = {
            "step_ms": int(self.step_ms),
            "pmax": float(self.pmax if self.pmax is not None else np.max(np.abs(self.ratios - 1))),
            "bins": [{"ratio": float(r), "prob": float(q)} for r, q in zip(self.ratios, self.probs)],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "PriceChangeDistribution":
        doc = json.loads(text)
        bins = doc["bins"]
        ratios = np.array([b["ratio"] for b in bins], dtype=float)
        probs = np.array([b["prob"] for b in bins], dtype=float)
        # JSON floats round-trip exactly; renormalize only to absorb writer-side drift
        probs = probs / probs.sum()
        return cls(int(doc["step_ms"]), ratios, probs, float(doc["pmax"]))


@dataclass(frozen=True)
class GbmParams:
    sigma_daily: float
    drift: float | None = None

    def __post_init__(self):
        if not self.sigma_daily >= 0:
            raise ValueError("sigma_daily must be non-negative")

    def step_sigma(self, step_ms: float) -> float:
        return self.sigma_daily * math.sqrt(step_ms / MS_PER_DAY)

    def step_drift(self, step_ms: float) -> float:
        if self.drift is not None:
            return self.drift
        s = self.step_sigma(step_ms)
        return -0.5 * s * s


@dataclass(frozen=True)
class PricePath:
    step_ms: int
    ratios: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.ratios)


def gbm_distribution_on_grid(
    params: GbmParams,
    step_ms: int,
    log_step: float,
    n_points: int,
    exact_mean: bool = True,
    match_sqrt_mean: bool = True,
) -> PriceChangeDistribution:
    """GBM step distribution supported on ``exp(k * log_step)``, ``|k| <= n//2``.

    Each support point takes the normal probability of the log-return cell
    around it; the two outer cells extend to infinity. With the default
    drift and ``exact_mean`` the location of that normal is tuned so the
    discrete mean is 1 to rounding. ``match_sqrt_mean`` also tunes its
    scale so that ``E[sqrt(ratio)]`` equals the continuous value
    ``exp(-sigma^2 step / 8)``; cell discretization otherwise inflates the
    log variance by about ``log_step**2 / 12``.
    """
    if n_points < 3 or n_points % 2 == 0:
        raise ValueError("n_points must be an odd integer >= 3")
    if not log_step > 0:
        raise ValueError("log_step must be positive")
    half = n_points // 2
    k = np.arange(-half, half + 1)
    xs = k * log_step
    ratios = np.exp(xs)
    pmax = float(max(ratios[-1] - 1.0, 1.0 - ratios[0]))
    sigma = params.step_sigma(step_ms)
    if sigma == 0.0:
        probs = np.zeros(n_points)
        probs[half] = 1.0
        return PriceChangeDistribution(step_ms, ratios, probs, pmax)

    edges = (xs[:-1] + xs[1:]) / 2.0
    em1 = np.expm1(xs)
    em1_half = np.expm1(xs / 2.0)

    def probs_for(mu: float, scale: float) -> np.ndarray:
        cdf = special.ndtr((edges - mu) / scale)
        p = np.diff(np.concatenate(([0.0], cdf, [1.0])))
        p = np.clip(p, 0.0, None)
        return p / p.sum()

    mu = params.step_drift(step_ms)
    clamped = special.ndtr((edges[0] - mu) / sigma) + special.ndtr(-(edges[-1] - mu) / sigma)
    if clamped > 0.01:
        warnings.warn(f"{clamped:.2%} of the GBM step mass lies beyond the support edges", stacklevel=2)
    if not (exact_mean and params.drift is None):
        return PriceChangeDistribution(step_ms, ratios, probs_for(mu, sigma), pmax)

    tight = dict(xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)

    def mean_one_mu(scale: float) -> float | None:
        # the mean is increasing in mu; bracket around the continuous correction
        def excess(m):
            return float(np.dot(probs_for(m, scale), em1))

        lo, hi = mu - 4 * scale, mu + 4 * scale
        if not excess(lo) < 0 < excess(hi):
            return None
        return optimize.brentq(excess, lo, hi, **tight)

    scale = sigma
    m0 = mean_one_mu(sigma)
    if m0 is not None:
        mu = m0
    if match_sqrt_mean:
        target = math.expm1(-sigma * sigma / 8.0)

        def sqrt_gap(sc: float) -> float:
            m = mean_one_mu(sc)
            if m is None:
                # all mass sits on the centre point
                return -target
            return float(np.dot(probs_for(m, sc), em1_half)) - target

        # the gap falls as the scale widens; bracket its sign change around sigma
        lo = hi = sigma
        g_lo = g_hi = sqrt_gap(sigma)
        while g_lo <= 0 and lo > sigma / 64:
            hi, g_hi = lo, g_lo
            lo /= 2.0
            g_lo = sqrt_gap(lo)
        while g_hi > 0 and hi < 4096 * sigma:
            lo, g_lo = hi, g_hi
            hi *= 2.0
            g_hi = sqrt_gap(hi)
        m1 = None
        if g_lo > 0 > g_hi:
            sc = optimize.brentq(sqrt_gap, lo, hi, **tight)
            m1 = mean_one_mu(sc)
        if m1 is not None:
            mu, scale = m1, sc
        else:
            warnings.warn("could not match E[sqrt(ratio)] on this support; using the cell discretization", stacklevel=2)
    return PriceChangeDistribution(step_ms, ratios, probs_for(mu, scale), pmax)


def gbm_distribution(
    params: GbmParams, step_ms: int = 10, pmax: float = 0.01, n_points: int = 201, exact_mean: bool = True
) -> PriceChangeDistribution:
    """GBM step distribution on log-spaced ratios spanning ``[1/(1+pmax), 1+pmax]``."""
    if not 0 < pmax < 1:
        raise ValueError("pmax must be in (0, 1)")
    if n_points < 3 or n_points % 2 == 0:
        raise ValueError("n_points must be an odd integer >= 3")
    log_step = math.log1p(pmax) / (n_points // 2)
    dist = gbm_distribution_on_grid(params, step_ms, log_step, n_points, exact_mean)
    return PriceChangeDistribution(dist.step_ms, dist.ratios, dist.probs, pmax)


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator for path ``index`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def sample_path(dist: PriceChangeDistribution, n_steps: int, seed: int, index: int = 0) -> PricePath:
    """I.i.d. draws from ``dist``."""
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    rng = stream(seed, index)
    idx = rng.choice(len(dist.ratios), size=n_steps, p=dist.probs)
    return PricePath(dist.step_ms, dist.ratios[idx].copy(), seed)


def gbm_path(params: GbmParams, step_ms: int, n_steps: int, seed: int, index: int = 0) -> PricePath:
    """Exact log-normal GBM increments (no discretization of the step law)."""
    rng = stream(seed, index)
    sigma = params.step_sigma(step_ms)
    z = rng.standard_normal(n_steps)
    return PricePath(step_ms, np.exp(params.step_drift(step_ms) + sigma * z), seed)


def mean_reverting_path(
    sigma_step: float, kappa: float, n_steps: int, seed: int, step_ms: int = 10, index: int = 0
) -> PricePath:
    """Log returns following ``r[t] = -kappa * r[t-1] + sigma_step * z[t]``.

    This AR(1) return model is our own choice for mean-reverting
    experiments; lag-1 return autocorrelation is ``-kappa``.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ValueError("kappa must be in [0, 1]")
    if sigma_step < 0:
        raise ValueError("sigma_step must be non-negative")
    rng = stream(seed, index)
    z = rng.standard_normal(n_steps)
    if sigma_step == 0.0 or n_steps == 0:
        return PricePath(step_ms, np.ones(n_steps), seed)
    from scipy.signal import lfilter

    r = lfilter([1.0], [1.0, kappa], sigma_step * z)
    return PricePath(step_ms, np.exp(r), seed)


def minute_paths(draw, n_minutes: int, n_steps: int, seed: int) -> np.ndarray:
    """Stack ``draw(n_steps, seed, index)`` ratio rows for each minute index.

    Each row uses its own stream, so any subset of minutes can be
    regenerated independently.
    """
    out = np.empty((n_minutes, n_steps))
    for i in range(n_minutes):
        out[i] = draw(n_steps, seed, i).ratios
    return out
