import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from latency_arb.price_models import (
    GbmParams,
    PriceChangeDistribution,
    gbm_distribution,
    gbm_distribution_on_grid,
    gbm_path,
    mean_reverting_path,
    minute_paths,
    sample_path,
    stream,
)


def lag1(x):
    return float(np.corrcoef(x[:-1], x[1:])[0, 1])


class TestDistribution:
    def test_validation(self):
        with pytest.raises(ValueError):
            PriceChangeDistribution(10, [1.0, 0.9], [0.5, 0.5])
        with pytest.raises(ValueError):
            PriceChangeDistribution(10, [0.9, 1.1], [0.5, 0.6])
        with pytest.raises(ValueError):
            PriceChangeDistribution(10, [0.9, 1.1], [0.5, 0.5], pmax=0.05)

    def test_json_round_trip(self):
        d = gbm_distribution(GbmParams(0.042))
        back = PriceChangeDistribution.from_json(d.to_json())
        np.testing.assert_array_equal(back.ratios, d.ratios)
        np.testing.assert_allclose(back.probs, d.probs, rtol=1e-15)
        doc = json.loads(d.to_json())
        assert set(doc) == {"step_ms", "pmax", "bins"}
        assert set(doc["bins"][0]) == {"ratio", "prob"}


class TestGbmDistribution:
    def test_zero_volatility_is_point_mass(self):
        d = gbm_distribution(GbmParams(0.0))
        assert d.probs[d.ratios == 1.0].item() == 1.0
        assert d.probs.sum() == 1.0

    @pytest.mark.parametrize("sigma", [0.01, 0.02, 0.042, 0.07, 0.10])
    def test_mean_one(self, sigma):
        d = gbm_distribution(GbmParams(sigma))
        assert abs(d.probs.sum() - 1.0) <= 1e-12
        assert abs(d.mean() - 1.0) <= 1e-6
        assert np.all(d.ratios >= 1 - d.pmax - 1e-15) and np.all(d.ratios <= 1 + d.pmax + 1e-15)

    def test_mean_sqrt_closed_form(self):
        g = GbmParams(0.042)
        d = gbm_distribution(g, step_ms=10)
        s = g.step_sigma(10)
        assert abs(d.mean_sqrt() - math.exp(-s * s / 8)) <= 1e-8

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.01, 0.10), st.sampled_from([11, 21, 41]))
    def test_grid_version_is_mean_one_and_moments_match(self, sigma, half):
        g = GbmParams(sigma)
        s = g.step_sigma(10)
        h = 8 * s / half
        d = gbm_distribution_on_grid(g, 10, h, 2 * half + 1)
        assert abs(d.mean() - 1.0) <= 1e-13
        # cell discretization of a normal: variance within Sheppard-size error of the continuous one
        var = float(np.dot(d.probs, d.log_ratios() ** 2) - np.dot(d.probs, d.log_ratios()) ** 2)
        assert var == pytest.approx(s * s, rel=0.05)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.001, 1.0), st.sampled_from([(0.003, 21), (0.01, 201), (0.0105, 1001)]))
    def test_sqrt_mean_matches_lognormal(self, sigma, support):
        # on any support, coarse or fine, E[sqrt ratio] equals the log-normal value
        g = GbmParams(sigma)
        s = g.step_sigma(10)
        pmax, n = support
        d = gbm_distribution(g, 10, pmax, n)
        e_half = float(np.dot(d.probs, np.expm1(d.log_ratios() / 2)))
        assert e_half == pytest.approx(math.expm1(-s * s / 8), rel=1e-7, abs=0)
        assert abs(d.mean() - 1.0) <= 1e-15

    def test_plain_cells_without_matching(self):
        g = GbmParams(0.042)
        s = g.step_sigma(10)
        h = s / 2
        plain = gbm_distribution_on_grid(g, 10, h, 41, match_sqrt_mean=False)
        matched = gbm_distribution_on_grid(g, 10, h, 41)
        var = lambda d: float(np.dot(d.probs, d.log_ratios() ** 2))
        # cell rounding adds about h^2/12 of log variance; matching removes it
        assert var(plain) - s * s == pytest.approx(h * h / 12, rel=0.05)
        assert var(matched) == pytest.approx(s * s, rel=1e-3)

    def test_mass_beyond_support_warns(self):
        with pytest.warns(UserWarning, match="beyond the support"):
            gbm_distribution(GbmParams(20.0), step_ms=10_000, pmax=0.01, n_points=5)

    def test_bad_points(self):
        with pytest.raises(ValueError):
            gbm_distribution(GbmParams(0.042), n_points=4)


class TestSamplePath:
    def test_empty(self):
        d = gbm_distribution(GbmParams(0.042))
        assert len(sample_path(d, 0, seed=1)) == 0

    def test_point_mass(self):
        d = PriceChangeDistribution(10, [1.001], [1.0])
        np.testing.assert_array_equal(sample_path(d, 50, seed=3).ratios, np.full(50, 1.001))

    def test_deterministic(self):
        d = gbm_distribution(GbmParams(0.042))
        a = sample_path(d, 1000, seed=9, index=4).ratios
        b = sample_path(d, 1000, seed=9, index=4).ratios
        c = sample_path(d, 1000, seed=9, index=5).ratios
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_total_variation_converges(self):
        d = PriceChangeDistribution(10, [0.99, 0.995, 1.0, 1.005, 1.01], [0.1, 0.2, 0.4, 0.2, 0.1])
        path = sample_path(d, 1_000_000, seed=11)
        idx = np.searchsorted(d.ratios, path.ratios)
        emp = np.bincount(idx, minlength=len(d.ratios)) / len(path)
        assert 0.5 * np.abs(emp - d.probs).sum() < 0.01

    def test_streams_are_independent_of_count(self):
        a = stream(5, 2).standard_normal(10)
        rows = minute_paths(lambda n, s, i: gbm_path(GbmParams(0.042), 10, n, s, i), 3, 10, 5)
        g = GbmParams(0.042)
        np.testing.assert_allclose(np.log(rows[2]), g.step_drift(10) + g.step_sigma(10) * a, rtol=0, atol=1e-15)


class TestGbmPath:
    def test_log_return_moments(self):
        g = GbmParams(0.042)
        r = np.log(gbm_path(g, 10, 200_000, seed=2).ratios)
        s = g.step_sigma(10)
        assert np.std(r) == pytest.approx(s, rel=0.01)
        assert abs(np.mean(r) - g.step_drift(10)) < 5 * s / math.sqrt(len(r))


class TestMeanReverting:
    def test_kappa_zero_is_iid(self):
        p = mean_reverting_path(1e-4, 0.0, 200_000, seed=4)
        r = np.log(p.ratios)
        assert abs(lag1(r)) < 0.01
        assert np.std(r) == pytest.approx(1e-4, rel=0.01)

    def test_kappa_015_autocorrelation(self):
        r = np.log(mean_reverting_path(1e-4, 0.15, 200_000, seed=4).ratios)
        assert lag1(r) == pytest.approx(-0.15, abs=0.02)

    @pytest.mark.parametrize("kappa", [0.05, 0.3, 0.6])
    def test_positive_kappa_negative_autocorrelation(self, kappa):
        r = np.log(mean_reverting_path(1e-4, kappa, 100_000, seed=8).ratios)
        assert lag1(r) < 0

    def test_zero_sigma_constant(self):
        np.testing.assert_array_equal(mean_reverting_path(0.0, 0.15, 100, seed=1).ratios, np.ones(100))

    def test_recursion(self):
        p = mean_reverting_path(1e-4, 0.3, 50, seed=6)
        z = stream(6, 0).standard_normal(50) * 1e-4
        r = np.empty(50)
        prev = 0.0
        for i in range(50):
            prev = -0.3 * prev + z[i]
            r[i] = prev
        np.testing.assert_allclose(np.log(p.ratios), r, rtol=0, atol=1e-15)

    def test_range(self):
        with pytest.raises(ValueError):
            mean_reverting_path(1e-4, 1.5, 10, seed=0)
