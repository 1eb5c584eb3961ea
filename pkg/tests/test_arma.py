import numpy as np
import pytest

from nowbench.arma import ArmaModel, auto_order, fit_arma, forecast, _css_residuals
from nowbench.errors import EstimationError


def simulate_ar1(seed, T=2000, phi=0.8, const=0.0):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(T + 50)
    y = np.zeros(T + 50)
    for t in range(1, T + 50):
        y[t] = const + phi * y[t - 1] + e[t]
    return y[50:]


class TestFitArma:
    def test_ar1_recovery(self):
        m = fit_arma(simulate_ar1(0), 1, 0)
        assert 0.7 <= m.ar[0] <= 0.9

    def test_degenerate_white_noise_orders(self, rng):
        y = rng.standard_normal(500)
        m = fit_arma(y, 0, 0)
        assert m.const == pytest.approx(y.mean())
        assert m.sigma2 == pytest.approx(y.var())

    def test_constant_series_raises(self):
        with pytest.raises(EstimationError):
            fit_arma(np.full(100, 1.5), 0, 0)

    def test_missing_values_rejected(self):
        y = np.ones(100)
        y[3] = np.nan
        with pytest.raises(EstimationError):
            fit_arma(y, 1, 0)

    def test_too_short_rejected(self):
        with pytest.raises(EstimationError, match="at least"):
            fit_arma(np.arange(15.0), 1, 1)

    def test_css_local_minimum(self):
        y = simulate_ar1(7, T=800)
        m = fit_arma(y, 1, 1)
        theta = np.array([m.const, m.ar[0], m.ma[0]])

        def css(t):
            e = _css_residuals(y, t[0], t[1:2], t[2:3])
            return e @ e

        base = css(theta)
        for i in range(3):
            for delta in (-1e-4, 1e-4):
                bumped = theta.copy()
                bumped[i] += delta
                assert css(bumped) >= base - 1e-9


class TestAutoOrder:
    def test_white_noise_prefers_empty_model(self):
        hits = sum(auto_order(np.random.default_rng(s).standard_normal(2000), 2, 2) == (0, 0) for s in range(20))
        assert hits >= 14  # >= 70% of 20 seeds

    def test_ar1_detected(self):
        hits = sum(auto_order(simulate_ar1(1000 + s), 2, 2)[0] >= 1 for s in range(20))
        assert hits >= 18  # >= 90% of 20 seeds

    def test_single_candidate(self, rng):
        assert auto_order(rng.standard_normal(300), 0, 0) == (0, 0)

    def test_aic_prefers_true_order_on_average(self):
        # over-specified AR(2) and AR(3) should lose to AR(1) on average
        diffs2, diffs3 = [], []
        for s in range(20):
            y = simulate_ar1(2000 + s, T=1000)
            base = fit_arma(y, 1, 0, n_condition=3).aic
            diffs2.append(base - fit_arma(y, 2, 0, n_condition=3).aic)
            diffs3.append(base - fit_arma(y, 3, 0, n_condition=3).aic)
        assert np.mean(diffs2) < 0
        assert np.mean(diffs3) < 0


class TestForecast:
    def test_mean_model_forecasts_constant(self, rng):
        m = fit_arma(rng.standard_normal(200) + 2.0, 0, 0)
        np.testing.assert_allclose(forecast(m, np.zeros(10), 4), np.full(4, m.const))

    def test_ar1_closed_form(self):
        m = ArmaModel(1, 0, 0.0, np.array([0.8]), np.empty(0), 1.0, 0.0, 0.0)
        f = forecast(m, np.array([0.0, 1.0]), 2)
        assert f[0] == pytest.approx(0.8)
        assert f[1] == pytest.approx(0.64)

    def test_long_run_converges_to_unconditional_mean(self):
        m = fit_arma(simulate_ar1(5, T=1500, const=0.5), 1, 0)
        f = forecast(m, simulate_ar1(5, T=100), 200)
        assert abs(f[-1] - m.unconditional_mean()) < 1e-6

    def test_bad_horizon(self):
        m = ArmaModel(0, 0, 0.0, np.empty(0), np.empty(0), 1.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            forecast(m, np.zeros(5), 0)
