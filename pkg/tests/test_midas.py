import numpy as np
import pytest

from nowbench.errors import DataError
from nowbench.midas import (
    MidasComponent,
    almon_weights,
    combination_weights,
    midas_combine,
    midas_fit_univariate,
)


class TestAlmonWeights:
    def test_uniform_at_zero(self):
        np.testing.assert_allclose(almon_weights(0.0, 0.0, 3), np.full(3, 1.0 / 3.0))

    def test_normalized_and_nonnegative(self, rng):
        for _ in range(1000):
            t1, t2 = rng.uniform(-2, 2, 2)
            L = int(rng.integers(1, 25))
            w = almon_weights(t1, t2, L)
            assert w.sum() == pytest.approx(1.0, abs=1e-12)
            assert (w >= 0).all()

    def test_positive_at_working_magnitudes(self, rng):
        # extreme theta*L^2 underflows to exactly zero in float64; at the
        # magnitudes the estimator explores, every lag keeps positive weight
        for _ in range(200):
            t1, t2 = rng.uniform(-0.5, 0.5, 2)
            w = almon_weights(t1, t2, int(rng.integers(1, 13)))
            assert (w > 0).all()

    def test_ratio_example(self):
        w = almon_weights(np.log(2.0), 0.0, 2)
        np.testing.assert_allclose(w, [1.0 / 3.0, 2.0 / 3.0])

    def test_shift_invariance(self, rng):
        for _ in range(50):
            t1, t2 = rng.uniform(-1, 1, 2)
            L = int(rng.integers(2, 15))
            w = almon_weights(t1, t2, L)
            # adding a constant to the exponent leaves normalized weights unchanged
            i = np.arange(1, L + 1)
            z = t1 * i + t2 * i**2 + 7.0
            shifted = np.exp(z - z.max())
            shifted /= shifted.sum()
            np.testing.assert_allclose(w, shifted, atol=1e-12)

    def test_needs_positive_lags(self):
        with pytest.raises(DataError):
            almon_weights(0.1, 0.0, 0)


class TestFitUnivariate:
    def test_exact_model_recovery(self, rng):
        T, L = 160, 3
        X = rng.standard_normal((T, L))
        y = 1.0 + 2.0 * (X @ np.full(L, 1.0 / 3.0))
        comp = midas_fit_univariate(y, X)
        assert 1.95 <= comp.beta1 <= 2.05
        np.testing.assert_allclose(comp.weights(), np.full(L, 1.0 / 3.0), atol=0.02)
        assert comp.train_rmse < 1e-6

    def test_noise_shrinks_slope(self, rng):
        T, L = 200, 6
        X = rng.standard_normal((T, L))
        y = rng.standard_normal(T)
        comp = midas_fit_univariate(y, X)
        assert abs(comp.beta1 * comp.weights()).max() < 0.5
        assert comp.train_rmse == pytest.approx(y.std(), abs=0.15)

    def test_single_lag_reduces_to_regression(self, rng):
        X = rng.standard_normal((60, 1))
        y = 0.5 + 1.5 * X[:, 0]
        comp = midas_fit_univariate(y, X)
        assert comp.weights()[0] == pytest.approx(1.0)
        assert comp.beta1 == pytest.approx(1.5, abs=1e-8)

    def test_multistart_objective_dominates(self, rng):
        from nowbench.midas import _THETA_STARTS, _profiled_sse
        from scipy.optimize import minimize

        X = rng.standard_normal((80, 8))
        y = X @ almon_weights(0.4, -0.05, 8) * 3.0 + 0.1 * rng.standard_normal(80)
        comp = midas_fit_univariate(y, X)
        best_sse = _profiled_sse(np.array([comp.theta1, comp.theta2]), y, X)[0]
        for start in _THETA_STARTS:
            res = minimize(lambda t: _profiled_sse(t, y, X)[0], np.asarray(start), method="Nelder-Mead")
            assert best_sse <= res.fun + 1e-9

    def test_missing_values_rejected(self):
        X = np.ones((30, 2))
        X[3, 1] = np.nan
        with pytest.raises(DataError):
            midas_fit_univariate(np.zeros(30), X)


def _component(name, rmse, beta0=0.0, beta1=1.0, L=2):
    return MidasComponent(name, beta0, beta1, 0.0, 0.0, L, rmse)


class TestCombination:
    def test_weights_discount_worst(self):
        w = combination_weights([1.0, 2.0, 3.0])
        np.testing.assert_allclose(w, [2.0 / 3.0, 1.0 / 3.0, 0.0])

    def test_tie_rule(self):
        np.testing.assert_allclose(combination_weights([0.5, 0.5]), [0.5, 0.5])

    def test_worst_component_has_no_influence(self):
        comps = [_component("a", 1.0), _component("b", 2.0), _component("c", 3.0)]
        rows = {"a": np.array([1.0, 1.0]), "b": np.array([2.0, 2.0]), "c": np.array([3.0, 3.0])}
        base = midas_combine(comps, rows)
        rows_perturbed = dict(rows)
        rows_perturbed["c"] = np.array([500.0, -500.0])
        assert midas_combine(comps, rows_perturbed) == pytest.approx(base)

    def test_combined_within_nonzero_weight_range(self, rng):
        comps = [_component(f"c{i}", rmse) for i, rmse in enumerate(rng.uniform(0.5, 2.0, 5))]
        rows = {c.indicator: rng.standard_normal(2) for c in comps}
        combined = midas_combine(comps, rows)
        w = combination_weights([c.train_rmse for c in comps])
        forecasts = [c.forecast(rows[c.indicator]) for c in comps]
        live = [f for f, wi in zip(forecasts, w) if wi > 0]
        assert min(live) - 1e-12 <= combined <= max(live) + 1e-12

    def test_needs_two_components(self):
        with pytest.raises(DataError):
            midas_combine([_component("a", 1.0)], {"a": np.zeros(2)})
