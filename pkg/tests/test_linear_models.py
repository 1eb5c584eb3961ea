import logging

import numpy as np
import pytest

from nowbench.errors import SchemaError
from nowbench.linear_models import OlsRegressor, RidgeRegressor, ols_fit, ridge_fit


class TestOls:
    def test_exact_fit(self):
        X = np.linspace(0, 1, 20).reshape(-1, 1)
        y = 2.0 * X[:, 0]
        m = ols_fit(X, y)
        assert m.coef[0] == pytest.approx(2.0, abs=1e-10)
        assert m.intercept == pytest.approx(0.0, abs=1e-10)
        assert np.abs(m.predict(X) - y).max() < 1e-10

    def test_duplicate_column_warns_minimum_norm(self, caplog):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(30)
        X = np.column_stack([x, x])
        y = 3.0 * x
        with caplog.at_level(logging.WARNING):
            m = ols_fit(X, y)
        assert "rank-deficient" in caplog.text
        # minimum-norm: weight split evenly across the duplicates
        assert m.coef[0] == pytest.approx(m.coef[1], abs=1e-8)
        assert m.coef.sum() == pytest.approx(3.0, abs=1e-8)

    def test_three_point_line(self):
        X = np.array([[0.0], [1.0], [2.0]])
        y = np.array([1.0, 3.0, 5.0])
        m = ols_fit(X, y)
        assert m.intercept == pytest.approx(1.0, abs=1e-12)
        assert m.coef[0] == pytest.approx(2.0, abs=1e-12)

    def test_residual_orthogonality(self, rng):
        X = rng.standard_normal((60, 5))
        X = (X - X.mean(0)) / X.std(0)
        y = rng.standard_normal(60)
        m = ols_fit(X, y)
        r = y - m.predict(X)
        assert np.abs(X.T @ r).max() <= 1e-8


class TestRidge:
    def test_alpha_zero_matches_ols(self, rng):
        X = rng.standard_normal((50, 4))
        y = X @ np.array([1.0, -0.5, 0.2, 0.0]) + 0.1 * rng.standard_normal(50)
        m_ols = ols_fit(X, y)
        m_r = ridge_fit(X, y, 0.0)
        assert np.abs(m_r.predict(X) - m_ols.predict(X)).max() < 1e-8

    def test_huge_alpha_shrinks_to_mean(self, rng):
        X = rng.standard_normal((50, 4))
        y = rng.standard_normal(50)
        m = ridge_fit(X, y, 1e12)
        assert np.abs(m.coef).max() < 1e-6
        assert m.intercept == pytest.approx(y.mean())

    def test_closed_form_single_feature(self):
        # centered data with sum x^2 = 2, sum xy = 4, alpha = 1 -> beta = 4/3
        X = np.array([[-1.0], [1.0]])
        y = np.array([-2.0, 2.0])
        m = ridge_fit(X, y, 1.0)
        assert m.coef[0] == pytest.approx(4.0 / 3.0)

    def test_norm_nonincreasing_in_alpha(self, rng):
        X = rng.standard_normal((40, 6))
        y = rng.standard_normal(40)
        norms = [np.linalg.norm(ridge_fit(X, y, a).coef) for a in (0.0, 0.1, 1.0, 10.0, 100.0, 1e3)]
        assert all(norms[i + 1] <= norms[i] + 1e-12 for i in range(len(norms) - 1))

    def test_training_rss_nondecreasing_in_alpha(self, rng):
        X = rng.standard_normal((40, 6))
        y = rng.standard_normal(40)
        rss = []
        for a in (0.0, 0.1, 1.0, 10.0, 100.0):
            m = ridge_fit(X, y, a)
            rss.append(((y - m.predict(X)) ** 2).sum())
        assert all(rss[i + 1] >= rss[i] - 1e-12 for i in range(len(rss) - 1))

    def test_negative_alpha_rejected(self, rng):
        with pytest.raises(ValueError):
            ridge_fit(rng.standard_normal((10, 2)), rng.standard_normal(10), -1.0)


class TestEstimators:
    def test_sklearn_contract(self, rng):
        from sklearn.base import clone

        X = rng.standard_normal((30, 3))
        y = rng.standard_normal(30)
        est = RidgeRegressor(alpha=2.0)
        assert clone(est).get_params()["alpha"] == 2.0
        est.fit(X, y)
        assert est.predict(X).shape == (30,)

    def test_feature_count_mismatch(self, rng):
        X = rng.standard_normal((30, 3))
        y = rng.standard_normal(30)
        est = OlsRegressor().fit(X, y)
        with pytest.raises(SchemaError):
            est.predict(rng.standard_normal((5, 4)))
