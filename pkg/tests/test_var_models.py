import logging

import numpy as np
import pytest

from nowbench.errors import DataError
from nowbench.linear_models import ols_fit
from nowbench.var_models import MinnesotaPrior, VarModel, bvar_fit, var_fit, var_forecast


def simulate_var1(seed, T, A, const, noise=0.5):
    rng = np.random.default_rng(seed)
    n = A.shape[0]
    Y = np.zeros((T + 100, n))
    for t in range(1, T + 100):
        Y[t] = const + A @ Y[t - 1] + noise * rng.standard_normal(n)
    return Y[100:]


A_TRUE = np.array([[0.5, 0.1, 0.0], [0.0, 0.3, 0.2], [0.1, 0.0, 0.4]])
C_TRUE = np.array([0.2, -0.1, 0.05])


class TestVarFit:
    def test_bivariate_white_noise_small_coefficients(self):
        rng = np.random.default_rng(0)
        Y = rng.standard_normal((2000, 2))
        m = var_fit(Y, 1)
        assert np.abs(m.coef[0]).max() < 0.1

    def test_var1_recovery(self):
        Y = simulate_var1(1, 5000, A_TRUE, C_TRUE)
        m = var_fit(Y, 1)
        assert np.abs(m.coef[0] - A_TRUE).max() < 0.05

    def test_p0_intercept_only(self):
        Y = simulate_var1(2, 500, A_TRUE, C_TRUE)
        m = var_fit(Y, 0)
        np.testing.assert_allclose(m.intercept, Y.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(var_forecast(m, Y[-1:], 3), np.tile(Y.mean(axis=0), (3, 1)), atol=1e-12)

    def test_matches_per_equation_ols(self):
        Y = simulate_var1(3, 300, A_TRUE, C_TRUE)
        m = var_fit(Y, 2)
        X = np.column_stack([Y[1:-1], Y[:-2]])
        for i in range(3):
            ref = ols_fit(X, Y[2:, i])
            assert abs(m.intercept[i] - ref.intercept) < 1e-10
            assert np.abs(np.concatenate([m.coef[0][i], m.coef[1][i]]) - ref.coef).max() < 1e-10

    def test_degenerate_warns_and_stays_finite(self, caplog):
        rng = np.random.default_rng(4)
        Y = rng.standard_normal((20, 6))  # 16 rows for 25 parameters per equation
        with caplog.at_level(logging.WARNING):
            m = var_fit(Y, 4)
        assert "ridge-stabilized" in caplog.text
        assert all(np.isfinite(a).all() for a in m.coef)

    def test_sigma_psd(self):
        Y = simulate_var1(5, 400, A_TRUE, C_TRUE)
        m = var_fit(Y, 1)
        eigs = np.linalg.eigvalsh(m.sigma)
        assert eigs.min() > -1e-10


class TestBvarFit:
    def test_tight_prior_recovers_prior_mean(self):
        Y = simulate_var1(6, 400, A_TRUE, C_TRUE)
        prior = MinnesotaPrior(lambda1=1e-8, delta=0.25)
        m = bvar_fit(Y, 2, prior)
        own_first = np.diag(m.coef[0])
        np.testing.assert_allclose(own_first, 0.25, atol=1e-6)
        off = m.coef[0] - np.diag(np.diag(m.coef[0]))
        assert np.abs(off).max() < 1e-6
        assert np.abs(m.coef[1]).max() < 1e-6

    def test_loose_prior_matches_ols(self):
        Y = simulate_var1(7, 3000, A_TRUE, C_TRUE)
        m_ols = var_fit(Y, 2)
        m_b = bvar_fit(Y, 2, MinnesotaPrior(lambda1=1e6))
        for l in range(2):
            assert np.abs(m_b.coef[l] - m_ols.coef[l]).max() < 1e-4

    def test_underdetermined_stays_finite(self):
        rng = np.random.default_rng(8)
        Y = rng.standard_normal((40, 6))
        m = bvar_fit(Y, 4)  # 25 params per equation > 36 rows after lags
        assert all(np.isfinite(a).all() for a in m.coef)

    def test_interpolates_between_prior_and_ols(self):
        Y = simulate_var1(9, 800, A_TRUE, C_TRUE)
        ols_top = var_fit(Y, 1).coef[0][0, 0]
        path = [
            bvar_fit(Y, 1, MinnesotaPrior(lambda1=lam)).coef[0][0, 0]
            for lam in (1e-6, 0.05, 0.2, 1.0, 1e5)
        ]
        assert path[0] == pytest.approx(0.0, abs=1e-4)
        assert path[-1] == pytest.approx(ols_top, abs=1e-3)
        assert all(path[i] <= path[i + 1] + 1e-9 for i in range(len(path) - 1))

    def test_prior_validation(self):
        with pytest.raises(DataError):
            MinnesotaPrior(lambda1=0.0)
        with pytest.raises(DataError):
            MinnesotaPrior(lambda2=1.5)
        Y = np.random.default_rng(0).standard_normal((50, 3))
        with pytest.raises(DataError, match="dof"):
            bvar_fit(Y, 1, MinnesotaPrior(iw_dof=3))


class TestForecast:
    def test_var1_closed_form(self):
        m = VarModel(["a", "b"], 1, np.array([0.1, 0.2]), [np.array([[0.5, 0.0], [0.1, 0.4]])], np.eye(2))
        hist = np.array([[1.0, 2.0]])
        f = var_forecast(m, hist, 1)
        np.testing.assert_allclose(f[0], m.intercept + m.coef[0] @ hist[0])

    def test_long_run_fixed_point(self):
        Y = simulate_var1(10, 2000, A_TRUE, C_TRUE)
        m = var_fit(Y, 1)
        f = var_forecast(m, Y[-1:], 500)
        fixed = np.linalg.solve(np.eye(3) - m.coef[0], m.intercept)
        assert np.abs(f[-1] - fixed).max() < 1e-6

    def test_history_too_short(self):
        m = VarModel(["a"], 2, np.zeros(1), [np.eye(1), np.eye(1)], np.eye(1))
        with pytest.raises(DataError):
            var_forecast(m, np.zeros((1, 1)), 1)
