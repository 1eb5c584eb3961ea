import numpy as np
import pandas as pd
import pytest

from nowbench.data_ingest import build_panel
from nowbench.errors import DataError
from nowbench.preprocess import (
    DesignMatrixBuilder,
    ImputePolicy,
    PanelScaler,
    aggregate_quarterly,
    arma_fill,
    build_design_matrix,
    mean_fill,
    stack_monthly,
    standardize,
    unstack_monthly,
)
from nowbench.vintage_sim import mask_vintage

from conftest import monthly_series, quarterly_series, simple_panel


def tiny_panel(values, quarterly_target=(0.1, 0.2)):
    return build_panel(
        [
            monthly_series("m0", "2000-01", values),
            quarterly_series("gdp", "2000Q1", list(quarterly_target), is_target=True),
        ]
    )


class TestMeanFill:
    def test_identity_when_complete(self):
        p = tiny_panel([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        filled = mean_fill(p, ImputePolicy())
        pd.testing.assert_frame_equal(filled.frame, p.frame)

    def test_fills_with_window_mean(self):
        p = tiny_panel([1.0, np.nan, 3.0, 1.0, np.nan, 3.0])
        filled = mean_fill(p, ImputePolicy())
        assert filled.frame["m0"].iloc[1] == pytest.approx(2.0)

    def test_quarterly_column_keeps_structural_gaps(self):
        p = tiny_panel([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        filled = mean_fill(p, ImputePolicy())
        # non-quarter-end months stay missing for quarterly series
        assert filled.frame["gdp"].isna().sum() == 4

    def test_all_missing_column_raises(self):
        p = tiny_panel([np.nan] * 6)
        with pytest.raises(DataError, match="no observations"):
            mean_fill(p, ImputePolicy())

    def test_no_leakage_from_post_window_rows(self):
        vals = [1.0, np.nan, 3.0, 10.0, 10.0, 10.0]
        p = tiny_panel(vals)
        policy = ImputePolicy("mean_fill", ("2000Q1", "2000Q1"))
        filled = mean_fill(p, policy)
        assert filled.frame["m0"].iloc[1] == pytest.approx(2.0)  # mean of Q1 cells only
        p2 = tiny_panel([1.0, np.nan, 3.0, 99.0, -99.0, 0.0])
        filled2 = mean_fill(p2, policy)
        assert filled2.frame["m0"].iloc[1] == filled.frame["m0"].iloc[1]


class TestArmaFill:
    def test_white_noise_fills_near_mean(self, rng):
        x = rng.standard_normal(120) + 5.0
        x[-3:] = np.nan
        p = tiny_panel(list(x), quarterly_target=np.arange(40) * 0.01 + 0.01)
        filled = arma_fill(p)
        fills = filled.frame["m0"].iloc[-3:]
        assert np.all(np.abs(fills - np.nanmean(x)) < 0.6)

    def test_ar1_one_step_fill(self):
        rng = np.random.default_rng(3)
        e = rng.standard_normal(400)
        x = np.zeros(400)
        for t in range(1, 400):
            x[t] = 0.8 * x[t - 1] + 0.2 * e[t]
        x[-1] = np.nan
        last = x[-2]
        vals = list(x)
        p = tiny_panel(vals, quarterly_target=np.arange(134) * 0.01 + 0.01)
        filled = arma_fill(p)
        fill = filled.frame["m0"].iloc[-1]
        assert fill == pytest.approx(0.8 * last, abs=0.15)

    def test_fully_observed_unchanged(self, rng):
        x = list(rng.standard_normal(60))
        p = tiny_panel(x, quarterly_target=np.arange(20) * 0.01 + 0.01)
        filled = arma_fill(p)
        np.testing.assert_allclose(filled.frame["m0"].values, p.frame["m0"].values)

    def test_short_column_falls_back_to_mean(self, caplog):
        x = [1.0, 2.0, 3.0, 4.0, 5.0, np.nan]
        p = tiny_panel(x)
        with caplog.at_level("WARNING"):
            filled = arma_fill(p)
        assert "falls back to mean" in caplog.text
        assert filled.frame["m0"].iloc[-1] == pytest.approx(3.0)


class TestStacking:
    def test_stack_by_definition(self):
        s = monthly_series("x", "2000-01", [1, 2, 3, 4, 5, 6])
        m1, m2, m3 = stack_monthly(s)
        assert list(m1.values.values) == [1.0, 4.0]
        assert list(m2.values.values) == [2.0, 5.0]
        assert list(m3.values.values) == [3.0, 6.0]

    def test_missing_month_propagates(self):
        s = monthly_series("x", "2000-01", [1, 2, 3, 4, 5, np.nan])
        _, _, m3 = stack_monthly(s)
        assert m3.values.iloc[0] == 3.0 and np.isnan(m3.values.iloc[1])

    def test_twelve_months_make_four_quarters(self):
        s = monthly_series("x", "2000-01", list(range(12)))
        for stacked in stack_monthly(s):
            assert len(stacked.values) == 4

    def test_quarterly_input_rejected(self):
        q = quarterly_series("q", "2000Q1", [1.0])
        with pytest.raises(DataError):
            stack_monthly(q)

    def test_stack_unstack_roundtrip(self, rng):
        s = monthly_series("x", "2000-01", rng.standard_normal(24))
        rebuilt = unstack_monthly(*stack_monthly(s))
        pd.testing.assert_series_equal(rebuilt, s.values, check_names=False)


class TestAggregateQuarterly:
    def test_zeros(self):
        s = monthly_series("x", "2000-01", [0.0, 0.0, 0.0])
        for mode in ("mean_growth", "compound_growth"):
            assert aggregate_quarterly(s, mode).values.iloc[0] == 0.0

    def test_one_percent_months(self):
        s = monthly_series("x", "2000-01", [0.01, 0.01, 0.01])
        assert aggregate_quarterly(s, "mean_growth").values.iloc[0] == pytest.approx(0.01)
        assert aggregate_quarterly(s, "compound_growth").values.iloc[0] == pytest.approx(0.030301)

    def test_missing_month_voids_quarter(self):
        s = monthly_series("x", "2000-01", [0.1, np.nan, 0.1])
        assert np.isnan(aggregate_quarterly(s, "mean_growth").values.iloc[0])

    def test_compound_matches_levels(self, rng):
        growth = rng.uniform(-0.02, 0.02, 12)
        levels = 100.0 * np.cumprod(1.0 + growth)
        s = monthly_series("x", "2000-01", growth)
        agg = aggregate_quarterly(s, "compound_growth").values
        lev = np.concatenate([[100.0], levels])
        for qi in range(4):
            direct = lev[3 * (qi + 1)] / lev[3 * qi] - 1.0
            assert agg.iloc[qi] == pytest.approx(direct, abs=1e-12)


class TestStandardize:
    def test_idempotent_on_standardized(self, small_panel):
        z, _ = standardize(small_panel)
        z2, _ = standardize(z)
        np.testing.assert_allclose(
            z2.frame.to_numpy(dtype=float), z.frame.to_numpy(dtype=float), atol=1e-12, equal_nan=True
        )

    def test_hand_values(self):
        p = tiny_panel([0.0, 2.0, 0.0, 2.0, 0.0, 2.0])
        z, scaler = standardize(p)
        assert scaler.means_["m0"] == pytest.approx(1.0)
        assert scaler.stds_["m0"] == pytest.approx(1.0)
        assert list(z.frame["m0"].values[:2]) == [-1.0, 1.0]

    def test_zero_variance_raises(self):
        p = tiny_panel([3.0] * 6)
        with pytest.raises(DataError, match="zero variance"):
            standardize(p)

    def test_inverse_transform(self, small_panel):
        _, scaler = standardize(small_panel)
        vals = np.array([0.5, -1.0])
        back = scaler.inverse_transform_values("gdp", scaler.transform_values("gdp", vals))
        np.testing.assert_allclose(back, vals)


class TestDesignMatrix:
    def test_single_monthly_no_lags_gives_three_features(self):
        p = simple_panel(n_monthly=1)
        dm = build_design_matrix(p, ImputePolicy(), n_lags=0)
        assert len(dm.feature_names) == 3

    def test_counting_rule_with_lags(self):
        p = build_panel(
            [
                monthly_series("a", "2000-01", list(np.arange(24) * 0.1)),
                monthly_series("b", "2000-01", list(np.arange(24) * 0.2)),
                quarterly_series("uq", "2000Q1", list(np.arange(8) * 0.3)),
                quarterly_series("gdp", "2000Q1", list(np.arange(8) * 0.4), is_target=True),
            ]
        )
        dm = build_design_matrix(p, ImputePolicy(), n_lags=1)
        assert len(dm.feature_names) == (2 * 3 + 1) * 2 + 1

    def test_masked_vintage_rows_are_fill_values(self):
        p = simple_panel(n_monthly=2, lags=(0, 0))
        policy = ImputePolicy("mean_fill", ("2000Q1", "2007Q4"))
        builder = DesignMatrixBuilder(policy, n_lags=0).fit(p)
        view = mask_vintage(p, "2008Q3", -2)  # cutoff July: Aug/Sep unobserved
        dm = builder.transform(view.panel)
        row = dm.row_for("2008Q3")
        means = builder.impute_means_
        names = dm.feature_names
        assert row[names.index("m0__m2")] == pytest.approx(means["m0"])  # August filled
        assert row[names.index("m0__m3")] == pytest.approx(means["m0"])  # September filled
        assert row[names.index("m0__m1")] != pytest.approx(means["m0"])  # July observed

    def test_no_leakage_in_builder_stats(self):
        p = simple_panel(n_monthly=2)
        policy = ImputePolicy("mean_fill", ("2000Q1", "2005Q4"))
        b1 = DesignMatrixBuilder(policy, 1).fit(p)
        poisoned = p.copy()
        poisoned.frame.loc[poisoned.calendar > pd.Period("2005-12", freq="M"), "m0"] = 1e9
        b2 = DesignMatrixBuilder(policy, 1).fit(poisoned)
        pd.testing.assert_series_equal(b1.impute_means_, b2.impute_means_)
