import numpy as np
import pandas as pd
import pytest

from nowbench.data_ingest import build_panel
from nowbench.errors import DataError
from nowbench.vintage_sim import mask_vintage, publication_cutoff, vintage_grid

from conftest import monthly_series, quarterly_series


def lag_table_panel():
    """Three monthly series with lags {0, 1, 2} plus the quarterly target (lag 1)."""
    values = list(np.arange(1.0, 13.0))
    return build_panel(
        [
            monthly_series("lag0", "2001-01", values, lag=0),
            monthly_series("lag1", "2001-01", values, lag=1),
            monthly_series("lag2", "2001-01", values, lag=2),
            quarterly_series("gdp", "2001Q1", [0.1, 0.2, 0.3, 0.4], lag=1, is_target=True),
        ]
    )


class TestPublicationCutoff:
    def test_q2_minus_two_is_april(self):
        assert publication_cutoff("2001Q2", -2) == pd.Period("2001-04", freq="M")

    def test_q2_zero_is_june(self):
        assert publication_cutoff("2001Q2", 0) == pd.Period("2001-06", freq="M")

    def test_q2_plus_two_is_august(self):
        assert publication_cutoff("2001Q2", 2) == pd.Period("2001-08", freq="M")

    def test_invalid_offset(self):
        with pytest.raises(DataError):
            publication_cutoff("2001Q2", 3)


class TestMaskVintage:
    def test_zero_lag_keeps_data_through_cutoff(self):
        view = mask_vintage(lag_table_panel(), "2001Q2", -2)  # cutoff April
        col = view.panel.frame["lag0"]
        assert col[pd.Period("2001-04", freq="M")] == 4.0
        assert np.isnan(col[pd.Period("2001-05", freq="M")])

    def test_lag_one_keeps_through_march(self):
        view = mask_vintage(lag_table_panel(), "2001Q2", -2)
        col = view.panel.frame["lag1"]
        assert col[pd.Period("2001-03", freq="M")] == 3.0
        assert np.isnan(col[pd.Period("2001-04", freq="M")])

    def test_target_quarter_always_masked(self):
        view = mask_vintage(lag_table_panel(), "2001Q2", 1)  # cutoff July
        gdp = view.panel.frame["gdp"]
        # Q2 value would be published (lag 1) but the nowcast target stays hidden
        assert np.isnan(gdp[pd.Period("2001-06", freq="M")])
        assert gdp[pd.Period("2001-03", freq="M")] == 0.1

    def test_hand_enumerated_pattern_at_offset_zero(self):
        view = mask_vintage(lag_table_panel(), "2001Q2", 0)  # cutoff June
        frame = view.panel.frame
        months = pd.period_range("2001-01", "2001-12", freq="M")
        observed = {c: [int(not np.isnan(frame.loc[m, c])) for m in months] for c in frame.columns}
        assert observed["lag0"] == [1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0]  # through June
        assert observed["lag1"] == [1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]  # through May
        assert observed["lag2"] == [1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0]  # through April
        assert observed["gdp"] == [0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0]  # Q1 only

    def test_monotone_in_offset(self):
        panel = lag_table_panel()
        prev = None
        for k in (-2, -1, 0, 1, 2):
            observed = ~mask_vintage(panel, "2001Q2", k).panel.frame.isna()
            if prev is not None:
                assert (observed.values >= prev.values).all()
            prev = observed

    def test_deterministic(self):
        panel = lag_table_panel()
        a = mask_vintage(panel, "2001Q3", -1).panel.frame
        b = mask_vintage(panel, "2001Q3", -1).panel.frame
        pd.testing.assert_frame_equal(a, b)


class TestVintageGrid:
    def test_23_quarters_gives_115_cells(self):
        quarters = pd.period_range("2016Q1", "2021Q3", freq="Q")
        assert len(quarters) == 23
        assert len(vintage_grid(quarters)) == 115

    def test_single_quarter(self):
        cells = vintage_grid([pd.Period("2001Q1", freq="Q")])
        assert len(cells) == 5
        assert [k for _, k in cells] == [-2, -1, 0, 1, 2]

    def test_empty_errors(self):
        with pytest.raises(DataError):
            vintage_grid([])

    def test_quarter_major_ordering(self):
        qs = pd.period_range("2001Q1", "2001Q2", freq="Q")
        cells = vintage_grid(qs)
        assert cells[0] == (pd.Period("2001Q1", freq="Q"), -2)
        assert cells[5] == (pd.Period("2001Q2", freq="Q"), -2)
