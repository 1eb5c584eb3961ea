"""Uniform fit/predict contract over the twelve methodologies, plus tuning.

Every backend consumes a training panel and a vintage view; the benchmark
driver never branches on the methodology beyond its refit policy. The three
autoregressive backends (arma, bvar, mf_var) re-estimate on data through the
vintage cutoff by default, mirroring how such models are run in practice; all
other backends are frozen after training.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
import pandas as pd

from . import arma as arma_mod
from . import dfm as dfm_mod
from . import linear_models, midas, neural_models, tree_models, var_models
from .data_ingest import Panel, SplitSpec, quarter, quarter_end_month
from .errors import EstimationError, SchemaError
from .preprocess import (
    DesignMatrixBuilder,
    ImputePolicy,
    PanelScaler,
    fit_window_means,
    mean_fill,
    quarterly_frame,
)
from .vintage_sim import (
    VINTAGE_OFFSETS,
    VintageView,
    last_observed_target_quarter,
    mask_vintage,
)

log = logging.getLogger(__name__)

METHODOLOGIES = (
    "arma",
    "bvar",
    "decision_tree",
    "dfm",
    "gradient_boost",
    "lstm",
    "mf_var",
    "midas",
    "mlp",
    "ols",
    "random_forest",
    "ridge",
)

REFIT_BY_DEFAULT = frozenset({"arma", "bvar", "mf_var"})

FIXED_AFTER_TRAIN = "fixed_after_train"
REFIT_EACH_VINTAGE = "refit_each_vintage"


@dataclass
class ModelSpec:
    id: str
    hyperparams: dict = field(default_factory=dict)
    refit_policy: str | None = None  # None: backend default
    seed: int = 0

    def __post_init__(self):
        if self.id not in METHODOLOGIES:
            raise SchemaError(f"unknown methodology {self.id!r}; expected one of {sorted(METHODOLOGIES)}")
        if self.refit_policy not in (None, FIXED_AFTER_TRAIN, REFIT_EACH_VINTAGE):
            raise SchemaError(f"unknown refit policy {self.refit_policy!r}")

    def resolved_refit(self) -> str:
        if self.refit_policy is not None:
            return self.refit_policy
        return REFIT_EACH_VINTAGE if self.id in REFIT_BY_DEFAULT else FIXED_AFTER_TRAIN


@dataclass
class FittedModel:
    spec: ModelSpec
    params: dict  # merged hyperparameters actually used
    state: Any
    schema: dict = field(default_factory=dict)


@dataclass
class PredictionRecord:
    methodology: str
    period: str
    quarter: pd.Period
    offset: int
    value: float


def derive_seed(seed: int, *tokens) -> int:
    """Stable per-task seed: independent of process hash randomization."""
    import zlib

    crcs = [zlib.crc32(str(t).encode()) for t in tokens]
    return int(np.random.SeedSequence([seed, *crcs]).generate_state(1)[0])


def _train_window(panel: Panel, split: SplitSpec) -> tuple[pd.Period, pd.Period]:
    return panel.calendar[0].asfreq("Q"), split.train_end


def _quarters_ahead(target: pd.Period, last_observed: pd.Period) -> int:
    return int((target - last_observed).n)


class _ArrayScaler:
    """Column scaler for design matrices; constant columns scale by 1."""

    def fit(self, X: np.ndarray) -> "_ArrayScaler":
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        flat = sd == 0.0
        if flat.any():
            log.warning("design matrix has %d constant columns in the training window", int(flat.sum()))
            sd = np.where(flat, 1.0, sd)
        self.sd_ = sd
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean_) / self.sd_


class Backend:
    id: str = ""
    defaults: dict = {}
    supports_refit = False

    def fit(self, panel: Panel, split: SplitSpec, params: dict, seed: int):
        raise NotImplementedError

    def predict(self, state, view: VintageView, params: dict, seed: int, refit: bool) -> float:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# design-matrix backends (stacked features, one row per quarter)


class _DesignBackend(Backend):
    scale_features = False
    scale_target = False
    supports_refit = True  # per-vintage retraining mode

    def make_estimator(self, params: dict, seed: int):
        raise NotImplementedError

    def _assemble(self, panel: Panel, split: SplitSpec, params: dict, seed: int):
        policy = ImputePolicy(params.get("imputation", "mean_fill"), _train_window(panel, split))
        builder = DesignMatrixBuilder(policy, params["n_lags"]).fit(panel)
        dm = builder.transform(panel)
        X, y = dm.training_rows(split.train_end)
        if len(y) < 8:
            raise EstimationError(f"only {len(y)} training quarters after lagging", self.id)
        x_scaler = _ArrayScaler().fit(X) if self.scale_features else None
        if x_scaler is not None:
            X = x_scaler.transform(X)
        y_stats = (float(y.mean()), float(y.std()) or 1.0) if self.scale_target else None
        if y_stats is not None:
            y = (y - y_stats[0]) / y_stats[1]
        est = self.make_estimator(params, seed).fit(X, y)
        return {
            "builder": builder,
            "estimator": est,
            "x_scaler": x_scaler,
            "y_stats": y_stats,
            "features": list(dm.feature_names),
        }

    def fit(self, panel, split, params, seed):
        return self._assemble(panel, split, params, seed)

    def predict(self, state, view, params, seed, refit):
        if refit:
            cutoff_q = last_observed_target_quarter(view)
            if cutoff_q is None:
                raise EstimationError("no observed target history in this vintage", self.id)
            pseudo = SplitSpec(cutoff_q, cutoff_q, cutoff_q, cutoff_q + 1, cutoff_q + 1)
            state = self._assemble(view.panel, pseudo, params, seed)
        builder: DesignMatrixBuilder = state["builder"]
        dm = builder.transform(view.panel)
        if dm.feature_names != state["features"]:
            raise SchemaError(f"{self.id}: feature schema mismatch between fit and predict")
        row = dm.row_for(view.target_quarter).reshape(1, -1)
        if state["x_scaler"] is not None:
            row = state["x_scaler"].transform(row)
        value = float(state["estimator"].predict(row)[0])
        if state["y_stats"] is not None:
            value = value * state["y_stats"][1] + state["y_stats"][0]
        return value


class OlsBackend(_DesignBackend):
    id = "ols"
    defaults = {"n_lags": 1, "imputation": "mean_fill"}
    scale_features = True

    def make_estimator(self, params, seed):
        return linear_models.OlsRegressor()


class RidgeBackend(_DesignBackend):
    id = "ridge"
    defaults = {"alpha": 1.0, "n_lags": 1, "imputation": "mean_fill"}
    scale_features = True

    def make_estimator(self, params, seed):
        return linear_models.RidgeRegressor(alpha=params["alpha"])


class DecisionTreeBackend(_DesignBackend):
    id = "decision_tree"
    defaults = {"max_depth": 4, "min_samples_leaf": 5, "n_lags": 1, "imputation": "mean_fill"}

    def make_estimator(self, params, seed):
        return tree_models.CartRegressor(params["max_depth"], params["min_samples_leaf"])


class RandomForestBackend(_DesignBackend):
    id = "random_forest"
    defaults = {
        "n_trees": 500,
        "feature_fraction": 1.0 / 3.0,
        "max_depth": None,
        "min_samples_leaf": 2,
        "bootstrap": True,
        "n_lags": 1,
        "imputation": "mean_fill",
    }

    def make_estimator(self, params, seed):
        return tree_models.ForestRegressor(
            n_trees=params["n_trees"],
            feature_fraction=params["feature_fraction"],
            max_depth=params["max_depth"],
            min_samples_leaf=params["min_samples_leaf"],
            bootstrap=params["bootstrap"],
            seed=seed,
        )


class GradientBoostBackend(_DesignBackend):
    id = "gradient_boost"
    defaults = {
        "n_trees": 200,
        "learning_rate": 0.05,
        "max_depth": 3,
        "min_samples_leaf": 2,
        "n_lags": 1,
        "imputation": "mean_fill",
    }

    def make_estimator(self, params, seed):
        return tree_models.BoostedTreesRegressor(
            n_trees=params["n_trees"],
            learning_rate=params["learning_rate"],
            max_depth=params["max_depth"],
            min_samples_leaf=params["min_samples_leaf"],
            seed=seed,
        )


class MlpBackend(_DesignBackend):
    id = "mlp"
    defaults = {
        "hidden_layers": (32,),
        "epochs": 300,
        "learning_rate": 0.005,
        "momentum": 0.9,
        "batch_size": 16,
        "n_lags": 1,
        "imputation": "mean_fill",
    }
    scale_features = True
    scale_target = True

    def make_estimator(self, params, seed):
        cfg = neural_models.TrainConfig(
            epochs=params["epochs"],
            learning_rate=params["learning_rate"],
            momentum=params["momentum"],
            batch_size=params["batch_size"],
            seed=seed,
        )
        hidden = tuple(params["hidden_layers"])

        class _Wrapper:
            def fit(self, X, y):
                self.net_, self.history_ = neural_models.mlp_fit(X, y, hidden, cfg)
                return self

            def predict(self, X):
                return self.net_.predict(X)

        return _Wrapper()


# ---------------------------------------------------------------------------
# autoregressive trio


class ArmaBackend(Backend):
    id = "arma"
    defaults = {"p_max": 5, "q_max": 5}
    supports_refit = True

    def fit(self, panel, split, params, seed):
        y = panel.target_growth().dropna()
        y = y[y.index <= split.train_end]
        orders = arma_mod.auto_order(y.to_numpy(), params["p_max"], params["q_max"])
        model = arma_mod.fit_arma(y.to_numpy(), *orders)
        return {"orders": orders, "train_model": model}

    def predict(self, state, view, params, seed, refit):
        hist = view.panel.target_growth().dropna()
        if hist.empty:
            raise EstimationError("no target history visible at this vintage", self.id)
        h = _quarters_ahead(view.target_quarter, hist.index[-1])
        p, q = state["orders"]
        model = arma_mod.fit_arma(hist.to_numpy(), p, q) if refit else state["train_model"]
        return float(arma_mod.forecast(model, hist.to_numpy(), h)[h - 1])


class _VarBackendBase(Backend):
    supports_refit = True

    def _stacked(self, panel: Panel, means: pd.Series, window) -> pd.DataFrame:
        filled = mean_fill(panel, ImputePolicy("mean_fill", window), means=means)
        qf = quarterly_frame(filled)
        target = panel.target_id
        cols = [c for c in qf.columns if c != target] + [target]
        return qf[cols]

    def _estimate(self, Y: pd.DataFrame, params: dict):
        raise NotImplementedError

    def fit(self, panel, split, params, seed):
        window = _train_window(panel, split)
        means = fit_window_means(panel, window)
        Y = self._stacked(panel, means, window)
        Y = Y.loc[Y.notna().all(axis=1)]
        model = self._estimate(Y, params)
        return {"means": means, "window": window, "model": model, "columns": list(Y.columns)}

    def predict(self, state, view, params, seed, refit):
        end_q = last_observed_target_quarter(view)
        if end_q is None:
            raise EstimationError("no observed target history in this vintage", self.id)
        Y = self._stacked(view.panel, state["means"], state["window"])
        if list(Y.columns) != state["columns"]:
            raise SchemaError(f"{self.id}: stacked schema mismatch between fit and predict")
        Y = Y.loc[Y.index <= end_q]
        Y = Y.loc[Y.notna().all(axis=1)]
        model = self._estimate(Y, params) if refit else state["model"]
        h = _quarters_ahead(view.target_quarter, Y.index[-1])
        fc = var_models.var_forecast(model, Y.to_numpy(), h)
        return float(fc[h - 1, -1])  # target is the last column


class MfVarBackend(_VarBackendBase):
    id = "mf_var"
    defaults = {"p": 1}

    def _estimate(self, Y, params):
        return var_models.var_fit(Y, params["p"])


class BvarBackend(_VarBackendBase):
    id = "bvar"
    defaults = {"p": 4, "lambda1": 0.2, "lambda2": 0.5, "lambda3": 1.0, "delta": 0.0}

    def _estimate(self, Y, params):
        prior = var_models.MinnesotaPrior(
            lambda1=params["lambda1"],
            lambda2=params["lambda2"],
            lambda3=params["lambda3"],
            delta=params["delta"],
        )
        return var_models.bvar_fit(Y, params["p"], prior)


# ---------------------------------------------------------------------------
# factor model


class DfmBackend(Backend):
    id = "dfm"
    defaults = {"factors_per_block": 1, "factor_lag_order": 1, "tolerance": 1e-4, "max_iter": 100}

    def fit(self, panel, split, params, seed):
        spec = dfm_mod.DfmSpec(
            factors_per_block=params["factors_per_block"],
            factor_lag_order=params["factor_lag_order"],
            tolerance=params["tolerance"],
            max_iter=params["max_iter"],
        )
        model, _ = dfm_mod.em_fit(panel, spec)
        return {"model": model}

    def predict(self, state, view, params, seed, refit):
        return dfm_mod.dfm_nowcast(state["model"], view)


# ---------------------------------------------------------------------------
# MIDAS


class MidasBackend(Backend):
    id = "midas"
    defaults = {"n_monthly_lags": 12}

    def _lag_matrix(self, frame: pd.DataFrame, col: str, quarters, L: int) -> np.ndarray:
        cal = frame.index
        out = np.empty((len(quarters), L))
        for r, q in enumerate(quarters):
            end = quarter_end_month(q)
            pos = cal.get_loc(end)
            if pos - L + 1 < 0:
                raise EstimationError(f"not enough monthly history for {col} at {q}", self.id)
            out[r] = frame[col].to_numpy()[pos - L + 1 : pos + 1][::-1]
        return out

    def fit(self, panel, split, params, seed):
        window = _train_window(panel, split)
        means = fit_window_means(panel, window)
        filled = mean_fill(panel, ImputePolicy("mean_fill", window), means=means)
        L = params["n_monthly_lags"]
        y = panel.target_growth().dropna()
        y = y[y.index <= split.train_end]
        first_usable = (panel.calendar[0] + L - 1).asfreq("Q")
        y = y[y.index >= first_usable + 1]
        monthly = [c for c in panel.ids if panel.metas[c].frequency == "monthly"]
        if len(monthly) < 2:
            raise EstimationError("MIDAS combination needs at least two monthly indicators", self.id)
        components = []
        for col in monthly:
            X = self._lag_matrix(filled.frame, col, y.index, L)
            components.append(midas.midas_fit_univariate(y.to_numpy(), X, indicator=col))
        return {"components": components, "means": means, "window": window, "L": L}

    def predict(self, state, view, params, seed, refit):
        filled = mean_fill(view.panel, ImputePolicy("mean_fill", state["window"]), means=state["means"])
        rows = {}
        for comp in state["components"]:
            rows[comp.indicator] = self._lag_matrix(
                filled.frame, comp.indicator, [view.target_quarter], state["L"]
            )[0]
        return midas.midas_combine(state["components"], rows)


# ---------------------------------------------------------------------------
# LSTM


class LstmBackend(Backend):
    id = "lstm"
    defaults = {
        "n_timesteps": 12,
        "hidden_size": 32,
        "n_members": 10,
        "epochs": 150,
        "learning_rate": 0.01,
        "momentum": 0.9,
        "batch_size": 16,
    }

    def _inputs(self, panel: Panel, means, scaler, monthly_cols):
        filled = mean_fill(panel, ImputePolicy("mean_fill", None), means=means)
        scaled = scaler.transform(filled)
        return scaled.frame[monthly_cols].to_numpy(dtype=float)

    def fit(self, panel, split, params, seed):
        window = _train_window(panel, split)
        means = fit_window_means(panel, window)
        scaler = PanelScaler(window).fit(panel)
        monthly = [c for c in panel.ids if panel.metas[c].frequency == "monthly"]
        if not monthly:
            raise EstimationError("LSTM needs at least one monthly indicator", self.id)
        matrix = self._inputs(panel, means, scaler, monthly)
        n_steps = params["n_timesteps"]
        y = panel.target_growth().dropna()
        y = y[y.index <= split.train_end]
        cal = panel.calendar
        ends, targets = [], []
        for q, val in y.items():
            end = quarter_end_month(q)
            pos = cal.get_loc(end)
            if pos - n_steps + 1 >= 0:
                ends.append(pos)
                targets.append(val)
        sequences = neural_models.build_sequences(matrix, ends, n_steps)
        y_std = scaler.transform_values(panel.target_id, np.asarray(targets))
        cfg = neural_models.TrainConfig(
            epochs=params["epochs"],
            learning_rate=params["learning_rate"],
            momentum=params["momentum"],
            batch_size=params["batch_size"],
            seed=seed,
        )
        ensemble = neural_models.lstm_fit(
            sequences, y_std, hidden_size=params["hidden_size"], n_members=params["n_members"], config=cfg
        )
        return {"ensemble": ensemble, "means": means, "scaler": scaler, "monthly": monthly}

    def predict(self, state, view, params, seed, refit):
        matrix = self._inputs(view.panel, state["means"], state["scaler"], state["monthly"])
        end = quarter_end_month(view.target_quarter)
        pos = view.panel.calendar.get_loc(end)
        seq = neural_models.build_sequences(matrix, [pos], state["ensemble"].n_timesteps)
        value_std = float(state["ensemble"].predict(seq)[0])
        return float(state["scaler"].inverse_transform_values(view.panel.target_id, [value_std])[0])


BACKENDS: dict[str, Backend] = {
    b.id: b
    for b in (
        ArmaBackend(),
        BvarBackend(),
        DecisionTreeBackend(),
        DfmBackend(),
        GradientBoostBackend(),
        LstmBackend(),
        MfVarBackend(),
        MidasBackend(),
        MlpBackend(),
        OlsBackend(),
        RandomForestBackend(),
        RidgeBackend(),
    )
}


def merged_params(spec: ModelSpec) -> dict:
    backend = BACKENDS[spec.id]
    from .validation import check_params

    check_params(spec.hyperparams, backend.defaults, spec.id)
    return {**backend.defaults, **spec.hyperparams}


def fit(spec: ModelSpec, train: Panel, split: SplitSpec) -> FittedModel:
    """Fit a methodology on the training span of ``train`` (rows after
    split.train_end are never touched)."""
    backend = BACKENDS[spec.id]
    params = merged_params(spec)
    if spec.resolved_refit() == REFIT_EACH_VINTAGE and not backend.supports_refit:
        raise SchemaError(f"{spec.id} does not support refit_each_vintage")
    sub = train.slice_months(train.calendar[0], quarter_end_month(split.train_end))
    try:
        state = backend.fit(sub, split, params, spec.seed)
    except (EstimationError, SchemaError):
        raise
    except Exception as exc:
        raise EstimationError(f"fit failed: {exc}", spec.id) from exc
    return FittedModel(spec, params, state, {"train_end": str(split.train_end)})


def predict(model: FittedModel, view: VintageView, period: str = "") -> PredictionRecord:
    backend = BACKENDS[model.spec.id]
    refit = model.spec.resolved_refit() == REFIT_EACH_VINTAGE
    try:
        value = backend.predict(model.state, view, model.params, model.spec.seed, refit)
    except (EstimationError, SchemaError):
        raise
    except Exception as exc:
        raise EstimationError(f"prediction failed at {view.target_quarter}/{view.offset:+d}: {exc}",
                              model.spec.id) from exc
    if not np.isfinite(value):
        raise EstimationError(f"non-finite nowcast at {view.target_quarter}/{view.offset:+d}", model.spec.id)
    return PredictionRecord(model.spec.id, period, view.target_quarter, view.offset, float(value))


def tune(
    spec: ModelSpec,
    grid: list[dict],
    train: Panel,
    split: SplitSpec,
    metric: str = "mae",
) -> ModelSpec:
    """Pick the grid candidate with the best validation score.

    Candidates are fit on pre-validation data only, scored on the validation
    quarters at all five vintage offsets (metric per offset, averaged across
    offsets), ties broken by grid order.
    """
    if not grid:
        raise SchemaError("tuning grid is empty")
    if metric not in ("mae", "rmse"):
        raise SchemaError(f"unknown tuning metric {metric!r}")
    pre_end = split.valid_start - 1
    inner = SplitSpec(pre_end, pre_end, pre_end, split.valid_start, split.valid_end)
    actuals = train.target_growth()
    valid_quarters = [q for q in inner.test_quarters() if q in actuals.index and not np.isnan(actuals[q])]
    if not valid_quarters:
        raise SchemaError("validation range contains no observed target quarters")
    failures: list[str] = []
    best: tuple[float, int, dict] | None = None
    for rank, candidate in enumerate(grid):
        cand_spec = replace(spec, hyperparams={**spec.hyperparams, **candidate})
        try:
            model = fit(cand_spec, train, inner)
            per_offset = []
            for k in VINTAGE_OFFSETS:
                errors = []
                for q in valid_quarters:
                    view = mask_vintage(train, q, k)
                    rec = predict(model, view)
                    errors.append(rec.value - float(actuals[q]))
                e = np.asarray(errors)
                per_offset.append(float(np.abs(e).mean()) if metric == "mae" else float(np.sqrt((e**2).mean())))
            score = float(np.mean(per_offset))
        except (EstimationError, SchemaError) as exc:
            failures.append(f"{candidate}: {exc}")
            continue
        if best is None or score < best[0]:
            best = (score, rank, candidate)
    if best is None:
        raise EstimationError("all tuning candidates failed:\n" + "\n".join(failures), spec.id)
    log.info("%s: tuned to %s (validation %s %.5f)", spec.id, best[2], metric, best[0])
    return replace(spec, hyperparams={**spec.hyperparams, **best[2]})
