"""Block-structured dynamic factor model in state-space form, estimated by EM.

Monthly indicators load on one or more block factors plus an AR(1)
idiosyncratic state; quarterly series (the GDP target in particular) are tied
to the monthly factors through the [1, 2, 3, 2, 1]/3 aggregation weights
applied across five monthly lags, with their own five-lag idiosyncratic chain.
The Kalman filter deletes missing observation rows step by step, so ragged
edges and the sparse quarterly rows need no imputation anywhere.

EM alternates exact smoothed moments (E-step) with closed-form restricted
regressions (M-step) for the factor VAR, loadings, and idiosyncratic AR(1)
parameters. Observation noise is pinned to a small constant; the idiosyncratic
states carry the measurement variance, following the usual nowcasting
treatment of this model family.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data_ingest import Panel, quarter, quarter_end_month
from .errors import DataError, EstimationError, NumericalError
from .preprocess import PanelScaler
from .vintage_sim import VintageView

log = logging.getLogger(__name__)

# monthly-to-quarterly aggregation weights for growth rates across 5 monthly lags
AGG_WEIGHTS = np.array([1.0, 2.0, 3.0, 2.0, 1.0]) / 3.0
_KAPPA = 1e-4  # fixed observation noise variance


@dataclass
class DfmSpec:
    """Estimation settings: block structure, factor counts, EM control."""

    factors_per_block: int = 1
    factor_lag_order: int = 1
    blocks: dict[str, list[str]] | None = None  # None: use the metas' block tags
    tolerance: float = 1e-4
    max_iter: int = 100

    def __post_init__(self):
        if self.factors_per_block < 1:
            raise DataError("factors_per_block must be >= 1")
        if self.factor_lag_order < 1:
            raise DataError("factor_lag_order must be >= 1")


@dataclass
class StateSpace:
    A: np.ndarray  # transition
    C: np.ndarray  # loadings
    Q: np.ndarray  # state noise covariance
    R: np.ndarray  # observation noise covariance (diagonal)
    z0: np.ndarray  # initial state mean
    P0: np.ndarray  # initial state covariance


@dataclass
class FilterResult:
    zp: np.ndarray  # predicted means (T, n)
    Pp: np.ndarray  # predicted covariances (T, n, n)
    zf: np.ndarray  # filtered means
    Pf: np.ndarray  # filtered covariances
    loglik: float


@dataclass
class SmootherResult:
    zs: np.ndarray
    Ps: np.ndarray
    lag1: np.ndarray  # lag1[t] = Cov(z_t, z_{t-1} | all data); t=0 pairs with the initial state
    z0s: np.ndarray
    P0s: np.ndarray


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def kalman_filter(ss: StateSpace, obs: np.ndarray) -> FilterResult:
    """Predict/update recursion with missing observation rows deleted per step.

    Returns the exact Gaussian log-likelihood of the observed cells. A fully
    missing time step runs the prediction only.
    """
    obs = np.asarray(obs, dtype=float)
    T, n_obs = obs.shape
    n = ss.A.shape[0]
    if ss.C.shape != (n_obs, n):
        raise DataError(f"observation matrix shape {ss.C.shape} does not match data ({n_obs} columns)")
    zp = np.empty((T, n))
    Pp = np.empty((T, n, n))
    zf = np.empty((T, n))
    Pf = np.empty((T, n, n))
    loglik = 0.0
    z, P = ss.z0, ss.P0
    eye = np.eye(n)
    for t in range(T):
        z_pred = ss.A @ z
        P_pred = _sym(ss.A @ P @ ss.A.T + ss.Q)
        zp[t], Pp[t] = z_pred, P_pred
        mask = ~np.isnan(obs[t])
        if not mask.any():
            zf[t], Pf[t] = z_pred, P_pred
            z, P = z_pred, P_pred
            continue
        C_t = ss.C[mask]
        R_t = ss.R[np.ix_(mask, mask)]
        v = obs[t, mask] - C_t @ z_pred
        S = _sym(C_t @ P_pred @ C_t.T + R_t)
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"innovation covariance not positive definite at step {t}", "dfm") from exc
        alpha = np.linalg.solve(L.T, np.linalg.solve(L, v))
        K = np.linalg.solve(L.T, np.linalg.solve(L, C_t @ P_pred)).T
        z = z_pred + K @ v
        IKC = eye - K @ C_t
        P = _sym(IKC @ P_pred @ IKC.T + K @ R_t @ K.T)
        zf[t], Pf[t] = z, P
        loglik += -0.5 * (mask.sum() * np.log(2.0 * np.pi) + 2.0 * np.log(np.diag(L)).sum() + v @ alpha)
    return FilterResult(zp, Pp, zf, Pf, float(loglik))


def kalman_smoother(ss: StateSpace, filt: FilterResult) -> SmootherResult:
    """Rauch-Tung-Striebel backward pass with lag-one smoothed covariances."""
    T, n = filt.zf.shape
    zs = np.empty_like(filt.zf)
    Ps = np.empty_like(filt.Pf)
    lag1 = np.empty_like(filt.Pf)
    zs[T - 1] = filt.zf[T - 1]
    Ps[T - 1] = filt.Pf[T - 1]
    gains = np.empty((T, n, n))  # gains[t] = J_{t-1}: smoother gain pairing t with t-1
    for t in range(T - 2, -1, -1):
        J = np.linalg.solve(filt.Pp[t + 1], ss.A @ filt.Pf[t]).T
        gains[t + 1] = J
        zs[t] = filt.zf[t] + J @ (zs[t + 1] - filt.zp[t + 1])
        Ps[t] = _sym(filt.Pf[t] + J @ (Ps[t + 1] - filt.Pp[t + 1]) @ J.T)
    J0 = np.linalg.solve(filt.Pp[0], ss.A @ ss.P0).T
    gains[0] = J0
    z0s = ss.z0 + J0 @ (zs[0] - filt.zp[0])
    P0s = _sym(ss.P0 + J0 @ (Ps[0] - filt.Pp[0]) @ J0.T)
    for t in range(T):
        lag1[t] = Ps[t] @ gains[t].T
    return SmootherResult(zs, Ps, lag1, z0s, P0s)


# ---------------------------------------------------------------------------
# state-space layout


@dataclass
class _Layout:
    columns: list[str]
    block_names: list[str]
    members: list[np.ndarray]  # per block: variable indices
    col_blocks: list[list[int]]  # per variable: block indices it loads on
    monthly: np.ndarray  # bool per variable
    r: int
    p: int
    L: int
    n_state: int
    block_offsets: list[int]
    idio_pos: dict[int, int]  # monthly variable -> state index
    idio_q_pos: dict[int, int]  # quarterly variable -> start of its 5-chain

    def factor_coords(self, var: int) -> np.ndarray:
        """Current-factor state positions the variable loads on."""
        coords = []
        for b in self.col_blocks[var]:
            off = self.block_offsets[b]
            coords.extend(range(off, off + self.r))
        return np.asarray(coords, dtype=int)

    def quarterly_selector(self, var: int) -> np.ndarray:
        """U (m x n_state) with u = U z the weighted factor aggregates."""
        m = len(self.col_blocks[var]) * self.r
        U = np.zeros((m, self.n_state))
        row = 0
        for b in self.col_blocks[var]:
            off = self.block_offsets[b]
            for j in range(self.r):
                for k in range(5):
                    U[row, off + k * self.r + j] = AGG_WEIGHTS[k]
                row += 1
        return U


def _build_layout(panel: Panel, spec: DfmSpec) -> _Layout:
    columns = panel.ids
    monthly = np.array([panel.metas[c].frequency == "monthly" for c in columns])
    if spec.blocks is not None:
        block_map = {name: list(ids) for name, ids in spec.blocks.items()}
    else:
        block_map = {}
        for c in columns:
            for b in panel.metas[c].blocks:
                block_map.setdefault(b, []).append(c)
    block_map["global"] = list(columns)  # mandatory global block over everything
    block_names = ["global"] + sorted(b for b in block_map if b != "global")
    members, col_blocks = [], [[] for _ in columns]
    kept_names = []
    for b in block_names:
        ids = [c for c in block_map[b] if c in columns]
        if len(ids) < 2 and b != "global":
            log.warning("dfm block %r has fewer than two member variables in this panel; dropped", b)
            continue
        kept_names.append(b)
        idx = np.array([columns.index(c) for c in ids], dtype=int)
        members.append(idx)
        for i in idx:
            col_blocks[i].append(len(kept_names) - 1)
    r, p = spec.factors_per_block, spec.factor_lag_order
    L = max(5, p + 1)
    offsets, pos = [], 0
    for _ in kept_names:
        offsets.append(pos)
        pos += r * L
    idio_pos = {}
    for i in np.flatnonzero(monthly):
        idio_pos[int(i)] = pos
        pos += 1
    idio_q_pos = {}
    for i in np.flatnonzero(~monthly):
        idio_q_pos[int(i)] = pos
        pos += 5
    return _Layout(
        columns=columns,
        block_names=kept_names,
        members=members,
        col_blocks=col_blocks,
        monthly=monthly,
        r=r,
        p=p,
        L=L,
        n_state=pos,
        block_offsets=offsets,
        idio_pos=idio_pos,
        idio_q_pos=idio_q_pos,
    )


def _assemble(layout: _Layout, factor_var, factor_q, loadings, idio_rho, idio_var,
              idio_q_rho, idio_q_var) -> StateSpace:
    """Put the estimated pieces into (A, C, Q, R) with the fixed structure."""
    n, r, L, p = layout.n_state, layout.r, layout.L, layout.p
    nobs = len(layout.columns)
    A = np.zeros((n, n))
    Q = np.zeros((n, n))
    C = np.zeros((nobs, n))
    for b, off in enumerate(layout.block_offsets):
        A[off : off + r, off : off + r * p] = factor_var[b]
        A[off + r : off + r * L, off : off + r * (L - 1)] = np.eye(r * (L - 1))
        Q[off : off + r, off : off + r] = factor_q[b]
    for i, s in layout.idio_pos.items():
        A[s, s] = idio_rho[i]
        Q[s, s] = idio_var[i]
    for i, s in layout.idio_q_pos.items():
        A[s, s] = idio_q_rho[i]
        A[s + 1 : s + 5, s : s + 4] = np.eye(4)
        Q[s, s] = idio_q_var[i]
    for i in range(nobs):
        if layout.monthly[i]:
            C[i, layout.factor_coords(i)] = loadings[i]
            C[i, layout.idio_pos[i]] = 1.0
        else:
            C[i] = loadings[i] @ layout.quarterly_selector(i)
            s = layout.idio_q_pos[i]
            C[i, s : s + 5] = AGG_WEIGHTS
    R = _KAPPA * np.eye(nobs)
    z0 = np.zeros(n)
    P0 = 5.0 * np.eye(n)
    return StateSpace(A, C, Q, R, z0, P0)


def _solve_psd(G: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    jitter = 1e-10 * (np.trace(G) / max(G.shape[0], 1) + 1.0)
    return np.linalg.solve(G + jitter * np.eye(G.shape[0]), rhs)


def _init_params(obs: np.ndarray, layout: _Layout):
    """PCA-based starting values on the mean-filled standardized data."""
    T = obs.shape[0]
    r, p = layout.r, layout.p
    Xfill = np.where(np.isnan(obs), 0.0, obs)  # standardized: mean fill = 0
    resid = Xfill.copy()
    factors = []
    for b, idx in enumerate(layout.members):
        m_idx = idx[layout.monthly[idx]]
        if len(m_idx) == 0:
            f = np.zeros((T, r))
            f[:, :] = np.nan
            factors.append(np.nan_to_num(f))
            continue
        sub = resid[:, m_idx]
        U, S, _ = np.linalg.svd(sub, full_matrices=False)
        f = U[:, :r] * S[:r]
        if f.shape[1] < r:
            f = np.column_stack([f, np.zeros((T, r - f.shape[1]))])
        factors.append(f)
        lam = _solve_psd(f.T @ f, f.T @ sub)
        resid[:, m_idx] = sub - f @ lam
    loadings, idio_rho, idio_var = {}, {}, {}
    idio_q_rho, idio_q_var = {}, {}
    for i in range(len(layout.columns)):
        F = np.column_stack([factors[b] for b in layout.col_blocks[i]])
        if layout.monthly[i]:
            lam = _solve_psd(F.T @ F, F.T @ Xfill[:, i])
            loadings[i] = lam
            e = Xfill[:, i] - F @ lam
            rho = float(np.clip((e[1:] @ e[:-1]) / max(e[:-1] @ e[:-1], 1e-12), -0.95, 0.95))
            idio_rho[i] = rho
            idio_var[i] = max(float(np.var(e[1:] - rho * e[:-1])), 1e-6)
        else:
            # weighted five-lag factor aggregate at the observed quarter ends
            rows = np.flatnonzero(~np.isnan(obs[:, i]))
            rows = rows[rows >= 4]
            if len(rows) < 8:
                raise EstimationError(f"quarterly variable {layout.columns[i]} has too few observations", "dfm")
            u = np.zeros((len(rows), F.shape[1]))
            for k in range(5):
                u += AGG_WEIGHTS[k] * F[rows - k]
            lam = _solve_psd(u.T @ u, u.T @ obs[rows, i])
            loadings[i] = lam
            e = obs[rows, i] - u @ lam
            idio_q_rho[i] = 0.0
            idio_q_var[i] = max(float(np.var(e)) * 9.0 / 19.0 / 3.0, 1e-6)
    factor_var, factor_q = [], []
    for b in range(len(layout.members)):
        f = factors[b]
        Y, X = f[p:], np.column_stack([f[p - l : T - l] for l in range(1, p + 1)])
        Acoef = _solve_psd(X.T @ X, X.T @ Y).T
        res = Y - X @ Acoef.T
        factor_var.append(Acoef)
        factor_q.append(_sym(res.T @ res / max(len(res), 1)) + 1e-6 * np.eye(r))
    return factor_var, factor_q, loadings, idio_rho, idio_var, idio_q_rho, idio_q_var


@dataclass
class DfmModel:
    ss: StateSpace
    layout: _Layout
    scaler: PanelScaler
    spec: DfmSpec
    loglik_trace: list[float]
    calendar_start: pd.Period


@dataclass
class _Moments:
    """Smoothed sufficient statistics accumulated by the E-step."""

    T: int
    S_zz: np.ndarray
    S_prev: np.ndarray
    S_lag: np.ndarray
    ff_sums: list
    fx_sums: list


def _e_step(obs: np.ndarray, ss: StateSpace, layout: _Layout) -> tuple[_Moments, float]:
    """Smoothed moments of the states plus the loglik of the current params."""
    T = obs.shape[0]
    filt = kalman_filter(ss, obs)
    sm = kalman_smoother(ss, filt)
    n = layout.n_state

    S_zz = np.zeros((n, n))  # sum over t of E[z_t z_t']
    S_prev = np.zeros((n, n))  # sum over t of E[z_{t-1} z_{t-1}']
    S_lag = np.zeros((n, n))  # sum over t of E[z_t z_{t-1}']
    Ezz_prev = _sym(sm.P0s + np.outer(sm.z0s, sm.z0s))
    prev_mean = sm.z0s
    n_vars = len(layout.columns)
    ff_sums = [None] * n_vars
    fx_sums = [None] * n_vars
    for t in range(T):
        Ezz = _sym(sm.Ps[t] + np.outer(sm.zs[t], sm.zs[t]))
        Elag = sm.lag1[t] + np.outer(sm.zs[t], prev_mean)
        S_zz += Ezz
        S_prev += Ezz_prev
        S_lag += Elag
        for i in np.flatnonzero(~np.isnan(obs[t])):
            x = obs[t, i]
            if layout.monthly[i]:
                coords = layout.factor_coords(i)
                ff = Ezz[np.ix_(coords, coords)]
                fx = x * sm.zs[t][coords] - Ezz[coords, layout.idio_pos[i]]
            else:
                U = layout.quarterly_selector(i)
                s = layout.idio_q_pos[i]
                ff = U @ Ezz @ U.T
                fx = x * (U @ sm.zs[t]) - U @ Ezz[:, s : s + 5] @ AGG_WEIGHTS
            if ff_sums[i] is None:
                ff_sums[i] = ff.copy()
                fx_sums[i] = fx.copy()
            else:
                ff_sums[i] += ff
                fx_sums[i] += fx
        Ezz_prev = Ezz
        prev_mean = sm.zs[t]
    return _Moments(T, S_zz, S_prev, S_lag, ff_sums, fx_sums), filt.loglik


def _m_step(mom: _Moments, layout: _Layout) -> StateSpace:
    """Exact restricted maximizers given the smoothed moments."""
    T = mom.T
    S_zz, S_prev, S_lag = mom.S_zz, mom.S_prev, mom.S_lag
    r, p = layout.r, layout.p
    factor_var, factor_q = [], []
    for b, off in enumerate(layout.block_offsets):
        cur = np.arange(off, off + r)
        lags = np.arange(off + r, off + r * (p + 1))
        Sxx = S_zz[np.ix_(lags, lags)]
        Sxy = S_zz[np.ix_(lags, cur)]
        Syy = S_zz[np.ix_(cur, cur)]
        Acoef = _solve_psd(Sxx, Sxy).T
        Qb = (Syy - Acoef @ Sxy - Sxy.T @ Acoef.T + Acoef @ Sxx @ Acoef.T) / T
        factor_var.append(Acoef)
        factor_q.append(_sym(Qb))
    idio_rho, idio_var = {}, {}
    for i, s in layout.idio_pos.items():
        num = S_lag[s, s]
        den = S_prev[s, s]
        rho = num / max(den, 1e-12)
        idio_rho[i] = rho
        idio_var[i] = max((S_zz[s, s] - 2.0 * rho * num + rho**2 * den) / T, 1e-10)
    idio_q_rho, idio_q_var = {}, {}
    for i, s in layout.idio_q_pos.items():
        # both eps_t and eps_{t-1} live inside z_t, so within-time moments suffice
        num = S_zz[s, s + 1]
        den = S_zz[s + 1, s + 1]
        rho = num / max(den, 1e-12)
        idio_q_rho[i] = rho
        idio_q_var[i] = max((S_zz[s, s] - 2.0 * rho * num + rho**2 * den) / T, 1e-10)
    loadings = {}
    for i in range(len(layout.columns)):
        if mom.ff_sums[i] is None:
            raise EstimationError(f"variable {layout.columns[i]} has no observations", "dfm")
        loadings[i] = _solve_psd(mom.ff_sums[i], mom.fx_sums[i])
    return _assemble(layout, factor_var, factor_q, loadings, idio_rho, idio_var, idio_q_rho, idio_q_var)


def em_fit(panel: Panel, spec: DfmSpec | None = None) -> tuple[DfmModel, list[float]]:
    """Estimate the factor model on a (training) panel by EM.

    The log-likelihood trace is checked to be non-decreasing at 1e-8 slack;
    hitting max_iter returns the last iterate with a warning.
    """
    spec = spec or DfmSpec()
    layout = _build_layout(panel, spec)
    counts = panel.frame.notna().sum()
    for c in panel.ids:
        if panel.metas[c].frequency == "monthly" and counts[c] < 24:
            raise EstimationError(f"monthly variable {c} has {counts[c]} < 24 observations", "dfm")
    scaler = PanelScaler().fit(panel)
    obs = scaler.transform(panel).frame.to_numpy(dtype=float)

    ss = _assemble(layout, *_init_params(obs, layout))
    trace: list[float] = []
    baseline: float | None = None
    converged = False
    for it in range(spec.max_iter + 1):
        moments, loglik = _e_step(obs, ss, layout)
        if baseline is None:
            baseline = loglik
        else:
            prev = trace[-1] if trace else baseline
            if loglik < prev - 1e-8:
                raise EstimationError(
                    f"EM monotonicity violated at iteration {it}: {prev:.10f} -> {loglik:.10f}", "dfm"
                )
            trace.append(loglik)
            if loglik - prev < spec.tolerance:
                converged = True
                break
            if it == spec.max_iter:
                break
        ss = _m_step(moments, layout)
    if not converged:
        log.warning(
            "dfm EM hit max_iter=%d without converging (last improvement %.3g)",
            spec.max_iter,
            trace[-1] - trace[-2] if len(trace) > 1 else np.nan,
        )
    model = DfmModel(ss, layout, scaler, spec, trace, panel.calendar[0])
    return model, trace


def smoothed_states(model: DfmModel, panel: Panel) -> SmootherResult:
    obs = model.scaler.transform(panel).frame[model.layout.columns].to_numpy(dtype=float)
    filt = kalman_filter(model.ss, obs)
    return kalman_smoother(model.ss, filt)


def dfm_nowcast(model: DfmModel, view: VintageView) -> float:
    """Smoothed target-quarter growth implied by the masked panel."""
    panel = view.panel
    if list(panel.frame.columns) != model.layout.columns:
        raise DataError("vintage view columns do not match the fitted model")
    end_month = quarter_end_month(view.target_quarter)
    if end_month > panel.calendar[-1]:
        raise DataError(f"panel calendar must reach {end_month} for this nowcast")
    sub = panel.slice_months(panel.calendar[0], end_month)
    sm = smoothed_states(model, sub)
    t_pos = sub.calendar.get_loc(end_month)
    target_idx = model.layout.columns.index(panel.target_id)
    std_value = float(model.ss.C[target_idx] @ sm.zs[t_pos])
    return float(model.scaler.inverse_transform_values(panel.target_id, [std_value])[0])
