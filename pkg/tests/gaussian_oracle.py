"""Brute-force joint-Gaussian conditioning oracle for small state spaces.

Builds the full covariance of (z_1..z_T, observed y cells) and conditions
directly, giving exact filtered/smoothed moments and the observation
log-likelihood to compare against the recursive implementations.
"""

from __future__ import annotations

import numpy as np


def joint_moments(ss, T: int):
    n = ss.A.shape[0]
    mu = np.zeros((T, n))
    V = np.zeros((T, T, n, n))
    mu[0] = ss.A @ ss.z0
    V[0, 0] = ss.A @ ss.P0 @ ss.A.T + ss.Q
    for t in range(1, T):
        mu[t] = ss.A @ mu[t - 1]
        V[t, t] = ss.A @ V[t - 1, t - 1] @ ss.A.T + ss.Q
    for s in range(T):
        for t in range(s + 1, T):
            V[t, s] = ss.A @ V[t - 1, s]
            V[s, t] = V[t, s].T
    return mu, V


def conditional_states(ss, obs: np.ndarray, upto: int | None = None):
    """E[z_t | observed cells with time <= upto] for every t (None: all cells).

    Returns (means (T, n), loglik of all observed cells).
    """
    obs = np.asarray(obs, dtype=float)
    T, n_obs = obs.shape
    n = ss.A.shape[0]
    mu, V = joint_moments(ss, T)
    cells = [(t, i) for t in range(T) for i in range(n_obs) if not np.isnan(obs[t, i])]
    m_y = np.array([ss.C[i] @ mu[t] for t, i in cells])
    y = np.array([obs[t, i] for t, i in cells])
    Vy = np.empty((len(cells), len(cells)))
    for a, (t, i) in enumerate(cells):
        for b, (s, j) in enumerate(cells):
            cov_z = V[t, s] if t >= s else V[s, t].T
            Vy[a, b] = ss.C[i] @ cov_z @ ss.C[j]
            if t == s:
                Vy[a, b] += ss.R[i, j]
    resid = y - m_y
    sign, logdet = np.linalg.slogdet(Vy)
    loglik = -0.5 * (len(cells) * np.log(2 * np.pi) + logdet + resid @ np.linalg.solve(Vy, resid))

    use = np.array([a for a, (s, _) in enumerate(cells) if upto is None or s <= upto], dtype=int)
    means = np.empty((T, n))
    for t in range(T):
        if len(use) == 0:
            means[t] = mu[t]
            continue
        Czy = np.empty((n, len(use)))
        for col, a in enumerate(use):
            s, j = cells[a]
            cov_z = V[t, s] if t >= s else V[s, t].T
            Czy[:, col] = cov_z @ ss.C[j]
        sub = Vy[np.ix_(use, use)]
        means[t] = mu[t] + Czy @ np.linalg.solve(sub, resid[use])
    return means, float(loglik)


def filtered_means(ss, obs: np.ndarray) -> np.ndarray:
    """E[z_t | y_{1..t}] per step, by conditioning on the growing cell set."""
    obs = np.asarray(obs, dtype=float)
    T = obs.shape[0]
    out = np.empty((T, ss.A.shape[0]))
    for t in range(T):
        means, _ = conditional_states(ss, obs, upto=t)
        out[t] = means[t]
    return out


def smoothed_means(ss, obs: np.ndarray):
    return conditional_states(ss, obs, upto=None)
