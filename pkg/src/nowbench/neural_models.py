"""Feedforward MLP and LSTM regressors trained by from-scratch backpropagation.

Both networks expose ``parameters()`` and ``loss_and_grads()`` so the analytic
gradients can be checked against central finite differences. Training uses
plain momentum SGD, deterministic under the configured seed. The LSTM is
seed-averaged: M networks trained from distinct seeds, predictions averaged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EstimationError


@dataclass
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise EstimationError("epochs must be >= 1")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _sgd(net, X, y, cfg: TrainConfig, rng: np.random.Generator) -> list[float]:
    """Mini-batch momentum SGD on mean squared error; returns per-epoch loss."""
    n = X.shape[0]
    velocity = [np.zeros_like(p) for p in net.parameters()]
    history = []
    batch = min(cfg.batch_size, n)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            rows = order[start : start + batch]
            loss, grads = net.loss_and_grads(X[rows], y[rows])
            if not np.isfinite(loss):
                raise EstimationError("training diverged: non-finite loss (reduce the step size)")
            for p, v, g in zip(net.parameters(), velocity, grads):
                v *= cfg.momentum
                v -= cfg.learning_rate * g
                p += v
        full_loss, _ = net.loss_and_grads(X, y)
        if not np.isfinite(full_loss):
            raise EstimationError("training diverged: non-finite loss (reduce the step size)")
        history.append(float(full_loss))
    return history


class MlpNet:
    """Fully connected net: rectifier hidden layers, identity output, MSE loss."""

    def __init__(self, n_inputs: int, hidden_layers: tuple[int, ...] = (32,), seed: int = 0):
        self.n_inputs = n_inputs
        self.hidden_layers = tuple(hidden_layers)
        rng = np.random.default_rng(seed)
        sizes = [n_inputs, *self.hidden_layers, 1]
        self.weights = []
        self.biases = []
        for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
            # small positive hidden bias keeps units off the rectifier kink
            bias = 0.01 if layer < len(sizes) - 2 else 0.0
            self.biases.append(np.full(fan_out, bias))

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def predict(self, X) -> np.ndarray:
        a = np.asarray(X, dtype=float)
        last = len(self.weights) - 1
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ W.T + b
            if l < last:
                a = np.maximum(a, 0.0)
        return a[:, 0]

    def loss_and_grads(self, X, y) -> tuple[float, list[np.ndarray]]:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        n = X.shape[0]
        last = len(self.weights) - 1
        acts = [X]
        pre = []
        a = X
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W.T + b
            pre.append(z)
            a = np.maximum(z, 0.0) if l < last else z
            acts.append(a)
        resid = acts[-1][:, 0] - y
        loss = float(resid @ resid) / n
        dW = [np.zeros_like(W) for W in self.weights]
        db = [np.zeros_like(b) for b in self.biases]
        delta = (2.0 / n) * resid[:, None]
        for l in range(last, -1, -1):
            dW[l] = delta.T @ acts[l]
            db[l] = delta.sum(axis=0)
            if l > 0:
                delta = (delta @ self.weights[l]) * (pre[l - 1] > 0.0)
        return loss, [*dW, *db]


def mlp_fit(X, y, hidden_layers=(32,), config: TrainConfig | None = None) -> tuple[MlpNet, list[float]]:
    """Train an MLP; returns the net and the per-epoch full-sample loss trace."""
    cfg = config or TrainConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    net = MlpNet(X.shape[1], hidden_layers, seed=cfg.seed)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    history = _sgd(net, X, y, cfg, rng)
    return net, history


class LstmNet:
    """Single-layer LSTM over a monthly window with a linear readout.

    Input shape (n_sequences, n_timesteps, n_features); the prediction reads
    the final hidden state.
    """

    GATES = ("i", "f", "o", "g")

    def __init__(self, n_features: int, hidden_size: int = 32, seed: int = 0):
        self.n_features = n_features
        self.hidden_size = hidden_size
        rng = np.random.default_rng(seed)
        H, d = hidden_size, n_features
        sw = 1.0 / np.sqrt(d)
        su = 1.0 / np.sqrt(H)
        self.W = {k: rng.normal(0.0, sw, size=(H, d)) for k in self.GATES}
        self.U = {k: rng.normal(0.0, su, size=(H, H)) for k in self.GATES}
        self.b = {k: np.zeros(H) for k in self.GATES}
        self.w_out = rng.normal(0.0, su, size=H)
        self.b_out = np.zeros(1)

    def parameters(self) -> list[np.ndarray]:
        params = []
        for k in self.GATES:
            params.extend((self.W[k], self.U[k], self.b[k]))
        params.extend((self.w_out, self.b_out))
        return params

    def _forward(self, X):
        n, T, _ = X.shape
        H = self.hidden_size
        h = np.zeros((n, H))
        c = np.zeros((n, H))
        caches = []
        for t in range(T):
            x = X[:, t, :]
            i = _sigmoid(x @ self.W["i"].T + h @ self.U["i"].T + self.b["i"])
            f = _sigmoid(x @ self.W["f"].T + h @ self.U["f"].T + self.b["f"])
            o = _sigmoid(x @ self.W["o"].T + h @ self.U["o"].T + self.b["o"])
            g = np.tanh(x @ self.W["g"].T + h @ self.U["g"].T + self.b["g"])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            caches.append((x, h, c, i, f, o, g, tc))
            h, c = h_new, c_new
        return h, caches

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        h, _ = self._forward(X)
        return h @ self.w_out + self.b_out[0]

    def loss_and_grads(self, X, y) -> tuple[float, list[np.ndarray]]:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        n, T, _ = X.shape
        h_T, caches = self._forward(X)
        pred = h_T @ self.w_out + self.b_out[0]
        resid = pred - y
        loss = float(resid @ resid) / n

        dW = {k: np.zeros_like(self.W[k]) for k in self.GATES}
        dU = {k: np.zeros_like(self.U[k]) for k in self.GATES}
        db = {k: np.zeros_like(self.b[k]) for k in self.GATES}
        dw_out = h_T.T @ ((2.0 / n) * resid)
        db_out = np.array([(2.0 / n) * resid.sum()])

        dh = np.outer((2.0 / n) * resid, self.w_out)
        dc = np.zeros_like(dh)
        for t in range(T - 1, -1, -1):
            x, h_prev, c_prev, i, f, o, g, tc = caches[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc**2)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_prev = dc * f
            da = {
                "i": di * i * (1.0 - i),
                "f": df * f * (1.0 - f),
                "o": do * o * (1.0 - o),
                "g": dg * (1.0 - g**2),
            }
            dh_prev = np.zeros_like(dh)
            for k in self.GATES:
                dW[k] += da[k].T @ x
                dU[k] += da[k].T @ h_prev
                db[k] += da[k].sum(axis=0)
                dh_prev += da[k] @ self.U[k]
            dh, dc = dh_prev, dc_prev

        grads = []
        for k in self.GATES:
            grads.extend((dW[k], dU[k], db[k]))
        grads.extend((dw_out, db_out))
        return loss, grads


@dataclass
class LstmEnsemble:
    """Mean prediction over M independently seeded LSTM fits."""

    members: list[LstmNet]
    n_timesteps: int

    def predict(self, X) -> np.ndarray:
        return np.mean([m.predict(X) for m in self.members], axis=0)


def lstm_fit(
    sequences,
    y,
    hidden_size: int = 32,
    n_members: int = 10,
    config: TrainConfig | None = None,
) -> LstmEnsemble:
    """Train the seed ensemble on (n, T, d) sequences."""
    cfg = config or TrainConfig(epochs=150)
    X = np.asarray(sequences, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 3:
        raise EstimationError("LSTM input must be (n_sequences, n_timesteps, n_features)", "lstm")
    members = []
    for m, ss in enumerate(np.random.SeedSequence([cfg.seed, 7]).spawn(n_members)):
        member_seed = int(ss.generate_state(1)[0])
        net = LstmNet(X.shape[2], hidden_size, seed=member_seed)
        rng = np.random.default_rng(np.random.SeedSequence([member_seed, 1]))
        member_cfg = TrainConfig(cfg.epochs, cfg.learning_rate, cfg.momentum, cfg.batch_size, member_seed)
        _sgd(net, X, y, member_cfg, rng)
        members.append(net)
    return LstmEnsemble(members, X.shape[1])


def build_sequences(matrix: np.ndarray, end_positions, n_timesteps: int) -> np.ndarray:
    """Slice (T_months, d) into windows of n_timesteps ending at each position."""
    matrix = np.asarray(matrix, dtype=float)
    out = np.empty((len(end_positions), n_timesteps, matrix.shape[1]))
    for k, end in enumerate(end_positions):
        start = end - n_timesteps + 1
        if start < 0 or end >= matrix.shape[0]:
            raise EstimationError(f"sequence window [{start}, {end}] outside the monthly matrix", "lstm")
        out[k] = matrix[start : end + 1]
    return out


def gradient_check(net: MlpNet | LstmNet, X, y, step: float = 1e-5) -> float:
    """Max relative error between analytic and central finite-difference grads."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n_params = sum(p.size for p in net.parameters())
    if n_params > 10_000:
        raise EstimationError(f"gradient check limited to small nets (got {n_params} parameters)")
    _, grads = net.loss_and_grads(X, y)
    worst = 0.0
    for p, g in zip(net.parameters(), grads):
        flat = p.ravel()
        gflat = g.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up, _ = net.loss_and_grads(X, y)
            flat[j] = orig - step
            down, _ = net.loss_and_grads(X, y)
            flat[j] = orig
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(gflat[j]) + abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[j] - numeric) / denom)
    return worst
