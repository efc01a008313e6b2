"""Fully connected ReLU regressor trained with Adam.

Loss on a mini-batch is ``0.5 * mean((f(X) - y)^2) + 0.5 * l2 * sum(W^2)``
(weights only, biases unpenalized).  Targets are standardized inside the model.
Training stops when the validation loss has not improved by at least ``tol``
for ``patience`` consecutive epochs, or at ``max_epochs``; the best-validation
weights are restored.
"""

from __future__ import annotations

import numpy as np

from .rowwise import rowwise_matmul


def init_layers(sizes: list[int], rng: np.random.Generator) -> list[np.ndarray]:
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / fan_in)
        params.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params: list[np.ndarray], X: np.ndarray, rowwise: bool = False) -> np.ndarray:
    h = X
    n_layers = len(params) // 2
    for i in range(n_layers):
        W, b = params[2 * i], params[2 * i + 1]
        h = (rowwise_matmul(h, W) if rowwise else h @ W) + b
        if i < n_layers - 1:
            h = np.maximum(h, 0.0)
    return h[:, 0]


def loss_and_grad(params: list[np.ndarray], X: np.ndarray, y: np.ndarray, l2: float) -> tuple[float, list[np.ndarray]]:
    n_layers = len(params) // 2
    acts = [X]
    h = X
    for i in range(n_layers):
        h = h @ params[2 * i] + params[2 * i + 1]
        if i < n_layers - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    err = acts[-1][:, 0] - y
    n = X.shape[0]
    loss = 0.5 * float(np.mean(err * err))
    loss += 0.5 * l2 * sum(float(np.sum(params[2 * i] ** 2)) for i in range(n_layers))
    grads: list[np.ndarray] = [None] * len(params)  # type: ignore[list-item]
    delta = (err / n)[:, None]
    for i in reversed(range(n_layers)):
        grads[2 * i] = acts[i].T @ delta + l2 * params[2 * i]
        grads[2 * i + 1] = delta.sum(axis=0)
        if i:
            delta = (delta @ params[2 * i].T) * (acts[i] > 0)
    return loss, grads


class MlpModel:
    family = "mlp"

    def __init__(self, hidden: tuple[int, ...] = (100, 50), learning_rate: float = 1e-3, l2: float = 1e-4,
                 batch_size: int = 256, max_epochs: int = 500, tol: float = 1e-5, patience: int = 10) -> None:
        self.hidden = tuple(int(h) for h in hidden)
        self.learning_rate = float(learning_rate)
        self.l2 = float(l2)
        self.batch_size = int(batch_size)
        self.max_epochs = int(max_epochs)
        self.tol = float(tol)
        self.patience = int(patience)
        self.params: list[np.ndarray] = []
        self.y_mean = 0.0
        self.y_std = 1.0
        self.epochs_run = 0
        self.val_curve: list[float] = []

    def fit(self, X, y, X_val=None, y_val=None, seed: int = 0) -> "MlpModel":
        rng = np.random.default_rng(seed)
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.y_mean = float(y.mean())
        sd = float(y.std())
        self.y_std = sd if sd > 0 else 1.0
        ys = (y - self.y_mean) / self.y_std
        if X_val is None or len(X_val) == 0:
            X_val, yv = X, ys
        else:
            yv = (np.asarray(y_val, dtype=float) - self.y_mean) / self.y_std
        params = init_layers([X.shape[1], *self.hidden, 1], rng)
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        b1, b2, eps = 0.9, 0.999, 1e-8
        t = 0
        best = np.inf
        best_params = [p.copy() for p in params]
        stall = 0
        self.val_curve = []
        n = X.shape[0]
        for epoch in range(self.max_epochs):
            order = rng.permutation(n)
            for s in range(0, n, self.batch_size):
                idx = order[s : s + self.batch_size]
                _, grads = loss_and_grad(params, X[idx], ys[idx], self.l2)
                t += 1
                lr_t = self.learning_rate * np.sqrt(1 - b2**t) / (1 - b1**t)
                for p, g, mi, vi in zip(params, grads, m, v):
                    mi *= b1
                    mi += (1 - b1) * g
                    vi *= b2
                    vi += (1 - b2) * g * g
                    p -= lr_t * mi / (np.sqrt(vi) + eps)
            val = 0.5 * float(np.mean((forward(params, X_val) - yv) ** 2))
            self.val_curve.append(val)
            self.epochs_run = epoch + 1
            if val < best - self.tol:
                stall = 0
            else:
                stall += 1
            if val < best:
                best = val
                best_params = [p.copy() for p in params]
            if stall >= self.patience:
                break
        self.params = best_params
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        return forward(self.params, np.asarray(X, dtype=float), rowwise=True) * self.y_std + self.y_mean

    def state(self) -> dict:
        s = {
            "hyper": [self.learning_rate, self.l2, self.batch_size, self.max_epochs, self.tol, self.patience],
            "hidden": np.array(self.hidden, dtype=np.int64),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }
        for i, p in enumerate(self.params):
            s[f"p{i}"] = p
        return s

    @classmethod
    def from_state(cls, s: dict) -> "MlpModel":
        lr, l2, bs, me, tol, pat = s["hyper"]
        m = cls(tuple(int(h) for h in s["hidden"]), lr, l2, int(bs), int(me), tol, int(pat))
        m.y_mean = float(s["y_mean"])
        m.y_std = float(s["y_std"])
        n_params = 2 * (len(m.hidden) + 1)
        m.params = [np.asarray(s[f"p{i}"]) for i in range(n_params)]
        return m
