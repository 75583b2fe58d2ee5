"""L2-regularised logistic regression fitted by full-batch gradient descent."""

from __future__ import annotations

import numpy as np


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def loss_and_grad(params: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean log-loss plus ``l2/2 * |w|^2`` (bias unpenalised) and its gradient.

    ``params`` is ``[w_1..w_d, b]``.
    """
    w, b = params[:-1], params[-1]
    z = X @ w + b
    # log(1 + e^z) - y z, evaluated stably
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w)
    r = sigmoid(z) - y
    grad = np.empty_like(params)
    grad[:-1] = X.T @ r / len(y) + l2 * w
    grad[-1] = r.mean()
    return float(loss), grad


class LogisticRegression:
    def __init__(self, learning_rate: float = 0.1, epochs: int = 500, l2: float = 1e-4):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.l2 = l2
        self.params: np.ndarray | None = None
        self.mean_: np.ndarray | None = None
        self.scale_: np.ndarray | None = None

    def _standardize(self, X):
        return (X - self.mean_) / self.scale_

    def fit(self, X, y, seed: int = 0) -> "LogisticRegression":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        Z = self._standardize(X)
        rng = np.random.default_rng(seed)
        params = rng.normal(scale=1e-3, size=X.shape[1] + 1)
        for _ in range(self.epochs):
            _, g = loss_and_grad(params, Z, y, self.l2)
            params -= self.learning_rate * g
        self.params = params
        return self

    def predict_proba(self, X) -> np.ndarray:
        Z = self._standardize(np.asarray(X, dtype=float))
        return sigmoid(Z @ self.params[:-1] + self.params[-1])

    def get_state(self) -> dict:
        return {"params": self.params.tolist(), "mean": self.mean_.tolist(), "scale": self.scale_.tolist()}

    def set_state(self, state: dict) -> "LogisticRegression":
        self.params = np.asarray(state["params"], dtype=float)
        self.mean_ = np.asarray(state["mean"], dtype=float)
        self.scale_ = np.asarray(state["scale"], dtype=float)
        return self
