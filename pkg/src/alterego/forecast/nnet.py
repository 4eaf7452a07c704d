"""Two-hidden-layer sigmoid network trained by minibatch SGD."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .forest import seed_sequence

log = logging.getLogger(__name__)

HIDDEN = (10, 10)


class TrainingDiverged(RuntimeError):
    pass


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def init_params(n_in: int, rng: np.random.Generator | None, zeros: bool = False) -> list[np.ndarray]:
    """Glorot-uniform weights and zero biases; ``zeros`` gives an all-zero net."""
    sizes = (n_in,) + HIDDEN + (1,)
    params = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        if zeros:
            W = np.zeros((a, b))
        else:
            lim = np.sqrt(6.0 / (a + b))
            W = rng.uniform(-lim, lim, (a, b))
        params += [W, np.zeros(b)]
    return params


def forward(params, X) -> tuple[np.ndarray, list[np.ndarray]]:
    W1, b1, W2, b2, W3, b3 = params
    h1 = _sigmoid(X @ W1 + b1)
    h2 = _sigmoid(h1 @ W2 + b2)
    return (h2 @ W3 + b3)[:, 0], [h1, h2]


def loss_and_grad(params, X, y, l2: float) -> tuple[float, list[np.ndarray]]:
    """Mean squared error plus ``l2 * sum(W**2)`` over weight matrices."""
    W1, b1, W2, b2, W3, b3 = params
    out, (h1, h2) = forward(params, X)
    n = len(y)
    err = out - y
    loss = float(err @ err / n + l2 * ((W1 ** 2).sum() + (W2 ** 2).sum() + (W3 ** 2).sum()))
    d3 = (2.0 / n) * err[:, None]
    gW3 = h2.T @ d3 + 2 * l2 * W3
    gb3 = d3.sum(axis=0)
    d2 = (d3 @ W3.T) * h2 * (1 - h2)
    gW2 = h1.T @ d2 + 2 * l2 * W2
    gb2 = d2.sum(axis=0)
    d1 = (d2 @ W2.T) * h1 * (1 - h1)
    gW1 = X.T @ d1 + 2 * l2 * W1
    gb1 = d1.sum(axis=0)
    return loss, [gW1, gb1, gW2, gb2, gW3, gb3]


@dataclass(frozen=True, eq=False)
class NeuralNetModel:
    kind: str
    params: tuple[np.ndarray, ...]
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float
    tuning: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.x_mean) / self.x_scale
        return self.y_mean + self.y_scale * forward(self.params, Z)[0]


def _train(Z, t, Zv, yv_std, lr, l2, batch, max_epochs, patience, rng, zeros):
    params = init_params(Z.shape[1], rng, zeros)
    n = len(t)
    best, best_params, best_epoch, wait = np.inf, [p.copy() for p in params], 0, 0
    for epoch in range(1, max_epochs + 1):
        perm = rng.permutation(n)
        for s in range(0, n, batch):
            rows = perm[s:s + batch]
            loss, grads = loss_and_grad(params, Z[rows], t[rows], l2)
            if not np.isfinite(loss):
                raise FloatingPointError
            for p, g in zip(params, grads):
                p -= lr * g
        pred = forward(params, Zv)[0]
        val = float(np.mean((pred - yv_std) ** 2))
        if not np.isfinite(val):
            raise FloatingPointError
        if val < best:
            best, best_params, best_epoch, wait = val, [p.copy() for p in params], epoch, 0
        else:
            wait += 1
            if wait >= patience:
                break
    return best, best_params, best_epoch


def fit_neural_net(X, y, X_val, y_val, seed, learning_rates=(1e-2, 1e-3), l2s=(1e-4, 1e-3),
                   batch: int = 32, max_epochs: int = 500, patience: int = 25,
                   max_restarts: int = 3, zeros: bool = False) -> NeuralNetModel:
    """Grid over learning rate and l2 penalty, early-stopped on validation MSE.

    A NaN or infinite loss restarts the configuration with half the
    learning rate, at most ``max_restarts`` times.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    x_mean = X.mean(axis=0)
    x_sd = X.std(axis=0)
    x_sd = np.where(x_sd > 0, x_sd, 1.0)
    y_mean = float(y.mean())
    y_sd = float(y.std()) or 1.0
    Z = (X - x_mean) / x_sd
    t = (y - y_mean) / y_sd
    Zv = (np.asarray(X_val, dtype=float) - x_mean) / x_sd
    yv = (np.asarray(y_val, dtype=float) - y_mean) / y_sd

    grid = [(lr, l2) for lr in learning_rates for l2 in l2s]
    children = seed_sequence(seed).spawn(len(grid))
    best = (np.inf, None, None)
    for (lr0, l2), child in zip(grid, children):
        lr = lr0
        for attempt in range(max_restarts + 1):
            rng = np.random.default_rng(child.spawn(1)[0]) if attempt else np.random.default_rng(child)
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    val, params, epochs = _train(Z, t, Zv, yv, lr, l2, batch, max_epochs, patience, rng, zeros)
                break
            except FloatingPointError:
                log.warning("NN diverged at lr=%g; restarting with lr=%g", lr, lr / 2)
                lr /= 2
        else:
            raise TrainingDiverged(f"training diverged after {max_restarts} restarts")
        if val < best[0]:
            best = (val, params, {"learning_rate": lr, "l2": l2, "epochs": epochs,
                                  "val_mse": val * y_sd ** 2})
    _, params, tuning = best
    return NeuralNetModel("NN", tuple(params), x_mean, x_sd, y_mean, y_sd, tuning)
