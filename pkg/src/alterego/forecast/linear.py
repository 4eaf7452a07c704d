"""Ordinary least squares and elastic net by coordinate descent."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

RIDGE_FALLBACK = 1e-8


class RankDeficient(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class LinearModel:
    """``y = intercept + X @ coef`` on the original feature scale.

    ``std_coef`` are the slopes on standardized features (EN only).
    """

    kind: str
    intercept: float
    coef: np.ndarray
    std_coef: np.ndarray | None = None
    tuning: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=float) @ self.coef


def fit_ols(X, y, ridge_fallback: bool = True) -> LinearModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([np.ones(len(y)), X])
    rank = np.linalg.matrix_rank(A)
    if rank == A.shape[1]:
        beta = np.linalg.lstsq(A, y, rcond=None)[0]
        tuning = {"ridge": 0.0}
    elif ridge_fallback:
        log.debug("rank-deficient design (%d < %d); ridge fallback", rank, A.shape[1])
        P = np.eye(A.shape[1]) * RIDGE_FALLBACK
        P[0, 0] = 0.0
        beta = np.linalg.solve(A.T @ A / len(y) + P, A.T @ y / len(y))
        tuning = {"ridge": RIDGE_FALLBACK}
    else:
        raise RankDeficient(f"design matrix rank {rank} < {A.shape[1]}")
    return LinearModel("OLS", float(beta[0]), beta[1:], None, tuning)


# ------------------------------------------------------------ elastic net

@dataclass(frozen=True)
class _Standardizer:
    mean: np.ndarray
    scale: np.ndarray
    keep: np.ndarray  # columns with nonzero training variance

    @classmethod
    def fit(cls, X: np.ndarray) -> "_Standardizer":
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        keep = sd > 1e-12 * np.maximum(1.0, np.abs(mean))
        if (~keep).any():
            log.warning("dropping %d zero-variance features", int((~keep).sum()))
        return cls(mean, np.where(keep, sd, 1.0), keep)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return ((X - self.mean) / self.scale)[:, self.keep]


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def en_objective(Z, y, intercept, b, alpha, lam) -> float:
    """``MSE + alpha*lam*|b|_1 + 0.5*(1-alpha)*lam*|b|_2^2``."""
    r = y - intercept - Z @ b
    return float(np.mean(r ** 2) + alpha * lam * np.abs(b).sum() + 0.5 * (1 - alpha) * lam * b @ b)


def _coordinate_descent(G, c, b, alpha, lam, tol, max_sweeps) -> np.ndarray:
    """Minimise ``b'Gb - 2c'b + penalty`` in place.

    ``G = Z'Z/n`` with unit diagonal and ``c = Z'(y - ybar)/n``.  Each
    update is ``b_j = S(rho_j, alpha*lam/2) / (1 + (1-alpha)*lam/2)``.
    After a full sweep, only the nonzero coordinates are cycled until they
    settle, then a full sweep confirms.
    """
    thr = alpha * lam / 2.0
    den = 1.0 + (1.0 - alpha) * lam / 2.0
    p = len(c)
    Gb = G @ b
    full = np.arange(p)
    coords = full
    for _ in range(max_sweeps):
        delta = 0.0
        for j in coords:
            old = b[j]
            rho = c[j] - Gb[j] + old
            new = np.sign(rho) * max(abs(rho) - thr, 0.0) / den
            if new != old:
                Gb += G[:, j] * (new - old)
                b[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            if coords is full:
                break
            coords = full
        else:
            active = np.flatnonzero(b)
            coords = active if coords is full and len(active) < p else coords
    return b


def _polish(G, c, b, alpha, lam):
    """Exact solution on the support and signs of ``b`` if it passes the KKT check."""
    thr = alpha * lam / 2.0
    ridge = (1.0 - alpha) * lam / 2.0
    A = np.flatnonzero(b)
    exact = np.zeros_like(b)
    if len(A):
        s = np.sign(b[A])
        try:
            exact[A] = np.linalg.solve(G[np.ix_(A, A)] + ridge * np.eye(len(A)), c[A] - thr * s)
        except np.linalg.LinAlgError:
            return None
        if np.any(np.sign(exact[A]) != s):
            return None
    grad = c - G @ exact
    inactive = np.ones(len(b), dtype=bool)
    inactive[A] = False
    if np.any(np.abs(grad[inactive]) > thr * (1 + 1e-10) + 1e-15 * max(np.abs(c).max(), 1e-300)):
        return None
    return exact


def _solve(G, c, b, alpha, lam, tol):
    """Coordinate descent to a loose tolerance, then an exact active-set polish."""
    b = _coordinate_descent(G, c, b, alpha, lam, tol * 1e6, 10_000)
    exact = _polish(G, c, b, alpha, lam)
    if exact is not None:
        return exact
    b = _coordinate_descent(G, c, b, alpha, lam, tol, 100_000)
    exact = _polish(G, c, b, alpha, lam)
    return b if exact is None else exact


def elastic_net(X, y, alpha: float, lam: float, tol: float = 1e-12) -> LinearModel:
    """Elastic net at one ``(alpha, lam)`` on internally standardized features."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    st = _Standardizer.fit(X)
    Z = st(X)
    n = len(y)
    ybar = y.mean()
    G = Z.T @ Z / n
    c = Z.T @ (y - ybar) / n
    b = _solve(G, c, np.zeros(Z.shape[1]), alpha, lam, tol * max(y.std(), 1e-300))
    return _to_model(st, ybar, b, {"alpha": alpha, "lambda": lam})


def _to_model(st: _Standardizer, ybar: float, b: np.ndarray, tuning: dict) -> LinearModel:
    std_coef = np.zeros(len(st.keep))
    std_coef[st.keep] = b
    coef = std_coef / st.scale
    intercept = ybar - float(st.mean @ coef)
    return LinearModel("EN", intercept, coef, std_coef, tuning)


def lambda_max(X, y) -> float:
    """Smallest lambda that zeros every slope at alpha = 1."""
    st = _Standardizer.fit(np.asarray(X, dtype=float))
    Z = st(np.asarray(X, dtype=float))
    c = Z.T @ (y - np.mean(y)) / len(y)
    return 2.0 * float(np.abs(c).max()) if len(c) else 0.0


def fit_elastic_net(X, y, X_val, y_val, alphas=(0.0, 0.25, 0.5, 0.75, 1.0), n_lambdas: int = 50,
                    ratio: float = 1e-4, tol: float = 1e-9) -> LinearModel:
    """Tune ``(alpha, lambda)`` on validation MSE over a warm-started path.

    The lambda grid runs log-spaced from ``lambda_max`` down to
    ``ratio * lambda_max``; ties keep the earlier grid point (smaller
    alpha, then larger lambda).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    st = _Standardizer.fit(X)
    Z = st(X)
    Zv = st(np.asarray(X_val, dtype=float))
    n = len(y)
    ybar = y.mean()
    G = Z.T @ Z / n
    c = Z.T @ (y - ybar) / n
    lmax = 2.0 * float(np.abs(c).max()) if len(c) else 0.0
    if lmax <= 0:
        return _to_model(st, ybar, np.zeros(Z.shape[1]), {"alpha": 1.0, "lambda": 0.0, "val_mse": np.nan})
    lams = lmax * np.logspace(0, np.log10(ratio), n_lambdas)
    tol_abs = tol * max(y.std(), 1e-300)
    best = (np.inf, None, None, None)
    for a in alphas:
        b = np.zeros(Z.shape[1])
        for lam in lams:
            b = _solve(G, c, b, a, lam, tol_abs)
            mse = float(np.mean((y_val - ybar - Zv @ b) ** 2))
            if mse < best[0]:
                best = (mse, a, lam, b.copy())
    mse, a, lam, b = best
    return _to_model(st, ybar, b, {"alpha": float(a), "lambda": float(lam), "val_mse": mse})
