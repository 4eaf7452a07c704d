"""Long-only mean-variance allocation with a cash slack, equal weights, drift."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

KKT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Weights:
    assets: tuple[str, ...]
    w: np.ndarray
    kkt_residual: float = 0.0

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if len(w) != len(self.assets):
            raise ValueError("weights and assets differ in length")
        if (w < 0).any():
            raise ValueError(f"negative weight {w.min()}")
        if w.sum() > 1 + 1e-10:
            raise ValueError(f"weights sum to {w.sum()} > 1")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "assets", tuple(self.assets))

    @property
    def cash(self) -> float:
        return 1.0 - float(self.w.sum())

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.assets, self.w.tolist()))


@dataclass(frozen=True, eq=False)
class AllocationProblem:
    mu: np.ndarray
    sigma: np.ndarray
    gamma: float = 1.0
    assets: tuple[str, ...] | None = None

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.shape != (len(mu), len(mu)):
            raise ValueError(f"dimension mismatch: mu {mu.shape}, sigma {sigma.shape}")
        if not np.isfinite(mu).all() or not np.isfinite(sigma).all():
            raise ValueError("non-finite inputs")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        names = self.assets if self.assets is not None else tuple(str(i) for i in range(len(mu)))
        object.__setattr__(self, "assets", tuple(names))

    def objective(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float(w @ self.mu - 0.5 * self.gamma * w @ self.sigma @ w)


class NotPSDError(ValueError):
    pass


def kkt_residual(problem: AllocationProblem, w: np.ndarray, budget_mult: float | None = None) -> float:
    """Largest violation of the optimality conditions at ``w``.

    With ``g = mu - gamma * Sigma w`` and budget multiplier ``lam >= 0``:
    ``g_j = lam`` on the support, ``g_j <= lam`` off it, and
    ``lam * (1 - sum w) = 0``.  When ``budget_mult`` is omitted the best
    multiplier is inferred from ``w``.
    """
    g = problem.mu - problem.gamma * problem.sigma @ w
    support = w > 0
    slack = 1.0 - w.sum()
    if budget_mult is None:
        budget_mult = max(float(g[support].mean()), 0.0) if support.any() and slack < 1e-9 else 0.0
    lam = budget_mult
    res = [max(0.0, -lam), abs(lam * slack), max(0.0, -slack), max(0.0, -w.min(initial=0.0))]
    if support.any():
        res.append(float(np.abs(g[support] - lam).max()))
    if (~support).any():
        res.append(float(max(0.0, (g[~support] - lam).max())))
    return max(res)


def solve_long_only_mv(problem: AllocationProblem, max_iter: int = 500) -> Weights:
    """Maximise ``w'mu - gamma/2 w'Sigma w`` subject to ``w >= 0, sum(w) <= 1``.

    Primal active-set method over the bounds and the budget row, started at
    the all-cash point.  A semidefinite Sigma gets a ``1e-10 * trace / N``
    ridge; an indefinite one is rejected.
    """
    mu, n = problem.mu, len(problem.mu)
    if n == 0:
        return Weights((), np.zeros(0))
    sigma = 0.5 * (problem.sigma + problem.sigma.T)
    eig = np.linalg.eigvalsh(sigma)
    scale = max(abs(eig).max(), 1e-300)
    if eig[0] < -1e-10 * scale:
        raise NotPSDError(f"covariance is not positive semidefinite (min eigenvalue {eig[0]:.3g})")
    if eig[0] <= 1e-12 * scale:
        ridge = 1e-10 * max(np.trace(sigma), 1e-300) / n
        log.debug("semidefinite covariance: adding ridge %.3g", ridge)
        sigma = sigma + ridge * np.eye(n)
    Q = problem.gamma * sigma

    w = np.zeros(n)
    free = np.zeros(n, dtype=bool)
    budget = False
    nu = 0.0
    for _ in range(max_iter):
        F = np.flatnonzero(free)
        target = np.zeros(n)
        nu = 0.0
        if len(F):
            if budget:
                k = len(F)
                A = np.zeros((k + 1, k + 1))
                A[:k, :k] = Q[np.ix_(F, F)]
                A[:k, k] = 1.0
                A[k, :k] = 1.0
                sol = np.linalg.solve(A, np.append(mu[F], 1.0))
                target[F], nu = sol[:k], sol[k]
            else:
                target[F] = np.linalg.solve(Q[np.ix_(F, F)], mu[F])
        p = target - w
        if np.abs(p).max() <= 1e-15:
            w = target
            g = mu - Q @ w
            bound_mult = np.where(free, np.inf, nu - g)
            j = int(np.argmin(bound_mult))
            worst_bound = bound_mult[j]
            worst_budget = nu if budget else np.inf
            if min(worst_bound, worst_budget) >= -1e-14:
                break
            if worst_bound <= worst_budget:
                free[j] = True
            else:
                budget = False
            continue
        alpha, block = 1.0, None
        dec = free & (p < 0)
        if dec.any():
            ratios = -w[dec] / p[dec]
            k = int(np.argmin(ratios))
            if ratios[k] < alpha:
                alpha, block = ratios[k], ("bound", int(np.flatnonzero(dec)[k]))
        if not budget and p.sum() > 0:
            ab = (1.0 - w.sum()) / p.sum()
            if ab < alpha:
                alpha, block = ab, ("budget", None)
        w = w + alpha * p
        if block is None:
            w = target
        elif block[0] == "bound":
            free[block[1]] = False
            w[block[1]] = 0.0
        else:
            budget = True
    else:
        raise RuntimeError("active-set solver did not converge")

    w = np.where(free, np.maximum(w, 0.0), 0.0)
    total = w.sum()
    if total > 1.0:
        w = w / total
    res = kkt_residual(problem, w, nu if budget else 0.0)
    return Weights(problem.assets, w, res)


def equal_weights(assets: Sequence[str]) -> Weights:
    n = len(assets)
    if n == 0:
        raise ValueError("equal weights need a nonempty asset set")
    return Weights(tuple(assets), np.full(n, 1.0 / n))


def drift_weights(weights: Weights, returns) -> Weights:
    """Let weights float with one period of asset returns; cash earns zero."""
    r = np.asarray(returns, dtype=float)
    if r.shape != weights.w.shape:
        raise ValueError("returns do not match weights")
    if (1.0 + r <= 0).any():
        raise ValueError("asset gross return must be positive")
    grown = weights.w * (1.0 + r)
    total = grown.sum() + weights.cash
    if total <= 0:
        raise ValueError("portfolio value is zero")
    return Weights(weights.assets, grown / total)
