"""Rolling means and covariance estimators over trailing daily windows.

All moments are estimated from daily returns and scaled by 21 to the
monthly horizon the allocator works in.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from ._csv import write_rows
from .market import DailyReturnPanel

log = logging.getLogger(__name__)

DAYS_PER_MONTH = 21
MIN_DAYS = 60
MIN_PAIRS = 30
WINDOW_MONTHS = 24


class Estimator(str, Enum):
    Sample = "Sample"
    LinearShrink = "LinearShrink"
    NonlinearShrink = "NonlinearShrink"


@dataclass(frozen=True, eq=False)
class MeanEstimate:
    assets: tuple[str, ...]
    mu: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        if mu.shape != (len(self.assets),):
            raise ValueError("mean vector does not match assets")
        if not np.isfinite(mu).all():
            raise ValueError("mean estimate has non-finite entries")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "assets", tuple(self.assets))


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """Covariance at the monthly horizon.

    ``observations`` keeps the demeaned daily rows with no missing entry so
    the linear shrinkage intensity can be computed from the data.
    """

    assets: tuple[str, ...]
    matrix: np.ndarray
    estimator: Estimator = Estimator.Sample
    delta: float | None = None
    n_obs: int = 0
    observations: np.ndarray | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        n = len(self.assets)
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match {n} assets")
        if n and np.abs(m - m.T).max() > 1e-12 * max(np.abs(m).max(), 1.0):
            raise ValueError("covariance matrix is not symmetric")
        m = 0.5 * (m + m.T)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "estimator", Estimator(self.estimator))

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


# ------------------------------------------------------------- windows

def window_rows(daily: DailyReturnPanel, t, window: int = WINDOW_MONTHS) -> slice:
    """Daily rows in the ``window`` calendar months ending with month ``t``."""
    end = np.datetime64(t, "M")
    start = end - (window - 1)
    months = daily.dates.astype("datetime64[M]")
    lo = int(np.searchsorted(months, start, side="left"))
    hi = int(np.searchsorted(months, end, side="right"))
    return slice(lo, hi)


def _window(daily: DailyReturnPanel, t, window: int, min_days: int,
            assets: Sequence[str] | None = None) -> tuple[tuple[str, ...], np.ndarray]:
    rows = window_rows(daily, t, window)
    R = daily.returns[rows]
    if R.shape[0] == 0:
        raise ValueError(f"empty estimation window ending {np.datetime64(t, 'M')}")
    ids = daily.asset_ids
    cols = range(len(ids)) if assets is None else [ids.index(a) for a in assets]
    keep, dropped = [], []
    for j in cols:
        (keep if np.count_nonzero(~np.isnan(R[:, j])) >= min_days else dropped).append(j)
    if dropped:
        log.info("window ending %s: dropping %d assets with < %d days",
                 np.datetime64(t, "M"), len(dropped), min_days)
    return tuple(ids[j] for j in keep), R[:, keep]


def mean_from_returns(R: np.ndarray) -> np.ndarray:
    return np.nanmean(R, axis=0) * DAYS_PER_MONTH


def covariance_from_returns(R: np.ndarray, assets: Sequence[str],
                            min_pairs: int = MIN_PAIRS) -> CovarianceEstimate:
    """Unbiased pairwise-complete covariance of daily rows, times 21."""
    R = np.asarray(R, dtype=float)
    if R.shape[1] != len(assets):
        raise ValueError("returns do not match assets")
    missing = np.isnan(R)
    if not missing.any():
        S = np.atleast_2d(np.cov(R, rowvar=False, ddof=1)) if len(R) > 1 else np.zeros((R.shape[1],) * 2)
    else:
        S = pd.DataFrame(R).cov(min_periods=min_pairs).to_numpy()
        thin = np.isnan(S)
        if thin.any():
            log.info("%d covariance pairs with < %d joint days set to zero", int(thin.sum()) // 2, min_pairs)
            S[thin] = 0.0
        eig, vec = np.linalg.eigh(0.5 * (S + S.T))
        if eig[0] < 0:
            # pairwise-complete matrices need not be PSD; project back
            S = (vec * np.maximum(eig, 0.0)) @ vec.T
    complete = R[~missing.any(axis=1)]
    obs = complete - complete.mean(axis=0) if len(complete) else complete
    return CovarianceEstimate(tuple(assets), S * DAYS_PER_MONTH, Estimator.Sample,
                              None, int(R.shape[0]), obs)


def rolling_mean(daily: DailyReturnPanel, t, window: int = WINDOW_MONTHS,
                 min_days: int = MIN_DAYS) -> MeanEstimate:
    """Average daily return over the trailing window, scaled to a month."""
    assets, R = _window(daily, t, window, min_days)
    return MeanEstimate(assets, mean_from_returns(R) if len(assets) else np.zeros(0))


def sample_covariance(daily: DailyReturnPanel, t, window: int = WINDOW_MONTHS,
                      min_days: int = MIN_DAYS, min_pairs: int = MIN_PAIRS,
                      assets: Sequence[str] | None = None) -> CovarianceEstimate:
    names, R = _window(daily, t, window, min_days, assets)
    if len(names) < 2:
        raise ValueError("sample covariance needs at least two assets")
    return covariance_from_returns(R, names, min_pairs)


# ----------------------------------------------------- linear shrinkage

def constant_correlation_target(S: np.ndarray) -> tuple[np.ndarray, float]:
    var = np.diag(S)
    sd = np.sqrt(var)
    outer = np.outer(sd, sd)
    n = len(var)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(outer > 0, S / outer, 0.0)
    rbar = (corr.sum() - np.trace(corr)) / (n * (n - 1)) if n > 1 else 0.0
    F = rbar * outer
    np.fill_diagonal(F, var)
    return F, float(rbar)


def shrinkage_intensity(X: np.ndarray) -> float:
    """Plug-in optimal weight on the constant-correlation target.

    ``X`` holds demeaned observations, one row per day.
    """
    t, n = X.shape
    if t < 2 or n < 2:
        return 1.0
    S = X.T @ X / t
    F, rbar = constant_correlation_target(S)
    var = np.diag(S)
    sd = np.sqrt(var)
    X2 = X ** 2
    phi_mat = X2.T @ X2 / t - S ** 2
    phi = phi_mat.sum()
    theta = (X ** 3).T @ X / t - var[:, None] * S
    np.fill_diagonal(theta, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(sd[:, None] > 0, sd[None, :] / sd[:, None], 0.0)
    rho = np.trace(phi_mat) + rbar * (ratio * theta).sum()
    gamma = np.linalg.norm(S - F, "fro") ** 2
    if gamma <= 0:
        return 1.0
    return float(np.clip((phi - rho) / gamma / t, 0.0, 1.0))


def linear_shrinkage(sample: CovarianceEstimate, k: int | None = None,
                     delta: float | None = None) -> CovarianceEstimate:
    """Shrink toward the constant-correlation target.

    ``delta`` forces the intensity; otherwise it is estimated from the
    observations carried by ``sample``.  ``k`` is informational and
    defaults to the estimate's window length.
    """
    S = sample.matrix
    n = len(sample.assets)
    k = k if k is not None else sample.n_obs
    if n == 1:
        return CovarianceEstimate(sample.assets, S, Estimator.LinearShrink, 0.0, k)
    if delta is None:
        X = sample.observations
        if X is None or len(X) < 2:
            log.info("no complete observations for the shrinkage intensity; using the target")
            delta = 1.0
        else:
            delta = shrinkage_intensity(X)
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"shrinkage intensity {delta} outside [0, 1]")
    F, _ = constant_correlation_target(S)
    out = delta * F + (1.0 - delta) * S
    return CovarianceEstimate(sample.assets, out, Estimator.LinearShrink, float(delta), k)


# -------------------------------------------------- nonlinear shrinkage

_SQ5 = np.sqrt(5.0)


def shrunk_eigenvalues(lam: np.ndarray, n_assets: int, n_eff: int) -> np.ndarray:
    """Analytical nonlinear shrinkage of ascending sample eigenvalues.

    Epanechnikov kernel with bandwidth ``n_eff ** (-1/3)``.  When there are
    more assets than observations the null eigenvalues get the common
    singular-part value.
    """
    p, n = n_assets, n_eff
    lam = np.maximum(np.asarray(lam, dtype=float), 0.0)
    pos = lam[max(0, p - n):]
    if (pos <= 0).any():
        floor = 1e-12 * max(pos.max(), 1e-300)
        pos = np.maximum(pos, floor)
    h = n ** (-1.0 / 3.0)
    L = pos[:, None]
    H = h * pos[None, :]
    x = (L - pos[None, :]) / H
    f = (3 / 4 / _SQ5) * np.mean(np.maximum(1 - x ** 2 / 5, 0) / H, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        Hf = (-3 / 10 / np.pi) * x + (3 / 4 / _SQ5 / np.pi) * (1 - x ** 2 / 5) * np.log(
            np.abs((_SQ5 - x) / (_SQ5 + x)))
    edge = np.isclose(np.abs(x), _SQ5, rtol=0, atol=1e-14)
    Hf[edge] = (-3 / 10 / np.pi) * x[edge]
    Hf = (Hf / H).mean(axis=1)
    if p <= n:
        c = p / n
        return pos / ((np.pi * c * pos * f) ** 2 + (1 - c - np.pi * c * pos * Hf) ** 2)
    if np.sqrt(5) * h >= 1:
        raise ValueError("too few observations for the singular-case shrinkage")
    Hf0 = (1 / np.pi) * (3 / 10 / h ** 2 + 3 / 4 / _SQ5 / h * (1 - 1 / 5 / h ** 2)
                         * np.log((1 + _SQ5 * h) / (1 - _SQ5 * h))) * np.mean(1 / pos)
    d0 = 1 / (np.pi * (p - n) / n * Hf0)
    d1 = pos / (np.pi ** 2 * pos ** 2 * (f ** 2 + Hf ** 2))
    return np.concatenate([np.full(p - n, d0), d1])


def nonlinear_shrinkage(sample: CovarianceEstimate, n_assets: int | None = None,
                        k: int | None = None) -> CovarianceEstimate:
    """Replace sample eigenvalues by their kernel-based shrunk values.

    Eigenvectors are kept and the result is rescaled to the input trace.
    The effective sample size is ``k - 1`` because the window was demeaned.
    """
    S = np.asarray(sample.matrix, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("covariance must be square")
    if np.abs(S - S.T).max() > 1e-12 * max(np.abs(S).max(), 1.0):
        raise ValueError("covariance is not symmetric")
    p = n_assets if n_assets is not None else S.shape[0]
    if p != S.shape[0]:
        raise ValueError("n_assets does not match the covariance")
    k = k if k is not None else sample.n_obs
    if p == 1:
        return CovarianceEstimate(sample.assets, S, Estimator.NonlinearShrink, None, k)
    if k is None or k < 13:
        raise ValueError("nonlinear shrinkage needs at least 13 observations")
    lam, U = np.linalg.eigh(S)
    d = shrunk_eigenvalues(lam, p, k - 1)
    tr = np.trace(S)
    if d.sum() > 0 and tr > 0:
        d = d * (tr / d.sum())
    out = (U * d) @ U.T
    return CovarianceEstimate(sample.assets, out, Estimator.NonlinearShrink, None, k)


# --------------------------------------------------------- restriction

def restrict_to_set(mean: MeanEstimate, cov: CovarianceEstimate,
                    assets: Iterable[str]) -> tuple[MeanEstimate, CovarianceEstimate]:
    """Principal sub-vector and sub-matrix in the order of ``assets``."""
    assets = list(assets)
    pos_m = {a: i for i, a in enumerate(mean.assets)}
    pos_c = {a: i for i, a in enumerate(cov.assets)}
    for a in assets:
        if a not in pos_m or a not in pos_c:
            raise KeyError(f"asset {a!r} is not in the estimated universe")
    im = [pos_m[a] for a in assets]
    ic = [pos_c[a] for a in assets]
    sub = cov.matrix[np.ix_(ic, ic)]
    return (MeanEstimate(tuple(assets), mean.mu[im]),
            CovarianceEstimate(tuple(assets), sub, cov.estimator, cov.delta, cov.n_obs))


def estimate_period(daily: DailyReturnPanel, t, estimator: Estimator | str,
                    window: int = WINDOW_MONTHS, min_days: int = MIN_DAYS
                    ) -> tuple[MeanEstimate, CovarianceEstimate]:
    """Full-universe mean and covariance for month ``t``.

    Both share the same asset list: the assets with enough history.
    """
    names, R = _window(daily, t, window, min_days)
    mean = MeanEstimate(names, mean_from_returns(R) if names else np.zeros(0))
    if len(names) == 0:
        return mean, CovarianceEstimate((), np.zeros((0, 0)), estimator)
    sample = covariance_from_returns(R, names)
    est = Estimator(estimator)
    if est is Estimator.LinearShrink:
        cov = linear_shrinkage(sample)
    elif est is Estimator.NonlinearShrink:
        cov = nonlinear_shrinkage(sample)
    else:
        cov = sample
    return mean, cov


AUDIT_HEADER = ["period", "estimator", "N", "delta", "min_eig", "max_eig", "trace"]


def audit_row(period, cov: CovarianceEstimate) -> list:
    eig = cov.eigenvalues if len(cov.assets) else np.array([np.nan])
    return [str(period), cov.estimator.value, len(cov.assets), cov.delta,
            eig.min(), eig.max(), float(np.trace(cov.matrix))]


def write_covariance_audit(path: str | Path, rows: Iterable[Sequence]) -> None:
    write_rows(path, AUDIT_HEADER, rows)
