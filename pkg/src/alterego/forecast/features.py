"""Feature construction and chronological splits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..market import PREDICTORS, PredictorPanel

FEATURE_NAMES: tuple[str, ...] = ("own_lag",) + PREDICTORS
N_FEATURES = len(FEATURE_NAMES)


class InsufficientHistory(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Row t pairs ``(r_t, x_t)`` with target ``r_{t+1}``; ``months`` holds t."""

    months: np.ndarray  # datetime64[M], forecast origin
    X: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, rows) -> "FeatureSet":
        return FeatureSet(self.months[rows], self.X[rows], self.y[rows])


def make_features(months, returns, predictors: PredictorPanel, min_months: int = 36) -> FeatureSet:
    """Align an asset's monthly returns with the predictor panel.

    ``returns[k]`` is the return over ``months[k]``.  Rows whose features or
    target are missing are dropped.  Raises ``InsufficientHistory`` when
    fewer than ``min_months`` months carry a return.
    """
    months = np.asarray(months, dtype="datetime64[M]")
    r = np.asarray(returns, dtype=float)
    if len(months) != len(r):
        raise ValueError("months and returns differ in length")
    usable = int(np.count_nonzero(~np.isnan(r)))
    if usable < min_months:
        raise InsufficientHistory(f"{usable} usable months < {min_months}")
    if len(r) < 2:
        return FeatureSet(months[:0], np.zeros((0, N_FEATURES)), np.zeros(0))
    pos = {m: i for i, m in enumerate(predictors.months)}
    idx = np.array([pos.get(m, -1) for m in months[:-1]])
    x = np.full((len(idx), len(PREDICTORS)), np.nan)
    have = idx >= 0
    x[have] = predictors.values[idx[have]]
    # consecutive calendar months only: a gap in the monthly index breaks the pair
    consecutive = (months[1:] - months[:-1]) == np.timedelta64(1, "M")
    X = np.column_stack([r[:-1], x])
    y = r[1:]
    ok = consecutive & ~np.isnan(X).any(axis=1) & ~np.isnan(y)
    return FeatureSet(months[:-1][ok], X[ok], y[ok])


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.70
    validation_frac: float = 0.20
    test_frac: float = 0.10
    chronological: bool = True

    def __post_init__(self):
        total = self.train_frac + self.validation_frac + self.test_frac
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"split fractions sum to {total}, not 1")
        if min(self.train_frac, self.validation_frac, self.test_frac) < 0:
            raise ValueError("split fractions must be nonnegative")
        if not self.chronological:
            raise ValueError("only chronological splits are supported")

    def sizes(self, n: int) -> tuple[int, int, int]:
        n_train = math.floor(self.train_frac * n + 0.5)
        n_val = math.floor(self.validation_frac * n + 0.5)
        return n_train, n_val, n - n_train - n_val

    def split(self, n: int) -> tuple[slice, slice, slice]:
        a, b, _ = self.sizes(n)
        return slice(0, a), slice(a, a + b), slice(a + b, n)
