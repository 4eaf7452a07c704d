"""Cross-sectional summaries, investor bootstrap, crisis regimes and quantile regression."""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.optimize import linprog

from ._csv import write_rows

log = logging.getLogger(__name__)

STRATA = ("education", "risk_aversion", "income")
LEVELS = ("L", "H")


# --------------------------------------------------------------- summaries

def quantile(values, q):
    """Linear interpolation between order statistics (type 7)."""
    return np.quantile(np.asarray(values, dtype=float), q, method="linear")


@dataclass(frozen=True)
class CrossSectionSummary:
    median: float
    q1: float
    q3: float
    n: int

    def __post_init__(self):
        if not (self.q1 <= self.median <= self.q3):
            raise ValueError(f"quartiles out of order: {self.q1}, {self.median}, {self.q3}")


def cross_section_summary(values) -> CrossSectionSummary:
    x = np.asarray(values, dtype=float)
    x = x[~np.isnan(x)]
    if len(x) == 0:
        raise ValueError("cannot summarize an empty cross-section")
    q1, med, q3 = quantile(x, [0.25, 0.5, 0.75])
    return CrossSectionSummary(float(med), float(q1), float(q3), len(x))


# --------------------------------------------------------------- bootstrap

@dataclass(frozen=True)
class BootstrapSpec:
    repetitions: int = 1000
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.repetitions < 200:
            raise ValueError(f"repetitions must be >= 200, got {self.repetitions}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass(frozen=True, eq=False)
class BootstrapInterval:
    estimate: float
    lower: float
    upper: float
    draws: np.ndarray
    alpha: float

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def pivotal_interval(estimate: float, draws: np.ndarray, alpha: float) -> tuple[float, float]:
    """``[2*est - q(1 - alpha/2), 2*est - q(alpha/2)]`` of the bootstrap draws."""
    lo_q, hi_q = quantile(draws, [alpha / 2.0, 1.0 - alpha / 2.0])
    return 2.0 * estimate - float(hi_q), 2.0 * estimate - float(lo_q)


def _tag(x: np.ndarray) -> int:
    return zlib.crc32(np.ascontiguousarray(x, dtype=float).tobytes())


def resample_indices(n: int, spec: BootstrapSpec, tag: int = 0) -> np.ndarray:
    """``R x n`` investor indices, one derived stream per repetition.

    Each repetition's stream depends only on (seed, repetition, tag), so
    results do not depend on how repetitions are scheduled.
    """
    out = np.empty((spec.repetitions, n), dtype=np.int64)
    for r in range(spec.repetitions):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, r, tag]))
        out[r] = rng.integers(0, n, n)
    return out


def _clean(values) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    return x[~np.isnan(x)]


def bootstrap_ci(values, spec: BootstrapSpec, statistic: Callable = np.median) -> BootstrapInterval:
    """Pivotal interval for ``statistic`` of the per-investor values."""
    x = _clean(values)
    if len(x) < 10:
        raise ValueError(f"bootstrap needs at least 10 investors, got {len(x)}")
    est = float(statistic(x))
    idx = resample_indices(len(x), spec, _tag(x))
    draws = np.asarray(statistic(x[idx], axis=1), dtype=float)
    lo, hi = pivotal_interval(est, draws, spec.alpha)
    return BootstrapInterval(est, lo, hi, draws, spec.alpha)


def bootstrap_median_ci(values, spec: BootstrapSpec) -> BootstrapInterval:
    return bootstrap_ci(values, spec, np.median)


def diff_in_medians_ci(a, b, spec: BootstrapSpec) -> BootstrapInterval:
    """Pivotal interval for ``median(a) - median(b)``.

    Both groups are resampled in every repetition; each group's stream is
    keyed by its contents, so swapping the arguments negates the draws.
    """
    a, b = _clean(a), _clean(b)
    if len(a) < 10 or len(b) < 10:
        raise ValueError(f"both groups need at least 10 investors, got {len(a)} and {len(b)}")
    est = float(np.median(a) - np.median(b))
    ma = np.median(a[resample_indices(len(a), spec, _tag(a))], axis=1)
    mb = np.median(b[resample_indices(len(b), spec, _tag(b))], axis=1)
    draws = ma - mb
    lo, hi = pivotal_interval(est, draws, spec.alpha)
    return BootstrapInterval(est, lo, hi, draws, spec.alpha)


# ------------------------------------------------------------------ strata

@dataclass(frozen=True, eq=False)
class StratumResult:
    stratum: str
    summaries: dict[str, CrossSectionSummary]
    median_cis: dict[str, BootstrapInterval | None]
    difference: BootstrapInterval | None      # median(H) - median(L)


def stratified_summary(values: Mapping[str, float] | pd.Series, profiles: Mapping, stratum: str,
                       spec: BootstrapSpec | None = None) -> StratumResult:
    """Per-level summaries of per-investor values split on an L/H profile field.

    ``profiles`` maps investor id to an object with the stratum attribute.
    Intervals are computed only when a level has at least 10 investors.
    """
    if stratum not in STRATA:
        raise ValueError(f"unknown stratum {stratum!r}; expected one of {STRATA}")
    values = pd.Series(values, dtype=float).dropna()
    groups: dict[str, list[float]] = {lv: [] for lv in LEVELS}
    for inv, v in values.items():
        prof = profiles.get(inv)
        if prof is None:
            log.warning("no profile for investor %s; excluded from %s", inv, stratum)
            continue
        groups[getattr(prof, stratum)].append(v)
    for lv, g in groups.items():
        if not g:
            raise ValueError(f"stratum {stratum}: level {lv} has no investors")
    summaries = {lv: cross_section_summary(g) for lv, g in groups.items()}
    cis: dict[str, BootstrapInterval | None] = {}
    diff = None
    if spec is not None:
        for lv, g in groups.items():
            cis[lv] = bootstrap_median_ci(g, spec) if len(g) >= 10 else None
        if min(len(g) for g in groups.values()) >= 10:
            diff = diff_in_medians_ci(groups["H"], groups["L"], spec)
    return StratumResult(stratum, summaries, cis, diff)


# ------------------------------------------------------------------ crisis

REGIMES = ("pre", "during", "post")


@dataclass(frozen=True)
class CrisisCalendar:
    during_start: str = "2007-12"
    during_end: str = "2009-06"

    def __post_init__(self):
        if pd.Period(self.during_start, "M") > pd.Period(self.during_end, "M"):
            raise ValueError("crisis start after crisis end")

    def regime(self, month) -> str:
        m = pd.Period(month, "M")
        if m < pd.Period(self.during_start, "M"):
            return "pre"
        if m <= pd.Period(self.during_end, "M"):
            return "during"
        return "post"

    def labels(self, months) -> np.ndarray:
        return np.array([self.regime(m) for m in months])


def annualized_by_regime(panel: pd.DataFrame, calendar: CrisisCalendar) -> dict[str, pd.Series]:
    """Per-investor annualized percentage (12 x mean x 100) within each regime.

    ``panel`` is months x investors; an investor with no months in a regime
    is absent from that regime only.
    """
    labels = calendar.labels(panel.index)
    out = {}
    for reg in REGIMES:
        block = panel.loc[labels == reg]
        out[reg] = (12.0 * 100.0 * block.mean(axis=0, skipna=True)).dropna()
    return out


def crisis_split_stats(panel: pd.DataFrame, calendar: CrisisCalendar | None = None) -> dict[str, CrossSectionSummary | None]:
    calendar = calendar or CrisisCalendar()
    return {reg: cross_section_summary(s) if len(s) else None
            for reg, s in annualized_by_regime(panel, calendar).items()}


def monthly_medians(panel: pd.DataFrame) -> pd.Series:
    """Cross-sectional median of each month, ignoring absent investors."""
    return panel.median(axis=1, skipna=True)


# ------------------------------------------------------- quantile regression

STAR_LEVELS = ((0.01, "***"), (0.05, "**"), (0.10, "*"))


def stars(p: float) -> str:
    for level, mark in STAR_LEVELS:
        if p < level:
            return mark
    return ""


def pinball_loss(u, tau: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u * (tau - (u < 0))


class CollinearDesign(ValueError):
    pass


def check_design(X: np.ndarray, names: Sequence[str]) -> None:
    """Raise naming the columns that add nothing to the span of earlier ones."""
    dependent = []
    kept: list[int] = []
    for j in range(X.shape[1]):
        cols = kept + [j]
        if np.linalg.matrix_rank(X[:, cols]) < len(cols):
            dependent.append(names[j])
        else:
            kept.append(j)
    if dependent:
        raise CollinearDesign(f"collinear design columns: {', '.join(dependent)}")


def fit_quantile(y: np.ndarray, X: np.ndarray, tau: float) -> np.ndarray:
    """Minimize the pinball loss as a linear program.

    Variables are ``(beta, u+, u-)`` with ``X beta + u+ - u- = y``.
    Interior point first; the dual simplex is tried if it fails.
    """
    n, p = X.shape
    c = np.concatenate([np.zeros(p), np.full(n, tau), np.full(n, 1.0 - tau)])
    eye = sparse.identity(n, format="csr")
    A = sparse.hstack([sparse.csr_matrix(X), eye, -eye], format="csr")
    bounds = [(None, None)] * p + [(0, None)] * (2 * n)
    res = None
    for method in ("highs-ipm", "highs-ds"):
        res = linprog(c, A_eq=A, b_eq=y, bounds=bounds, method=method)
        if res.status == 0:
            return np.asarray(res.x[:p])
        log.warning("quantile LP via %s failed: %s", method, res.message)
    raise RuntimeError(f"quantile regression failed: {res.message}")


@dataclass(frozen=True, eq=False)
class QuantRegResult:
    tau: float
    names: tuple[str, ...]
    coef: np.ndarray
    p_values: np.ndarray
    draws: np.ndarray
    n: int

    def rows(self):
        for name, b, p in zip(self.names, self.coef, self.p_values):
            yield [self.tau, name, float(b), float(p), stars(p)]


def bootstrap_p_values(draws: np.ndarray) -> np.ndarray:
    """Two-sided percentile p-value of each coefficient against zero."""
    below = (draws <= 0).mean(axis=0)
    above = (draws >= 0).mean(axis=0)
    return np.minimum(1.0, 2.0 * np.minimum(below, above))


def quantile_regression(y, X, names: Sequence[str], tau: float = 0.5,
                        spec: BootstrapSpec | None = None) -> QuantRegResult:
    """Coefficients at ``tau`` with investor-bootstrap p-values.

    ``X`` must include any intercept column.  Without a bootstrap spec the
    p-values are NaN.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly inside (0, 1), got {tau}")
    if X.shape != (len(y), len(names)):
        raise ValueError(f"design shape {X.shape} does not match {len(y)} rows and {len(names)} names")
    if not (np.isfinite(y).all() and np.isfinite(X).all()):
        raise ValueError("quantile regression inputs must be finite")
    if len(y) <= 10 * X.shape[1]:
        raise ValueError(f"need more than {10 * X.shape[1]} observations, got {len(y)}")
    check_design(X, names)
    coef = fit_quantile(y, X, tau)
    if spec is None:
        return QuantRegResult(tau, tuple(names), coef, np.full(len(coef), np.nan), np.empty((0, len(coef))), len(y))
    idx = resample_indices(len(y), spec, _tag(y))
    draws = np.empty((spec.repetitions, len(coef)))
    for r in range(spec.repetitions):
        Xr = X[idx[r]]
        try:
            draws[r] = fit_quantile(y[idx[r]], Xr, tau)
        except RuntimeError:
            draws[r] = np.nan
    bad = np.isnan(draws).any(axis=1)
    if bad.any():
        log.warning("%d bootstrap refits failed and were skipped", int(bad.sum()))
    return QuantRegResult(tau, tuple(names), coef, bootstrap_p_values(draws[~bad]), draws, len(y))


def behavioral_design(de, frequency_quartile=None, controls: pd.DataFrame | None = None
                      ) -> tuple[np.ndarray, list[str]]:
    """Intercept, optional frequency-quartile dummies (Q1 omitted), DE, controls."""
    de = np.asarray(de, dtype=float)
    cols, names = [np.ones(len(de))], ["intercept"]
    if frequency_quartile is not None:
        q = np.asarray(frequency_quartile)
        for k in (2, 3, 4):
            cols.append((q == k).astype(float))
            names.append(f"freq_q{k}")
    cols.append(de)
    names.append("disposition_effect")
    if controls is not None:
        for c in controls.columns:
            cols.append(controls[c].to_numpy(dtype=float))
            names.append(str(c))
    return np.column_stack(cols), names


# ------------------------------------------------------------------ files

SUMMARY_HEADER = ["median", "q1", "q3", "n"]
REGRESSION_HEADER = ["tau", "covariate", "coefficient", "p_value", "stars"]


def summary_row(s: CrossSectionSummary | None) -> list:
    return [s.median, s.q1, s.q3, s.n] if s is not None else [None, None, None, 0]


def write_regression(results: Sequence[QuantRegResult], path: str | Path) -> None:
    write_rows(path, REGRESSION_HEADER, (row for r in results for row in r.rows()))
