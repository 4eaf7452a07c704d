"""Robo-investor tracks, return spreads and compounded median paths."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from ._csv import write_rows
from .allocator import AllocationProblem, Weights, drift_weights, equal_weights, solve_long_only_mv
from .market import DailyReturnPanel, MonthlyReturnPanel
from .risk import Estimator, MeanEstimate, estimate_period, restrict_to_set

log = logging.getLogger(__name__)


class StrategyKind(str, Enum):
    EW = "EW"
    MV_ROLL = "MV_RollMean_RollVar"
    MV_ML_ROLL = "MV_ML_RollVar"
    MV_ML_NL = "MV_ML_NonlinearVar"


class Rebalance(str, Enum):
    MONTHLY = "Monthly"
    QUARTERLY = "Quarterly"
    ANNUAL = "Annual"

    def is_date(self, month: pd.Period) -> bool:
        if self is Rebalance.MONTHLY:
            return True
        if self is Rebalance.QUARTERLY:
            return month.month % 3 == 0
        return month.month == 12


COVARIANCE_OF = {
    StrategyKind.MV_ROLL: Estimator.LinearShrink,
    StrategyKind.MV_ML_ROLL: Estimator.LinearShrink,
    StrategyKind.MV_ML_NL: Estimator.NonlinearShrink,
}


@dataclass(frozen=True)
class StrategySpec:
    kind: StrategyKind
    rebalance: Rebalance = Rebalance.QUARTERLY

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        object.__setattr__(self, "rebalance", Rebalance(self.rebalance))

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def uses_forecasts(self) -> bool:
        return self.kind in (StrategyKind.MV_ML_ROLL, StrategyKind.MV_ML_NL)


ALL_KINDS = tuple(StrategyKind)


class MarketContext:
    """Read-only market inputs shared by every robo run.

    Full-universe estimates are computed once per (month, estimator) and
    restricted to each investor's set afterwards.
    """

    def __init__(self, daily: DailyReturnPanel, monthly: MonthlyReturnPanel,
                 forecasts: Mapping[tuple[str, str], float] | None = None,
                 gamma: float = 1.0, window: int = 24, min_days: int = 60):
        self.daily = daily
        self.monthly = monthly
        self.forecasts = dict(forecasts or {})
        self.gamma = gamma
        self.window = window
        self.min_days = min_days
        self._row = {pd.Period(str(m), "M"): i for i, m in enumerate(monthly.months)}
        self._col = {a: j for j, a in enumerate(monthly.asset_ids)}
        self._cache: dict = {}

    def estimates(self, t: pd.Period, estimator: Estimator):
        key = (t, Estimator(estimator))
        if key not in self._cache:
            month = np.datetime64(str(t), "M")
            try:
                self._cache[key] = estimate_period(self.daily, month, estimator, self.window, self.min_days)
            except ValueError as err:
                log.info("no estimates for %s: %s", t, err)
                self._cache[key] = None
        return self._cache[key]

    def prepare(self, months: Iterable[pd.Period], estimators: Iterable[Estimator]) -> None:
        """Fill the estimate cache ahead of forking workers."""
        for t in sorted(set(months)):
            for e in estimators:
                self.estimates(t, e)

    def forecast(self, t: pd.Period, asset: str) -> float | None:
        return self.forecasts.get((str(t), asset))

    def returns(self, month: pd.Period, assets: Sequence[str]) -> np.ndarray:
        i = self._row.get(month)
        if i is None:
            raise KeyError(f"no asset returns for {month}")
        r = self.monthly.returns[i, [self._col[a] for a in assets]]
        if np.isnan(r).any():
            log.info("%s: %d missing asset returns treated as zero", month, int(np.isnan(r).sum()))
            r = np.nan_to_num(r, nan=0.0)
        return r


@dataclass(eq=False)
class AlterEgoTrack:
    investor_id: str
    strategy: str
    months: list[pd.Period]
    returns: np.ndarray
    cash: np.ndarray                      # cash weight held through each month
    snapshots: dict[pd.Period, Weights] = field(default_factory=dict)

    def series(self) -> pd.Series:
        return pd.Series(self.returns, index=pd.PeriodIndex(self.months, freq="M"), name=self.investor_id)


def form_weights(assets: Sequence[str], t: pd.Period, strategy: StrategySpec, ctx: MarketContext) -> Weights:
    """Target weights at rebalance date ``t`` over the opportunity set ``assets``."""
    assets = sorted(assets)
    if not assets:
        return Weights((), np.zeros(0))
    if strategy.kind is StrategyKind.EW:
        return equal_weights(assets)
    est = ctx.estimates(t, COVARIANCE_OF[strategy.kind])
    if est is None:
        return Weights((), np.zeros(0))
    mean, cov = est
    usable = [a for a in assets if a in set(cov.assets)]
    if len(usable) < len(assets):
        log.debug("%s: %d assets lack estimation history", t, len(assets) - len(usable))
    if strategy.uses_forecasts:
        mu = {a: ctx.forecast(t, a) for a in usable}
        missing = [a for a, v in mu.items() if v is None or not np.isfinite(v)]
        if missing:
            log.debug("%s: no forecast for %s; dropped", t, missing)
        usable = [a for a in usable if a not in missing]
    if not usable:
        return Weights((), np.zeros(0))
    m, c = restrict_to_set(mean, cov, usable)
    if strategy.uses_forecasts:
        m = MeanEstimate(tuple(usable), [mu[a] for a in usable])
    return solve_long_only_mv(AllocationProblem(m.mu, c.matrix, ctx.gamma, tuple(usable)))


def run_alter_ego(investor_id: str, sets: Mapping[pd.Period, frozenset], strategy: StrategySpec,
                  ctx: MarketContext) -> AlterEgoTrack:
    """Buy at the end of each rebalance month and hold, drifting, until the next.

    ``sets`` maps every month of the investor's history to its opportunity
    set.  The first portfolio is formed at the end of the first month;
    returns run from the second month to the last.
    """
    months = sorted(sets)
    out_m, out_r, out_c, snaps = [], [], [], {}
    w: Weights | None = None
    for k, t in enumerate(months[:-1]):
        if w is None or strategy.rebalance.is_date(t):
            w = form_weights(sets[t], t, strategy, ctx)
            snaps[t] = w
        nxt = t + 1
        r = ctx.returns(nxt, w.assets) if len(w.assets) else np.zeros(0)
        out_m.append(nxt)
        out_r.append(float(w.w @ r) if len(r) else 0.0)
        out_c.append(w.cash)
        if len(w.assets):
            w = drift_weights(w, r)
    return AlterEgoTrack(investor_id, strategy.name, out_m, np.array(out_r), np.array(out_c), snaps)


# ------------------------------------------------------------------ spreads

@dataclass(eq=False)
class SpreadSeries:
    investor_id: str
    strategy: str
    months: list[pd.Period]
    values: np.ndarray

    @property
    def annualized_pct(self) -> float:
        return annualize(self.values)

    def series(self) -> pd.Series:
        return pd.Series(self.values, index=pd.PeriodIndex(self.months, freq="M"), name=self.investor_id)


def annualize(monthly: np.ndarray) -> float:
    """Arithmetic annualization in percent: 12 x mean monthly value x 100."""
    monthly = np.asarray(monthly, dtype=float)
    return float(12.0 * monthly.mean() * 100.0) if len(monthly) else float("nan")


def spread_series(a: pd.Series, b: pd.Series, investor_id: str, label: str) -> SpreadSeries:
    """``a - b`` over months where both are present."""
    both = pd.concat([a, b], axis=1, join="inner").dropna()
    if both.empty:
        raise ValueError(f"{investor_id}/{label}: the two series share no months")
    return SpreadSeries(investor_id, label, list(both.index), both.iloc[:, 0].to_numpy() - both.iloc[:, 1].to_numpy())


def compute_spread(track: AlterEgoTrack, investor_returns: pd.Series) -> SpreadSeries:
    if len(investor_returns.dropna()) < 4:
        log.warning("%s: fewer than 4 investor return months", track.investor_id)
    return spread_series(track.series(), investor_returns, track.investor_id, track.strategy)


def benchmark_spread(returns: pd.Series, benchmark: pd.Series, investor_id: str, label: str) -> SpreadSeries:
    """Spread of a track (or investor) over a benchmark return series."""
    gaps = returns.dropna().index.difference(benchmark.dropna().index)
    if len(gaps):
        log.warning("%s/%s: %d months lack benchmark returns; dropped", investor_id, label, len(gaps))
    return spread_series(returns, benchmark, investor_id, label)


def compound_median_paths(panels: Mapping[str, pd.DataFrame]) -> pd.DataFrame:
    """Compound the cross-sectional median return of each series from 1.

    Each frame is months x investors.  The path is a chain of medians and
    does not follow any single investor.
    """
    rows = []
    for name, frame in panels.items():
        med = frame.sort_index().median(axis=1, skipna=True).dropna()
        value = 1.0
        for month, r in med.items():
            value *= 1.0 + r
            rows.append([str(month), name, value])
    return pd.DataFrame(rows, columns=["month", "series", "index_value"])


# ----------------------------------------------------------------- files

TRACK_HEADER = ["investor_id", "strategy", "month", "robo_return", "cash_weight"]
SPREAD_HEADER = ["investor_id", "strategy", "annualized_spread_pct"]
FIG2_HEADER = ["month", "series", "index_value"]


def write_tracks(tracks: Iterable[AlterEgoTrack], path: str | Path) -> None:
    rows = ([t.investor_id, t.strategy, str(m), r, c]
            for t in tracks for m, r, c in zip(t.months, t.returns, t.cash))
    write_rows(path, TRACK_HEADER, rows)


def write_spreads(spreads: Iterable[SpreadSeries], path: str | Path) -> None:
    write_rows(path, SPREAD_HEADER, ([s.investor_id, s.strategy, s.annualized_pct] for s in spreads))


def write_monthly_spreads(spreads: Iterable[SpreadSeries], path: str | Path) -> None:
    rows = ([s.investor_id, s.strategy, str(m), v] for s in spreads for m, v in zip(s.months, s.values))
    write_rows(path, ["investor_id", "strategy", "month", "spread"], rows)


def write_fig2(paths: pd.DataFrame, path: str | Path) -> None:
    write_rows(path, FIG2_HEADER, paths[FIG2_HEADER].itertuples(index=False))


def load_tracks(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"investor_id": str, "strategy": str, "month": str})
    missing = set(TRACK_HEADER) - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    return df


# --------------------------------------------------------------- batches

def _run_task(task):
    investor_id, sets, strategy, ctx = task
    return run_alter_ego(investor_id, sets, strategy, ctx)


def run_many(investor_sets: Mapping[str, Mapping[pd.Period, frozenset]], strategies: Sequence[StrategySpec],
             ctx: MarketContext, map_fn: Callable = map) -> list[AlterEgoTrack]:
    """Every (investor, strategy) track, ordered by investor then strategy."""
    tasks = [(i, investor_sets[i], s, ctx) for i in investor_sets for s in strategies]
    return list(map_fn(_run_task, tasks))
