"""Asset-return and predictor panels: loading, validation, aggregation, synthesis.

Daily panels carry simple total returns on a trading-day calendar; missing
cells are NaN.  Monthly panels are derived by compounding and stamped with
``datetime64[M]`` months.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from ._csv import ParseError, parse_float, read_rows, write_rows

log = logging.getLogger(__name__)

PREDICTORS: tuple[str, ...] = (
    "dp", "dy", "ep", "de", "svar", "bm", "ntis", "tbl", "lty", "ltr", "dfy",
    "infl", "SPvw", "SPvwx", "MktRF", "SMB", "HML", "RMW", "CMA", "RF", "Mom",
)


class AssetClass(str, Enum):
    STOCK = "Stock"
    ETF = "ETF"


@dataclass(frozen=True)
class AssetId:
    id: str
    asset_class: AssetClass = AssetClass.STOCK

    def __post_init__(self):
        object.__setattr__(self, "asset_class", AssetClass(self.asset_class))


def _as_assets(universe: Sequence) -> tuple[AssetId, ...]:
    out = tuple(a if isinstance(a, AssetId) else AssetId(str(a)) for a in universe)
    ids = [a.id for a in out]
    if len(set(ids)) != len(ids):
        raise ValueError("asset ids must be unique within a universe")
    return out


@dataclass(frozen=True, eq=False)
class DailyReturnPanel:
    dates: np.ndarray  # datetime64[D], strictly increasing
    assets: tuple[AssetId, ...]
    returns: np.ndarray  # [day x asset], NaN = missing

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        returns = np.array(self.returns, dtype=float)
        assets = _as_assets(self.assets)
        if returns.shape != (len(dates), len(assets)):
            raise ValueError(f"returns shape {returns.shape} != ({len(dates)}, {len(assets)})")
        if len(dates) > 1 and not np.all(np.diff(dates) > np.timedelta64(0, "D")):
            raise ValueError("dates must be strictly increasing")
        bad = ~np.isnan(returns) & (returns <= -1.0)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValueError(f"return {returns[i, j]} <= -1 on {dates[i]} for {assets[j].id}")
        returns.setflags(write=False)
        dates.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "assets", assets)

    @property
    def mask(self) -> np.ndarray:
        """True where the return is absent."""
        return np.isnan(self.returns)

    @property
    def asset_ids(self) -> list[str]:
        return [a.id for a in self.assets]

    def column(self, asset_id: str) -> int:
        return self.asset_ids.index(asset_id)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.returns, index=pd.DatetimeIndex(self.dates), columns=self.asset_ids)


@dataclass(frozen=True, eq=False)
class MonthlyReturnPanel:
    months: np.ndarray  # datetime64[M]
    assets: tuple[AssetId, ...]
    returns: np.ndarray

    def __post_init__(self):
        months = np.asarray(self.months, dtype="datetime64[M]")
        returns = np.array(self.returns, dtype=float)
        returns.setflags(write=False)
        object.__setattr__(self, "months", months)
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "assets", _as_assets(self.assets))

    @property
    def asset_ids(self) -> list[str]:
        return [a.id for a in self.assets]

    def series(self, asset_id: str) -> np.ndarray:
        return self.returns[:, self.asset_ids.index(asset_id)]

    def row(self, month) -> int:
        m = np.datetime64(month, "M")
        i = int(np.searchsorted(self.months, m))
        if i >= len(self.months) or self.months[i] != m:
            raise KeyError(f"month {m} not in panel")
        return i


@dataclass(frozen=True, eq=False)
class PredictorPanel:
    months: np.ndarray  # datetime64[M]
    values: np.ndarray  # [month x 21], columns in PREDICTORS order

    def __post_init__(self):
        months = np.asarray(self.months, dtype="datetime64[M]")
        values = np.array(self.values, dtype=float)
        if values.shape != (len(months), len(PREDICTORS)):
            raise ValueError(f"predictor matrix must be ({len(months)}, {len(PREDICTORS)})")
        if np.isnan(values).any():
            raise ValueError("predictor panel has missing values")
        values.setflags(write=False)
        object.__setattr__(self, "months", months)
        object.__setattr__(self, "values", values)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, PREDICTORS.index(name)]


# ---------------------------------------------------------------- loading

def load_daily_returns(path: str | Path, universe: Sequence) -> DailyReturnPanel:
    """Parse a ``date,<asset_id>,...`` CSV into a panel covering exactly ``universe``.

    Rows may appear in any order; the calendar is sorted on load.  Empty
    cells are missing returns.
    """
    assets = _as_assets(universe)
    header, rows = read_rows(path)
    if not header or header[0] != "date":
        raise ParseError(path, 1, "first column must be 'date'")
    cols = header[1:]
    wanted = {a.id for a in assets}
    unknown = [c for c in cols if c not in wanted]
    if unknown:
        raise ParseError(path, 1, f"unknown asset columns: {', '.join(unknown)}")
    absent = [a.id for a in assets if a.id not in cols]
    if absent:
        raise ParseError(path, 1, f"universe assets missing from file: {', '.join(absent)}")
    if len(set(cols)) != len(cols):
        raise ParseError(path, 1, "duplicate asset columns")

    dates, data = [], []
    for line, fields in rows:
        if len(fields) != len(header):
            raise ParseError(path, line, f"expected {len(header)} fields, got {len(fields)}")
        try:
            d = np.datetime64(fields[0], "D")
        except ValueError:
            raise ParseError(path, line, f"bad date {fields[0]!r}") from None
        if len(fields[0]) != 10:
            raise ParseError(path, line, f"date must be YYYY-MM-DD: {fields[0]!r}")
        vals = [parse_float(path, line, f, c) for f, c in zip(fields[1:], cols)]
        for v, c in zip(vals, cols):
            if not math.isnan(v) and v <= -1.0:
                raise ParseError(path, line, f"return {v} <= -1 for {c}")
        dates.append(d)
        data.append(vals)

    dates_arr = np.array(dates, dtype="datetime64[D]")
    mat = np.array(data, dtype=float).reshape(len(dates), len(cols))
    order = np.argsort(dates_arr, kind="stable")
    dates_arr, mat = dates_arr[order], mat[order]
    if len(dates_arr) > 1 and (np.diff(dates_arr) == np.timedelta64(0, "D")).any():
        raise ParseError(path, 0, "duplicate dates")
    col_index = [cols.index(a.id) for a in assets]
    return DailyReturnPanel(dates_arr, assets, mat[:, col_index])


def write_daily_returns(panel: DailyReturnPanel, path: str | Path) -> None:
    write_rows(
        path,
        ["date", *panel.asset_ids],
        ([str(d), *row] for d, row in zip(panel.dates, panel.returns)),
    )


def load_assets(path: str | Path) -> list[AssetId]:
    header, rows = read_rows(path)
    if header != ["asset_id", "class"]:
        raise ParseError(path, 1, "header must be 'asset_id,class'")
    out = []
    for line, fields in rows:
        try:
            out.append(AssetId(fields[0], AssetClass(fields[1])))
        except (ValueError, IndexError):
            raise ParseError(path, line, f"bad asset row {fields!r}") from None
    return out


def write_assets(assets: Sequence[AssetId], path: str | Path) -> None:
    write_rows(path, ["asset_id", "class"], ((a.id, a.asset_class.value) for a in assets))


def load_predictors(path: str | Path) -> PredictorPanel:
    header, rows = read_rows(path)
    if not header or header[0] != "month":
        raise ParseError(path, 1, "first column must be 'month'")
    cols = header[1:]
    missing = [p for p in PREDICTORS if p not in cols]
    if missing:
        raise ValueError(f"{path}: predictor columns missing: {', '.join(missing)}")
    extra = [c for c in cols if c not in PREDICTORS]
    if extra:
        raise ParseError(path, 1, f"unknown predictor columns: {', '.join(extra)}")
    months, data = [], []
    for line, fields in rows:
        if len(fields) != len(header):
            raise ParseError(path, line, f"expected {len(header)} fields, got {len(fields)}")
        if len(fields[0]) != 7:
            raise ParseError(path, line, f"month must be YYYY-MM: {fields[0]!r}")
        try:
            months.append(np.datetime64(fields[0], "M"))
        except ValueError:
            raise ParseError(path, line, f"bad month {fields[0]!r}") from None
        vals = [parse_float(path, line, f, c) for f, c in zip(fields[1:], cols)]
        if any(math.isnan(v) for v in vals):
            raise ParseError(path, line, "missing predictor value")
        data.append(vals)
    months_arr = np.array(months, dtype="datetime64[M]")
    mat = np.array(data, dtype=float).reshape(len(months), len(cols))
    order = np.argsort(months_arr, kind="stable")
    idx = [cols.index(p) for p in PREDICTORS]
    return PredictorPanel(months_arr[order], mat[order][:, idx])


def write_predictors(panel: PredictorPanel, path: str | Path) -> None:
    write_rows(
        path,
        ["month", *PREDICTORS],
        ([str(m), *row] for m, row in zip(panel.months, panel.values)),
    )


# ------------------------------------------------------------ aggregation

def aggregate_to_monthly(daily: DailyReturnPanel) -> MonthlyReturnPanel:
    """Compound daily returns within each calendar month.

    A month in which an asset misses any trading day of the calendar is
    marked missing for that asset.
    """
    if len(daily.dates) == 0 or len(daily.assets) == 0:
        raise ValueError("cannot aggregate an empty panel")
    month_of = daily.dates.astype("datetime64[M]")
    months, starts = np.unique(month_of, return_index=True)
    bounds = np.append(starts, len(month_of))
    out = np.empty((len(months), len(daily.assets)))
    for k in range(len(months)):
        block = daily.returns[bounds[k]:bounds[k + 1]]
        out[k] = np.prod(1.0 + block, axis=0) - 1.0
        out[k][np.isnan(block).any(axis=0)] = np.nan
    return MonthlyReturnPanel(months, daily.assets, out)


def month_end_rows(daily: DailyReturnPanel) -> np.ndarray:
    """Index of the last trading day of every month in the calendar."""
    month_of = daily.dates.astype("datetime64[M]")
    return np.flatnonzero(np.append(month_of[1:] != month_of[:-1], True))


# ------------------------------------------------------------- synthesis

# (mean, sd) of each predictor in its native units; rough magnitudes only
_PREDICTOR_SCALE: dict[str, tuple[float, float]] = {
    "dp": (-3.6, 0.4), "dy": (-3.6, 0.4), "ep": (-2.9, 0.5), "de": (-0.7, 0.3),
    "svar": (0.004, 0.003), "bm": (0.3, 0.1), "ntis": (0.01, 0.02), "tbl": (0.03, 0.02),
    "lty": (0.05, 0.015), "ltr": (0.006, 0.03), "dfy": (0.01, 0.004), "infl": (0.002, 0.003),
    "SPvw": (0.008, 0.045), "SPvwx": (0.006, 0.045), "MktRF": (0.006, 0.045),
    "SMB": (0.002, 0.03), "HML": (0.003, 0.03), "RMW": (0.003, 0.02), "CMA": (0.003, 0.02),
    "RF": (0.002, 0.002), "Mom": (0.006, 0.045),
}


@dataclass(frozen=True)
class Regime:
    """A span of months with shifted predictors and/or drift.

    ``predictor_shift`` is in standard deviations and is applied one month
    ahead of ``start``..``end`` so that the regime is forecastable from
    information available at the previous month end.  ``drift_shift`` adds
    directly to every asset's monthly drift inside the span.
    """

    start: str
    end: str
    predictor_shift: Mapping[str, float] = field(default_factory=dict)
    drift_shift: float = 0.0


@dataclass(frozen=True)
class SyntheticMarketSpec:
    n_assets: int = 40
    n_days: int = 5021
    n_etfs: int = 8
    start: str = "1993-01-01"
    n_factors: int = 1
    loading_mean: float = 1.0
    loading_std: float = 0.3
    factor_mean: float = 0.0002       # per day
    factor_vol: float = 0.011         # per day
    idio_vol: float = 0.015           # per day
    etf_idio_scale: float = 0.3
    drift_mean: float = 0.004         # per month
    drift_std: float = 0.002          # per month
    coupling: Mapping[str, float] = field(default_factory=dict)  # monthly return per predictor sd
    coupling_dispersion: float = 0.5
    persistence: float | Mapping[str, float] = 0.9
    regimes: tuple[Regime, ...] = ()
    seed: int = 0

    def validate(self) -> None:
        if self.n_assets < 1:
            raise ValueError("n_assets must be >= 1")
        if self.n_days < 252:
            raise ValueError("n_days must be >= 252")
        if self.n_factors < 1:
            raise ValueError("n_factors must be >= 1")
        if not 0 <= self.n_etfs <= self.n_assets:
            raise ValueError("n_etfs must lie in [0, n_assets]")
        if self.idio_vol < 0 or self.factor_vol < 0:
            raise ValueError("volatilities must be nonnegative")
        unknown = [k for k in self.coupling if k not in PREDICTORS]
        if unknown:
            raise ValueError(f"coupling names unknown predictors: {unknown}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SyntheticMarketSpec":
        d = dict(d)
        if "regimes" in d:
            d["regimes"] = tuple(Regime(**r) for r in d["regimes"])
        return cls(**d)


def _asset_universe(spec: SyntheticMarketSpec) -> tuple[AssetId, ...]:
    n_stocks = spec.n_assets - spec.n_etfs
    stocks = [AssetId(f"S{i + 1:03d}", AssetClass.STOCK) for i in range(n_stocks)]
    etfs = [AssetId(f"E{i + 1:03d}", AssetClass.ETF) for i in range(spec.n_etfs)]
    return tuple(stocks + etfs)


def generate_synthetic_market(spec: SyntheticMarketSpec) -> tuple[DailyReturnPanel, PredictorPanel]:
    """Simulate daily returns ``r = B f + drift(x_{m-1}) + eps`` and AR(1) predictors.

    Predictors are unit-variance AR(1) processes rescaled to native units.
    Monthly drift of asset j in month m is
    ``a_j + s_j * sum_p coupling[p] * z_p(m-1) + regime drift``, spread
    evenly over 21 trading days.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    dates = pd.bdate_range(spec.start, periods=spec.n_days).values.astype("datetime64[D]")
    month_of = dates.astype("datetime64[M]")
    months, month_idx = np.unique(month_of, return_inverse=True)
    n_months = len(months)

    # predictors: one extra leading month so the first month has a lag
    rho = np.array([
        spec.persistence.get(p, 0.9) if isinstance(spec.persistence, Mapping) else spec.persistence
        for p in PREDICTORS
    ])
    innov = rng.standard_normal((n_months + 1, len(PREDICTORS)))
    z = np.empty_like(innov)
    z[0] = innov[0]
    scale = np.sqrt(1.0 - rho**2)
    for t in range(1, n_months + 1):
        z[t] = rho * z[t - 1] + scale * innov[t]
    regime_drift = np.zeros(n_months)
    for reg in spec.regimes:
        lo, hi = np.datetime64(reg.start, "M"), np.datetime64(reg.end, "M")
        in_reg = (months >= lo) & (months <= hi)
        regime_drift[in_reg] += reg.drift_shift
        # z row t+1 is the lag seen by month t; shift the signal month
        lag_rows = np.flatnonzero(in_reg)
        for name, shift in reg.predictor_shift.items():
            z[lag_rows, PREDICTORS.index(name)] += shift
    mean_sd = np.array([_PREDICTOR_SCALE[p] for p in PREDICTORS])
    predictors = mean_sd[:, 0] + mean_sd[:, 1] * z[1:]

    assets = _asset_universe(spec)
    n = spec.n_assets
    is_etf = np.array([a.asset_class is AssetClass.ETF for a in assets])
    loadings = spec.loading_mean + spec.loading_std * rng.standard_normal((n, spec.n_factors))
    alpha = spec.drift_mean + spec.drift_std * rng.standard_normal(n)
    lo = max(0.0, 1.0 - spec.coupling_dispersion)
    sens = rng.uniform(lo, 1.0 + spec.coupling_dispersion, n)
    coupling = np.array([spec.coupling.get(p, 0.0) for p in PREDICTORS])

    signal = z[:-1] @ coupling  # month m uses predictors of month m-1
    monthly_drift = alpha[None, :] + np.outer(signal, sens) + regime_drift[:, None]
    daily_drift = monthly_drift[month_idx] / 21.0

    factors = spec.factor_mean + spec.factor_vol * rng.standard_normal((spec.n_days, spec.n_factors))
    idio_scale = np.where(is_etf, spec.etf_idio_scale, 1.0) * spec.idio_vol
    eps = rng.standard_normal((spec.n_days, n)) * idio_scale
    returns = factors @ loadings.T + daily_drift + eps
    returns = np.maximum(returns, -0.95)

    return DailyReturnPanel(dates, assets, returns), PredictorPanel(months, predictors)
