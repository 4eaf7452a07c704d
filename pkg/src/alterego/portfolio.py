"""Trade records to holdings, investor returns, opportunity sets and behavior.

Everything here is per investor and pure; the cross-sectional pieces
(admission, trading-frequency quartiles) take collections of per-investor
results.
"""

from __future__ import annotations

import calendar
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from ._csv import ParseError, parse_float, read_rows, write_rows
from .market import DailyReturnPanel, month_end_rows

log = logging.getLogger(__name__)

OUTLIER_THRESHOLD = 3.0  # |monthly return| above 300%
MIN_RETURN_MONTHS = 4
MIN_SET_SIZE = 2
WINDOW_MONTHS = 24


class Direction(str, Enum):
    BUY = "B"
    SELL = "S"


@dataclass(frozen=True)
class TradeRecord:
    investor_id: str
    timestamp: np.datetime64
    asset_id: str
    direction: Direction
    quantity: float
    price: float

    def __post_init__(self):
        object.__setattr__(self, "timestamp", np.datetime64(self.timestamp, "s"))
        object.__setattr__(self, "direction", Direction(self.direction))
        if not self.quantity > 0:
            raise ValueError(f"trade quantity must be positive: {self.quantity}")
        if not self.price > 0:
            raise ValueError(f"trade price must be positive: {self.price}")

    @property
    def date(self) -> np.datetime64:
        return self.timestamp.astype("datetime64[D]")

    @property
    def month(self) -> np.datetime64:
        return self.timestamp.astype("datetime64[M]")

    @property
    def signed_quantity(self) -> float:
        return self.quantity if self.direction is Direction.BUY else -self.quantity

    @property
    def value(self) -> float:
        return self.quantity * self.price


@dataclass(frozen=True)
class InvestorProfile:
    investor_id: str
    age: int
    gender: str
    education: str
    risk_aversion: str
    income: str

    def __post_init__(self):
        for name in ("education", "risk_aversion", "income"):
            if getattr(self, name) not in ("L", "H"):
                raise ValueError(f"{name} must be 'L' or 'H', got {getattr(self, name)!r}")


@dataclass(frozen=True, eq=False)
class HoldingsLedger:
    investor_id: str
    months: np.ndarray      # datetime64[M], consecutive
    assets: tuple[str, ...]
    shares: np.ndarray      # end-of-month shares [month x asset]
    flows: np.ndarray       # net external flow per month (buys - sells, currency)

    def holdings_at(self, month) -> dict[str, float]:
        i = self.index(month)
        if i < 0:
            return {}
        return {a: float(q) for a, q in zip(self.assets, self.shares[i]) if q > 0}

    def index(self, month) -> int:
        """Row of ``month``; -1 before the first month, last row after the end."""
        m = np.datetime64(month, "M")
        if m < self.months[0]:
            return -1
        return min(int((m - self.months[0]).astype(int)), len(self.months) - 1)


@dataclass(frozen=True)
class OpportunitySet:
    investor_id: str
    t: np.datetime64
    assets: frozenset[str]

    @property
    def n(self) -> int:
        return len(self.assets)


@dataclass
class BehavioralMetrics:
    investor_id: str
    realized_gains: int
    realized_losses: int
    paper_gains: int
    paper_losses: int
    trading_frequency: float
    frequency_quartile: int | None = None

    @property
    def pgr(self) -> float:
        d = self.realized_gains + self.paper_gains
        return self.realized_gains / d if d else math.nan

    @property
    def plr(self) -> float:
        d = self.realized_losses + self.paper_losses
        return self.realized_losses / d if d else math.nan

    @property
    def disposition_effect(self) -> float:
        """PGR - PLR; NaN when either ratio is undefined."""
        return self.pgr - self.plr


class HoldingsError(ValueError):
    pass


def to_period(month) -> pd.Period:
    return pd.Period(str(np.datetime64(month, "M")), "M")


# ------------------------------------------------------------- trade files

TRADE_HEADER = ["investor_id", "timestamp", "asset_id", "direction", "quantity", "price"]
PROFILE_HEADER = ["investor_id", "age", "gender", "education", "risk_aversion", "income"]


def load_trades(path: str | Path) -> list[TradeRecord]:
    header, rows = read_rows(path)
    if header != TRADE_HEADER:
        raise ParseError(path, 1, f"header must be {','.join(TRADE_HEADER)}")
    out = []
    for line, f in rows:
        if len(f) != len(TRADE_HEADER):
            raise ParseError(path, line, f"expected {len(TRADE_HEADER)} fields, got {len(f)}")
        try:
            ts = np.datetime64(f[1], "s")
        except ValueError:
            raise ParseError(path, line, f"bad timestamp {f[1]!r}") from None
        if f[3] not in ("B", "S"):
            raise ParseError(path, line, f"direction must be B or S, got {f[3]!r}")
        q = parse_float(path, line, f[4], "quantity")
        p = parse_float(path, line, f[5], "price")
        if not (q > 0 and p > 0):
            raise ParseError(path, line, "quantity and price must be positive")
        out.append(TradeRecord(f[0], ts, f[2], Direction(f[3]), q, p))
    return out


def write_trades(trades: Iterable[TradeRecord], path: str | Path) -> None:
    write_rows(
        path,
        TRADE_HEADER,
        ((t.investor_id, str(t.timestamp), t.asset_id, t.direction.value, t.quantity, t.price)
         for t in trades),
    )


def load_profiles(path: str | Path) -> list[InvestorProfile]:
    header, rows = read_rows(path)
    if header != PROFILE_HEADER:
        raise ParseError(path, 1, f"header must be {','.join(PROFILE_HEADER)}")
    out = []
    for line, f in rows:
        try:
            out.append(InvestorProfile(f[0], int(f[1]), f[2], f[3], f[4], f[5]))
        except (ValueError, IndexError) as exc:
            raise ParseError(path, line, str(exc)) from None
    return out


def write_profiles(profiles: Iterable[InvestorProfile], path: str | Path) -> None:
    write_rows(
        path,
        PROFILE_HEADER,
        ((p.investor_id, p.age, p.gender, p.education, p.risk_aversion, p.income) for p in profiles),
    )


def group_by_investor(trades: Iterable[TradeRecord]) -> dict[str, list[TradeRecord]]:
    groups: dict[str, list[TradeRecord]] = defaultdict(list)
    for t in trades:
        groups[t.investor_id].append(t)
    for v in groups.values():
        v.sort(key=lambda t: t.timestamp)
    return dict(sorted(groups.items()))


# ----------------------------------------------------------------- ledger

def build_holdings(trades: Sequence[TradeRecord], end=None) -> HoldingsLedger:
    """End-of-month share positions and net external flows for one investor.

    ``end`` extends the ledger (with no further trades) to a later month.
    """
    if not trades:
        raise ValueError("no trades")
    investor = trades[0].investor_id
    if any(t.investor_id != investor for t in trades):
        raise ValueError("trades from more than one investor")
    ordered = sorted(trades, key=lambda t: t.timestamp)
    first = ordered[0].month
    last = ordered[-1].month if end is None else max(ordered[-1].month, np.datetime64(end, "M"))
    months = np.arange(first, last + 1, dtype="datetime64[M]")
    assets = tuple(sorted({t.asset_id for t in ordered}))
    col = {a: j for j, a in enumerate(assets)}

    shares = np.zeros((len(months), len(assets)))
    flows = np.zeros(len(months))
    position = np.zeros(len(assets))
    k = 0
    for i, m in enumerate(months):
        while k < len(ordered) and ordered[k].month == m:
            t = ordered[k]
            j = col[t.asset_id]
            if t.direction is Direction.SELL and t.quantity > position[j] * (1 + 1e-12) + 1e-12:
                raise HoldingsError(
                    f"investor {investor}: sell of {t.quantity} {t.asset_id} on {t.date} "
                    f"exceeds position {position[j]}"
                )
            position[j] = max(position[j] + t.signed_quantity, 0.0)
            flows[i] += t.value if t.direction is Direction.BUY else -t.value
            k += 1
        shares[i] = position
    return HoldingsLedger(investor, months, assets, shares, flows)


def opportunity_set(ledger: HoldingsLedger, trades: Sequence[TradeRecord], t,
                    window: int = WINDOW_MONTHS) -> OpportunitySet:
    """Assets held at any month end in [t-window, t] or traded in (t-window, t]."""
    t = np.datetime64(t, "M")
    lo = t - window
    assets = {x.asset_id for x in trades if lo < x.month <= t}
    if len(ledger.months):
        rows = (ledger.months >= lo) & (ledger.months <= t)
        if rows.any():
            held = (ledger.shares[rows] > 0).any(axis=0)
            assets.update(a for a, h in zip(ledger.assets, held) if h)
    return OpportunitySet(ledger.investor_id, t, frozenset(assets))


def opportunity_sets(ledger: HoldingsLedger, trades: Sequence[TradeRecord],
                     window: int = WINDOW_MONTHS) -> dict[pd.Period, frozenset[str]]:
    """Opportunity set at every ledger month end, keyed by ``pd.Period``."""
    by_month: dict = defaultdict(set)
    for x in trades:
        by_month[x.month].add(x.asset_id)
    held = ledger.shares > 0
    out = {}
    for i, m in enumerate(ledger.months):
        s: set[str] = set()
        for r in range(max(0, i - window + 1), i + 1):
            s |= by_month.get(ledger.months[r], set())
        rows_held = held[max(0, i - window):i + 1].any(axis=0)
        s.update(a for a, h in zip(ledger.assets, rows_held) if h)
        out[to_period(m)] = frozenset(s)
    return out


# ---------------------------------------------------------------- returns

def flow_weight(date, month=None) -> float:
    """Fraction of the calendar month remaining after a flow on ``date``."""
    d = pd.Timestamp(np.datetime64(date, "D"))
    days = calendar.monthrange(d.year, d.month)[1]
    return (days - d.day) / days


def modified_dietz_return(begin_value: float, end_value: float,
                          flows: Sequence[tuple] = ()) -> float:
    """Money-weighted monthly return.

    ``flows`` holds ``(date, amount)`` pairs, positive for money entering
    the portfolio.  Each flow is weighted by the fraction of its month
    remaining after the flow date.  Returns NaN if the denominator vanishes.
    """
    if not flows:
        return end_value / begin_value - 1.0 if begin_value != 0 else math.nan
    net = sum(a for _, a in flows)
    weighted = sum(flow_weight(d) * a for d, a in flows)
    denom = begin_value + weighted
    if denom == 0 or not math.isfinite(denom):
        return math.nan
    return (end_value - begin_value - net) / denom


class PriceBook:
    """Marks positions using trade prices rolled forward with total returns.

    The price of an asset on a trading day is the most recent trade price
    (any investor) scaled by the asset's cumulative return since that trade;
    before the first trade the first trade price is rolled backward.
    """

    def __init__(self, daily: DailyReturnPanel, trades: Iterable[TradeRecord]):
        self.daily = daily
        self.dates = daily.dates
        growth = np.where(np.isnan(daily.returns), 0.0, daily.returns)
        self.index = np.cumprod(1.0 + growth, axis=0)
        self.col = {a: j for j, a in enumerate(daily.asset_ids)}
        anchors: dict[str, list] = defaultdict(list)
        for t in trades:
            anchors[t.asset_id].append((self.day_index(t.date), t.timestamp, t.price))
        self.anchors = {}
        for a, lst in anchors.items():
            if a not in self.col:
                raise KeyError(f"traded asset {a} not in return panel")
            lst.sort(key=lambda x: (x[0], x[1]))
            days = np.array([x[0] for x in lst])
            prices = np.array([x[2] for x in lst])
            # keep the last trade of each day
            keep = np.append(days[1:] != days[:-1], True)
            self.anchors[a] = (days[keep], prices[keep])
        self._month_ends = month_end_rows(daily)
        self._month_of_end = daily.dates[self._month_ends].astype("datetime64[M]")

    def day_index(self, date) -> int:
        """Last trading day on or before ``date``."""
        i = int(np.searchsorted(self.dates, np.datetime64(date, "D"), side="right")) - 1
        return max(i, 0)

    def price(self, asset: str, day: int) -> float:
        days, prices = self.anchors[asset]
        k = int(np.searchsorted(days, day, side="right")) - 1
        k = max(k, 0)
        j = self.col[asset]
        return float(prices[k] * self.index[day, j] / self.index[days[k], j])

    def month_end_day(self, month) -> int:
        m = np.datetime64(month, "M")
        i = int(np.searchsorted(self._month_of_end, m))
        if i >= len(self._month_of_end) or self._month_of_end[i] != m:
            raise KeyError(f"month {m} not in the trading calendar")
        return int(self._month_ends[i])

    def value(self, holdings: Mapping[str, float], month) -> float:
        day = self.month_end_day(month)
        return sum(q * self.price(a, day) for a, q in holdings.items() if q > 0)


def investor_returns(ledger: HoldingsLedger, trades: Sequence[TradeRecord], book: PriceBook,
                     assets: set[str] | None = None) -> pd.Series:
    """Monthly Modified Dietz returns indexed by month.

    Months that start with an empty portfolio are missing; ``assets``
    restricts the portfolio (and its flows) to a sub-universe.
    """
    keep = [j for j, a in enumerate(ledger.assets) if assets is None or a in assets]
    names = [ledger.assets[j] for j in keep]
    flows_by_month: dict = defaultdict(list)
    for t in trades:
        if assets is not None and t.asset_id not in assets:
            continue
        amount = t.value if t.direction is Direction.BUY else -t.value
        flows_by_month[t.month].append((t.date, amount))

    values = np.empty(len(ledger.months))
    for i, m in enumerate(ledger.months):
        day = book.month_end_day(m)
        q = ledger.shares[i, keep]
        values[i] = sum(x * book.price(a, day) for a, x in zip(names, q) if x > 0)

    out = {}
    for i in range(1, len(ledger.months)):
        m = ledger.months[i]
        bmv = values[i - 1]
        if bmv <= 0:
            out[m] = math.nan
            continue
        out[m] = modified_dietz_return(bmv, values[i], flows_by_month.get(m, ()))
    idx = pd.PeriodIndex([to_period(m) for m in out], freq="M")
    return pd.Series(list(out.values()), index=idx, dtype=float, name=ledger.investor_id)


# --------------------------------------------------------------- admission

@dataclass
class InvestorHistory:
    investor_id: str
    returns: pd.Series                # PeriodIndex[M] -> monthly return (NaN missing)
    set_sizes: Mapping[pd.Period, int]  # formation month -> N_it


@dataclass
class AdmissionResult:
    admitted: list[str]
    exclusions: list[tuple[str, str]]
    returns: dict[str, pd.Series] = field(default_factory=dict)

    def write_exclusions(self, path) -> None:
        write_rows(path, ["investor_id", "reason"], self.exclusions)


def apply_admission_filters(histories: Iterable[InvestorHistory],
                            min_months: int = MIN_RETURN_MONTHS,
                            outlier_threshold: float = OUTLIER_THRESHOLD,
                            min_set_size: int = MIN_SET_SIZE) -> AdmissionResult:
    """Keep investors with enough clean history and opportunity sets of size >= 2.

    A single month with ``|r| > outlier_threshold`` is dropped; more than one
    excludes the investor.  The opportunity-set check runs on every month in
    which a robo portfolio would be formed (the month before each return).
    """
    admitted, excluded, cleaned = [], [], {}
    for h in histories:
        r = h.returns.copy()
        outliers = r.abs() > outlier_threshold
        if outliers.sum() > 1:
            excluded.append((h.investor_id, "outlier"))
            continue
        r[outliers] = np.nan
        valid = r.dropna()
        if len(valid) < min_months:
            excluded.append((h.investor_id, "insufficient-history"))
            continue
        formation = [m - 1 for m in valid.index]
        if any(h.set_sizes.get(m, 0) < min_set_size for m in formation):
            excluded.append((h.investor_id, "opportunity-set"))
            continue
        admitted.append(h.investor_id)
        cleaned[h.investor_id] = r
    return AdmissionResult(admitted, excluded, cleaned)


# ---------------------------------------------------------------- behavior

def behavioral_metrics(trades: Sequence[TradeRecord], ledger: HoldingsLedger,
                       book: PriceBook) -> BehavioralMetrics:
    """Odean-style sale-day counts plus trades per month.

    On each day with a sale, every asset sold counts as a realized gain or
    loss against its volume-weighted average purchase price; every other
    asset held at the start of that day counts as a paper gain or loss at
    that day's price.  Ties with the reference price count as neither.
    """
    ordered = sorted(trades, key=lambda t: t.timestamp)
    position: dict[str, float] = defaultdict(float)
    cost: dict[str, float] = {}
    rg = rl = pg = pl = 0
    i = 0
    while i < len(ordered):
        day = ordered[i].date
        j = i
        while j < len(ordered) and ordered[j].date == day:
            j += 1
        todays = ordered[i:j]
        sold = {t.asset_id for t in todays if t.direction is Direction.SELL}
        if sold:
            d = book.day_index(day)
            for a, q in list(position.items()):
                if q <= 0 or a in sold:
                    continue
                p = book.price(a, d)
                if p > cost[a]:
                    pg += 1
                elif p < cost[a]:
                    pl += 1
        counted: set[str] = set()
        for t in todays:
            a = t.asset_id
            if t.direction is Direction.BUY:
                old = position[a]
                cost[a] = (cost.get(a, 0.0) * old + t.value) / (old + t.quantity) if old > 0 else t.price
                position[a] = old + t.quantity
            else:
                if a not in counted and position[a] > 0:
                    counted.add(a)
                    if t.price > cost[a]:
                        rg += 1
                    elif t.price < cost[a]:
                        rl += 1
                position[a] = max(position[a] - t.quantity, 0.0)
                if position[a] <= 1e-12:
                    position[a] = 0.0
                    cost.pop(a, None)
        i = j
    n_months = max(len(ledger.months), 1)
    return BehavioralMetrics(ledger.investor_id, rg, rl, pg, pl, len(trades) / n_months)


def assign_frequency_quartiles(metrics: Sequence[BehavioralMetrics]) -> None:
    """Split the cross-section into four near-equal trading-frequency groups in place.

    Ties are broken by investor id so that the assignment is deterministic.
    """
    order = sorted(metrics, key=lambda m: (m.trading_frequency, m.investor_id))
    for q, group in enumerate(np.array_split(np.arange(len(order)), 4), start=1):
        for k in group:
            order[k].frequency_quartile = q
