"""Synthetic investor cohorts with a tunable disposition effect."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .market import AssetClass, DailyReturnPanel
from .portfolio import Direction, InvestorProfile, TradeRecord

STRATA = ("education", "risk_aversion", "income")


def _default_strata() -> dict:
    return {s: {"L": 0.5, "H": 0.5} for s in STRATA}


@dataclass(frozen=True)
class CohortSpec:
    """Parameters of a synthetic cohort.

    Each investor draws a personal trade rate from a Gamma distribution with
    mean ``trades_per_month`` and trades only a personal subset of the
    universe whose size is lognormal around ``universe_median``.  Sell
    choices are a softmax over held assets with a gain indicator weighted by
    the investor's disposition knob; a chosen loser is also kept (and the
    trade turned into a buy) with probability equal to the knob.
    """

    n_investors: int = 500
    start: str | None = None            # first trading month; defaults to the market's first
    end: str | None = None              # last trading month; defaults to the market's last
    trades_per_month: float = 2.76
    trade_rate_shape: float = 2.0
    universe_median: float = 3.0
    universe_sigma: float = 0.8
    etf_weight: float = 0.3
    sell_prob: float = 0.45
    disposition: float = 0.0
    disposition_dispersion: float = 0.0
    choice_strength: float = 5.0
    trade_value: float = 5000.0
    strata: Mapping[str, Mapping[str, float]] = field(default_factory=_default_strata)
    seed: int = 0

    def validate(self) -> None:
        if self.n_investors < 1:
            raise ValueError(f"n_investors must be >= 1, got {self.n_investors}")
        if self.trades_per_month <= 0:
            raise ValueError("trades_per_month must be positive")
        if self.trade_rate_shape <= 0:
            raise ValueError("trade_rate_shape must be positive")
        if self.universe_median < 1:
            raise ValueError("universe_median must be >= 1")
        if not 0.0 <= self.sell_prob < 1.0:
            raise ValueError("sell_prob must lie in [0, 1)")
        if not 0.0 <= self.disposition <= 1.0:
            raise ValueError(f"disposition must lie in [0, 1], got {self.disposition}")
        if self.disposition_dispersion < 0:
            raise ValueError("disposition_dispersion must be nonnegative")
        if self.trade_value <= 0:
            raise ValueError("trade_value must be positive")
        for s in STRATA:
            mix = self.strata.get(s)
            if mix is None or set(mix) != {"L", "H"}:
                raise ValueError(f"strata.{s} must give proportions for 'L' and 'H'")
            if min(mix.values()) < 0 or abs(sum(mix.values()) - 1.0) > 1e-9:
                raise ValueError(f"strata.{s} proportions must be nonnegative and sum to 1")

    @classmethod
    def from_dict(cls, d: Mapping) -> "CohortSpec":
        return cls(**dict(d))


def investor_ids(n: int) -> list[str]:
    return [f"I{k + 1:05d}" for k in range(n)]


def _stream(seed: int, k: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, k, purpose]))


def investor_knobs(spec: CohortSpec) -> dict[str, float]:
    """Per-investor disposition intensity in [0, 1]."""
    out = {}
    for k, inv in enumerate(investor_ids(spec.n_investors)):
        knob = spec.disposition
        if spec.disposition_dispersion > 0:
            knob += spec.disposition_dispersion * _stream(spec.seed, k, 1).standard_normal()
        out[inv] = float(np.clip(knob, 0.0, 1.0))
    return out


def price_levels(daily: DailyReturnPanel) -> np.ndarray:
    """Price paths starting at 100, with missing days as zero return."""
    growth = np.where(np.isnan(daily.returns), 0.0, daily.returns)
    return 100.0 * np.cumprod(1.0 + growth, axis=0)


def _profile(inv: str, rng: np.random.Generator, spec: CohortSpec) -> InvestorProfile:
    levels = {s: ("H" if rng.random() < spec.strata[s]["H"] else "L") for s in STRATA}
    return InvestorProfile(inv, int(rng.integers(25, 76)), "M" if rng.random() < 0.5 else "F", **levels)


def _investor_trades(inv: str, k: int, spec: CohortSpec, knob: float, daily: DailyReturnPanel,
                     prices: np.ndarray, day_rows: list[np.ndarray]) -> list[TradeRecord]:
    rng = _stream(spec.seed, k, 0)
    n_assets = len(daily.assets)
    weight = np.array([spec.etf_weight if a.asset_class is AssetClass.ETF else 1.0 for a in daily.assets])
    size = int(np.clip(round(spec.universe_median * np.exp(spec.universe_sigma * rng.standard_normal())),
                       1, n_assets))
    subset = rng.choice(n_assets, size=size, replace=False, p=weight / weight.sum())
    rate = rng.gamma(spec.trade_rate_shape, spec.trades_per_month / spec.trade_rate_shape)

    shares: dict[int, int] = {}
    cost: dict[int, float] = {}           # average purchase price
    trades = []
    for rows in day_rows:
        n = int(rng.poisson(rate))
        if n == 0:
            continue
        days = np.sort(rng.choice(rows, size=n, replace=True))
        for seq, d in enumerate(days):
            sell = bool(shares) and rng.random() < spec.sell_prob
            j = -1
            if sell:
                held = sorted(shares)
                p = prices[d, held]
                c = np.array([cost[h] for h in held])
                gain = np.sign(p - c)     # +1 gain, -1 loss, 0 neither
                u = spec.choice_strength * knob * gain
                prob = np.exp(u - u.max())
                j = held[int(rng.choice(len(held), p=prob / prob.sum()))]
                if prices[d, j] < cost[j] and rng.random() < knob:
                    sell = False           # hold on to the loser
            stamp = np.datetime64(daily.dates[d], "s") + np.timedelta64(36000 + seq, "s")
            if sell:
                q = shares.pop(j)
                cost.pop(j)
                trades.append(TradeRecord(inv, stamp, daily.assets[j].id, Direction.SELL, q, prices[d, j]))
            else:
                j = int(rng.choice(subset))
                px = prices[d, j]
                q = max(1, int(spec.trade_value * np.exp(0.5 * rng.standard_normal()) // px))
                old = shares.get(j, 0)
                cost[j] = (cost.get(j, 0.0) * old + px * q) / (old + q)
                shares[j] = old + q
                trades.append(TradeRecord(inv, stamp, daily.assets[j].id, Direction.BUY, q, px))
    return trades


def generate_cohort(spec: CohortSpec, daily: DailyReturnPanel) -> tuple[list[TradeRecord], list[InvestorProfile]]:
    """Trades and profiles for ``spec.n_investors`` investors.

    Trade prices are the market's price paths starting at 100 on the first
    day, so any valuation anchored on these trades reproduces them.
    Investors are independent; each uses streams derived from
    ``(seed, investor index)``.
    """
    spec.validate()
    months = daily.dates.astype("datetime64[M]")
    first, last = months[0], months[-1]
    lo = np.datetime64(spec.start, "M") if spec.start else first
    hi = np.datetime64(spec.end, "M") if spec.end else last
    if lo < first or hi > last or lo > hi:
        raise ValueError(f"cohort horizon {lo}..{hi} is outside the market span {first}..{last}")
    prices = price_levels(daily)
    day_rows = [np.flatnonzero(months == m) for m in np.arange(lo, hi + 1)]
    day_rows = [r for r in day_rows if len(r)]
    knobs = investor_knobs(spec)
    trades, profiles = [], []
    for k, inv in enumerate(investor_ids(spec.n_investors)):
        trades.extend(_investor_trades(inv, k, spec, knobs[inv], daily, prices, day_rows))
        profiles.append(_profile(inv, _stream(spec.seed, k, 2), spec))
    return trades, profiles
