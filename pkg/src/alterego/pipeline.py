"""Stage orchestration: generate, train, backtest and report with file handoffs."""

from __future__ import annotations

import hashlib
import json
import logging
import multiprocessing as mp
import os
import platform
import shutil
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import pandas as pd

from . import __version__
from ._csv import write_rows
from .analytics import (
    BootstrapSpec,
    CrisisCalendar,
    REGIMES,
    STRATA,
    annualized_by_regime,
    behavioral_design,
    cross_section_summary,
    quantile_regression,
    stratified_summary,
    summary_row,
    write_regression,
)
from .cohort import CohortSpec, generate_cohort
from .engine import (
    COVARIANCE_OF,
    AlterEgoTrack,
    MarketContext,
    Rebalance,
    StrategyKind,
    StrategySpec,
    compound_median_paths,
    compute_spread,
    run_alter_ego,
    write_fig2,
    write_monthly_spreads,
    write_spreads,
    write_tracks,
)
from .forecast import ForecastConfig, load_forecasts, rolling_retrain, write_window_outputs
from .market import (
    AssetClass,
    SyntheticMarketSpec,
    aggregate_to_monthly,
    generate_synthetic_market,
    load_assets,
    load_daily_returns,
    load_predictors,
    write_assets,
    write_daily_returns,
    write_predictors,
)
from .portfolio import (
    BehavioralMetrics,
    InvestorHistory,
    PriceBook,
    apply_admission_filters,
    assign_frequency_quartiles,
    behavioral_metrics,
    build_holdings,
    group_by_investor,
    load_profiles,
    load_trades,
    opportunity_sets,
    investor_returns,
    write_profiles,
    write_trades,
)

log = logging.getLogger(__name__)

UNIVERSES = ("all", "stocks")
FIG2_LABELS = {
    StrategyKind.MV_ROLL: "MV-Roll",
    StrategyKind.MV_ML_ROLL: "MV-ML-Roll",
    StrategyKind.MV_ML_NL: "MV-ML-NL",
    StrategyKind.EW: "EW",
}
DATA_FILES = ("daily_returns", "assets", "predictors", "trades", "profiles")


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class BacktestConfig:
    strategies: tuple[str, ...] = tuple(k.value for k in StrategyKind)
    rebalance: tuple[str, ...] = ("Quarterly",)
    universes: tuple[str, ...] = UNIVERSES
    gamma: float = 1.0
    start: str | None = None
    end: str | None = None
    benchmarks: Mapping[str, str] | None = None     # label -> asset id; default: first two ETFs

    def validate(self) -> None:
        if not self.strategies:
            raise ConfigError("backtest.strategies must name at least one strategy")
        for s in self.strategies:
            try:
                StrategyKind(s)
            except ValueError:
                raise ConfigError(f"backtest.strategies: unknown strategy {s!r}") from None
        if not self.rebalance:
            raise ConfigError("backtest.rebalance must name at least one frequency")
        for r in self.rebalance:
            try:
                Rebalance(r)
            except ValueError:
                raise ConfigError(f"backtest.rebalance: unknown frequency {r!r}") from None
        bad = [u for u in self.universes if u not in UNIVERSES]
        if bad or not self.universes:
            raise ConfigError(f"backtest.universes must be drawn from {UNIVERSES}, got {list(self.universes)}")
        if not self.gamma > 0:
            raise ConfigError("backtest.gamma must be positive")

    @property
    def specs(self) -> list[StrategySpec]:
        return [StrategySpec(k, r) for r in self.rebalance for k in self.strategies]

    @property
    def needs_forecasts(self) -> bool:
        return any(StrategySpec(k).uses_forecasts for k in self.strategies)


@dataclass(frozen=True)
class ReportConfig:
    repetitions: int = 1000
    alpha: float = 0.05
    taus: tuple[float, ...] = (0.5,)
    regression_repetitions: int = 200
    headline: str = "MV_ML_RollVar"
    benchmark_strategy: str = "MV_ML_NonlinearVar"
    crisis_start: str = "2007-12"
    crisis_end: str = "2009-06"

    def validate(self) -> None:
        for name in ("repetitions", "regression_repetitions"):
            if getattr(self, name) < 200:
                raise ConfigError(f"report.{name} must be >= 200")
        if not 0 < self.alpha < 1:
            raise ConfigError("report.alpha must lie in (0, 1)")
        if not self.taus or any(not 0 < t < 1 for t in self.taus):
            raise ConfigError("report.taus must lie strictly inside (0, 1)")
        for name in ("headline", "benchmark_strategy"):
            try:
                StrategyKind(getattr(self, name))
            except ValueError:
                raise ConfigError(f"report.{name}: unknown strategy {getattr(self, name)!r}") from None


def _build(cls, d: Mapping | None, section: str):
    d = dict(d or {})
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"{section}: unknown fields {unknown}")
    for k, v in d.items():
        if isinstance(v, list):
            d[k] = tuple(v)
    try:
        return cls(**d)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{section}: {err}") from None


@dataclass
class RunConfig:
    """One JSON document; stage seeds derive from ``seed`` unless given."""

    seed: int = 0
    market: dict = field(default_factory=dict)
    cohort: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    forecast: dict = field(default_factory=dict)
    backtest: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        unknown = sorted(set(d) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"unknown config sections {unknown}")
        cfg = cls(**{k: (dict(v) if isinstance(v, Mapping) else v) for k, v in d.items()})
        if not isinstance(cfg.seed, int) or cfg.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {cfg.seed!r}")
        bad = sorted(set(cfg.inputs) - set(DATA_FILES))
        if bad:
            raise ConfigError(f"inputs: unknown files {bad}")
        # fail before any stage runs rather than midway through a pipeline
        for build in (cfg.market_spec, cfg.cohort_spec, cfg.forecast_config, cfg.backtest_config,
                      cfg.report_config):
            build()
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON: {err}") from None

    def stage_seed(self, stage: str) -> int:
        state = np.random.SeedSequence([self.seed, zlib.crc32(stage.encode())]).generate_state(1, np.uint32)
        return int(state[0])

    def market_spec(self) -> SyntheticMarketSpec:
        d = {"seed": self.stage_seed("market"), **self.market}
        try:
            spec = SyntheticMarketSpec.from_dict(d)
            spec.validate()
        except (TypeError, ValueError) as err:
            raise ConfigError(f"market: {err}") from None
        return spec

    def cohort_spec(self) -> CohortSpec:
        d = {"seed": self.stage_seed("cohort"), **self.cohort}
        try:
            spec = CohortSpec.from_dict(d)
            spec.validate()
        except (TypeError, ValueError) as err:
            raise ConfigError(f"cohort: {err}") from None
        return spec

    def forecast_config(self) -> ForecastConfig:
        try:
            return ForecastConfig.from_dict(self.forecast)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"forecast: {err}") from None

    def backtest_config(self) -> BacktestConfig:
        cfg = _build(BacktestConfig, self.backtest, "backtest")
        cfg.validate()
        return cfg

    def report_config(self) -> ReportConfig:
        cfg = _build(ReportConfig, self.report, "report")
        cfg.validate()
        return cfg

    def canonical(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


# ---------------------------------------------------------------- runtime

@dataclass
class Run:
    config: RunConfig
    out: Path
    threads: int = 1

    def path(self, stage: str, name: str = "") -> Path:
        return self.out / stage / name if name else self.out / stage

    def data_path(self, name: str) -> Path:
        if name in self.config.inputs:
            return Path(self.config.inputs[name])
        return self.path("data", f"{name}.csv")


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = time.gmtime(int(epoch)) if epoch else time.gmtime()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", t)


def module_versions() -> dict[str, str]:
    import matplotlib
    import scipy

    return {"alterego": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pandas": pd.__version__, "matplotlib": matplotlib.__version__}


@contextmanager
def manifest(run: Run, stage: str):
    started = _timestamp()
    yield
    doc = {"config_hash": run.config.config_hash(), "seed": run.config.seed, "started": started,
           "finished": _timestamp(), "module_versions": module_versions()}
    p = run.path(stage, "manifest.json")
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


@contextmanager
def mapper(threads: int):
    """An order-preserving map over ``threads`` forked workers (builtin map for 1)."""
    if threads <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=threads, mp_context=mp.get_context("fork")) as pool:
        yield lambda fn, items: pool.map(fn, items, chunksize=1)


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def load_market(run: Run):
    assets = load_assets(_require(run.data_path("assets"), "asset list"))
    daily = load_daily_returns(_require(run.data_path("daily_returns"), "daily returns"), assets)
    return assets, daily


# --------------------------------------------------------------- generate

def cmd_generate(run: Run) -> None:
    mspec = run.config.market_spec()
    cspec = run.config.cohort_spec()
    with manifest(run, "data"):
        daily, predictors = generate_synthetic_market(mspec)
        trades, profiles = generate_cohort(cspec, daily)
        out = run.path("data")
        write_assets(daily.assets, out / "assets.csv")
        write_daily_returns(daily, out / "daily_returns.csv")
        write_predictors(predictors, out / "predictors.csv")
        write_trades(trades, out / "trades.csv")
        write_profiles(profiles, out / "profiles.csv")
    log.info("generated %d assets, %d investors, %d trades", len(daily.assets), len(profiles), len(trades))


# ------------------------------------------------------------------ train

def cmd_train(run: Run) -> None:
    config = run.config.forecast_config()
    _, daily = load_market(run)
    predictors = load_predictors(_require(run.data_path("predictors"), "predictor file"))
    monthly = aggregate_to_monthly(daily)
    with manifest(run, "forecasts"), mapper(run.threads) as map_fn:
        result = rolling_retrain(monthly, predictors, config, run.config.stage_seed("forecast"), map_fn=map_fn)
        write_window_outputs(result, run.path("forecasts"))
    log.info("trained %d windows", len(result.windows))


# --------------------------------------------------------------- backtest

_CTX: MarketContext | None = None


def _track_task(task) -> AlterEgoTrack:
    investor_id, sets, spec = task
    return run_alter_ego(investor_id, sets, spec, _CTX)


@dataclass
class InvestorData:
    investor_id: str
    sets: dict                 # universe -> {month: frozenset}
    returns: dict              # universe -> pd.Series
    metrics: BehavioralMetrics


def _investor_data(trades, book, end, universes: Mapping[str, set | None]) -> InvestorData:
    ledger = build_holdings(trades, end=end)
    all_sets = opportunity_sets(ledger, trades)
    sets, rets = {}, {}
    for u, keep in universes.items():
        sets[u] = all_sets if keep is None else {m: s & keep for m, s in all_sets.items()}
        rets[u] = investor_returns(ledger, trades, book, assets=keep)
    return InvestorData(ledger.investor_id, sets, rets, behavioral_metrics(trades, ledger, book))


def backtest_period(cfg: BacktestConfig, monthly_months, forecast_months) -> tuple[pd.Period, pd.Period]:
    first = pd.Period(str(monthly_months[0]), "M")
    last = pd.Period(str(monthly_months[-1]), "M")
    if cfg.start:
        start = pd.Period(cfg.start, "M")
    elif cfg.needs_forecasts and forecast_months:
        start = pd.Period(forecast_months[0], "M")
    else:
        start = first + 24
    end = pd.Period(cfg.end, "M") if cfg.end else last
    if start >= end:
        raise ConfigError(f"backtest period {start}..{end} is empty")
    return start, end


def cmd_backtest(run: Run) -> None:
    global _CTX
    cfg = run.config.backtest_config()
    assets, daily = load_market(run)
    monthly = aggregate_to_monthly(daily)
    trades = load_trades(_require(run.data_path("trades"), "trades file"))
    forecasts: dict = {}
    fc_months: list[str] = []
    fig3 = None
    if cfg.needs_forecasts:
        panel = load_forecasts(_require(run.path("forecasts", "forecasts.csv"), "forecast panel"))
        forecasts = panel.lookup()
        fc_months = panel.months()
        fig3 = run.path("forecasts", "fig3_negative_fraction.csv")
    start, end = backtest_period(cfg, monthly.months, fc_months)
    stocks = {a.id for a in assets if a.asset_class is AssetClass.STOCK}
    universes = {u: (None if u == "all" else stocks) for u in cfg.universes}

    with manifest(run, "backtest"):
        book = PriceBook(daily, trades)
        data = [_investor_data(tr, book, str(end), universes)
                for tr in group_by_investor(trades).values()]
        data.sort(key=lambda d: d.investor_id)
        behavior_rows = [[d.investor_id, d.metrics.realized_gains, d.metrics.realized_losses,
                          d.metrics.paper_gains, d.metrics.paper_losses, d.metrics.trading_frequency,
                          d.metrics.disposition_effect] for d in data]
        write_rows(run.path("backtest", "behavior.csv"),
                   ["investor_id", "realized_gains", "realized_losses", "paper_gains", "paper_losses",
                    "trading_frequency", "disposition_effect"], behavior_rows)
        if fig3 is not None:
            shutil.copyfile(fig3, run.path("backtest", "fig3_negative_fraction.csv"))

        _CTX = MarketContext(daily, monthly, forecasts, gamma=cfg.gamma)
        months = pd.period_range(start, end, freq="M")
        estimators = {COVARIANCE_OF[StrategySpec(k).kind] for k in cfg.strategies if k != "EW"}
        _CTX.prepare(months, estimators)
        try:
            with mapper(run.threads) as map_fn:
                for u in cfg.universes:
                    _backtest_universe(run, cfg, u, data, start, end, map_fn)
        finally:
            _CTX = None


def _backtest_universe(run: Run, cfg: BacktestConfig, universe: str, data, start, end, map_fn) -> None:
    out = run.path("backtest", universe)
    histories, sets = [], {}
    for d in data:
        r = d.returns[universe]
        r = r[(r.index > start) & (r.index <= end)]
        s = {m: x for m, x in d.sets[universe].items() if start <= m <= end}
        histories.append(InvestorHistory(d.investor_id, r, {m: len(x) for m, x in s.items()}))
        sets[d.investor_id] = s
    adm = apply_admission_filters(histories)
    adm.write_exclusions(out / "exclusions.csv")
    write_rows(out / "investor_returns.csv", ["investor_id", "month", "return"],
               ([i, str(m), v] for i in adm.admitted for m, v in adm.returns[i].items()))
    log.info("%s: %d admitted, %d excluded", universe, len(adm.admitted), len(adm.exclusions))

    for freq in cfg.rebalance:
        specs = [StrategySpec(k, freq) for k in cfg.strategies]
        tasks = [(i, sets[i], s) for i in adm.admitted for s in specs]
        tracks = list(map_fn(_track_task, tasks))
        spreads = [compute_spread(t, adm.returns[t.investor_id]) for t in tracks]
        sub = out / Rebalance(freq).value.lower()
        write_tracks(tracks, sub / "tracks.csv")
        write_spreads(spreads, sub / "spreads.csv")
        write_monthly_spreads(spreads, sub / "monthly_spreads.csv")
        write_fig2(compound_median_paths(_fig2_panels(tracks, adm.returns, cfg.strategies)), sub / "fig2_median_paths.csv")


def _fig2_panels(tracks, investor_rets, strategies) -> dict[str, pd.DataFrame]:
    by_kind: dict[str, dict] = {k: {} for k in strategies}
    for t in tracks:
        by_kind[t.strategy][t.investor_id] = t.series()
    realized = {}
    first = by_kind[strategies[0]]
    for inv, s in first.items():
        realized[inv] = investor_rets[inv].reindex(s.index)
    panels = {"realized": pd.DataFrame(realized)}
    for kind in (StrategyKind.MV_ROLL, StrategyKind.MV_ML_ROLL, StrategyKind.MV_ML_NL, StrategyKind.EW):
        if kind.value in by_kind:
            panels[FIG2_LABELS[kind]] = pd.DataFrame(by_kind[kind.value])
    return panels


# ----------------------------------------------------------------- report

def _read_panel(path: Path, value: str, strategy: str | None = None) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"investor_id": str, "month": str})
    if strategy is not None:
        df = df[df["strategy"] == strategy]
    if df.empty:
        return pd.DataFrame()
    wide = df.pivot(index="month", columns="investor_id", values=value)
    wide.index = pd.PeriodIndex(wide.index, freq="M")
    return wide.sort_index()


def _annualized(panel: pd.DataFrame) -> pd.Series:
    return (12.0 * 100.0 * panel.mean(axis=0, skipna=True)).dropna()


def benchmark_labels(cfg: BacktestConfig, assets) -> dict[str, str]:
    if cfg.benchmarks is not None:
        return dict(cfg.benchmarks)
    etfs = [a.id for a in assets if a.asset_class is AssetClass.ETF][:2]
    return {f"ETF{k + 1}": a for k, a in enumerate(etfs)}


def cmd_report(run: Run) -> None:
    from . import plotting

    bt = run.config.backtest_config()
    rc = run.config.report_config()
    assets, daily = load_market(run)
    monthly = aggregate_to_monthly(daily)
    profiles = {p.investor_id: p for p in load_profiles(_require(run.data_path("profiles"), "profiles file"))}
    boot = BootstrapSpec(rc.repetitions, rc.alpha, run.config.stage_seed("bootstrap"))
    reg_boot = BootstrapSpec(rc.regression_repetitions, rc.alpha, run.config.stage_seed("regression"))
    calendar = CrisisCalendar(rc.crisis_start, rc.crisis_end)
    primary = Rebalance(bt.rebalance[0]).value.lower()
    main_u = "all" if "all" in bt.universes else bt.universes[0]
    out = run.path("report")
    lines: list[str] = []

    with manifest(run, "report"):
        # table 2: spreads by universe, frequency and strategy
        rows = []
        for u in bt.universes:
            for freq in bt.rebalance:
                sp = pd.read_csv(run.path("backtest", u) / Rebalance(freq).value.lower() / "spreads.csv",
                                 dtype={"investor_id": str})
                for k in bt.strategies:
                    v = sp.loc[sp["strategy"] == k, "annualized_spread_pct"].dropna()
                    if len(v):
                        rows.append([u, Rebalance(freq).value, k, *summary_row(cross_section_summary(v))])
        write_rows(out / "table2_spreads.csv", ["universe", "rebalance", "strategy", "median", "q1", "q3", "n"], rows)
        for r in rows:
            lines.append(f"spread {r[0]:6s} {r[1]:9s} {r[2]:20s} median {r[3]:8.3f}  Q1 {r[4]:8.3f}  Q3 {r[5]:8.3f}  n {r[6]}")

        sub = run.path("backtest", main_u) / primary
        spreads = pd.read_csv(sub / "spreads.csv", dtype={"investor_id": str})
        inv_panel = _read_panel(run.path("backtest", main_u) / "investor_returns.csv", "return")
        tracks = pd.read_csv(sub / "tracks.csv", dtype={"investor_id": str, "month": str})

        headline = spreads[spreads["strategy"] == rc.headline].set_index("investor_id")["annualized_spread_pct"]
        if len(headline):
            _table4_strata(out, headline, profiles, boot, lines)
            robo = _read_panel(sub / "tracks.csv", "robo_return", rc.headline)
            _table4_crisis(out, inv_panel, robo, calendar, lines)
        else:
            log.warning("headline strategy %s not in backtest; tables 4 and 6 skipped", rc.headline)

        bench = benchmark_labels(bt, assets)
        ae = _read_panel(sub / "tracks.csv", "robo_return", rc.benchmark_strategy)
        if bench and not ae.empty:
            _table5(out, inv_panel, ae, monthly, bench, calendar)
        else:
            log.warning("no benchmark ETFs or %s tracks; table 5 skipped", rc.benchmark_strategy)

        if len(headline):
            behavior = pd.read_csv(run.path("backtest", "behavior.csv"), dtype={"investor_id": str})
            bench_spread = None
            if bench:
                label, asset = next(iter(bench.items()))
                b = pd.Series(monthly.series(asset), index=pd.PeriodIndex([str(m) for m in monthly.months], freq="M"))
                diff = inv_panel.apply(lambda col: b.reindex(col.index) - col)
                months = pd.PeriodIndex(tracks.loc[tracks["strategy"] == rc.headline, "month"].unique(), freq="M")
                bench_spread = _annualized(diff.loc[diff.index.isin(months)])
            _table6(out, headline, bench_spread, behavior, rc, reg_boot, lines)

        _figures(run, out, primary, main_u, plotting)
        (out / "summary.txt").write_text("\n".join(lines) + "\n")


def _table4_strata(out, headline, profiles, boot, lines) -> None:
    rows = []
    for s in STRATA:
        try:
            res = stratified_summary(headline, profiles, s, boot)
        except ValueError as err:
            log.warning("stratum %s skipped: %s", s, err)
            continue
        for lv in ("L", "H"):
            ci = res.median_cis.get(lv)
            rows.append([s, lv, *summary_row(res.summaries[lv]),
                         ci.lower if ci else None, ci.upper if ci else None])
        d = res.difference
        rows.append([s, "H-L", d.estimate if d else None, None, None,
                     res.summaries["L"].n + res.summaries["H"].n, d.lower if d else None, d.upper if d else None])
        if d:
            lines.append(f"{s}: median difference H-L {d.estimate:.3f}, CI [{d.lower:.4f}, {d.upper:.4f}]")
    write_rows(out / "table4_strata.csv", ["stratum", "level", "median", "q1", "q3", "n", "ci_lower", "ci_upper"], rows)


def _table4_crisis(out, inv_panel, robo, calendar, lines) -> None:
    realized = inv_panel.reindex(index=robo.index, columns=robo.columns)
    rows = []
    reg_r = annualized_by_regime(realized, calendar)
    reg_a = annualized_by_regime(robo, calendar)
    for reg in REGIMES:
        for name, per in (("Realized", reg_r[reg]), ("MV ML", reg_a[reg])):
            s = cross_section_summary(per) if len(per) else None
            rows.append([reg, name, *summary_row(s)])
    write_rows(out / "table4_crisis.csv", ["regime", "series", "median", "q1", "q3", "n"], rows)
    during = calendar.labels(robo.index) == "during"
    if during.any():
        med = robo.loc[during].median(axis=1, skipna=True)
        lines.append(f"crisis months with median robo return exactly 0: {int((med == 0).sum())}/{int(during.sum())}")


def _table5(out, inv_panel, ae, monthly, bench, calendar) -> None:
    idx = pd.PeriodIndex([str(m) for m in monthly.months], freq="M")
    realized = inv_panel.reindex(index=ae.index, columns=ae.columns)
    labels = calendar.labels(ae.index)
    rows = []
    for period in ("full",) + REGIMES:
        mask = np.ones(len(ae), bool) if period == "full" else labels == period
        for label, asset in bench.items():
            b = pd.Series(monthly.series(asset), index=idx).reindex(ae.index)
            r_sp = _annualized(realized.loc[mask].sub(b[mask], axis=0))
            a_sp = _annualized(ae.loc[mask].sub(b[mask], axis=0))
            row = [period, label, asset]
            for v in (r_sp, a_sp):
                row += summary_row(cross_section_summary(v))[:3] if len(v) else [None] * 3
            rows.append(row)
    write_rows(out / "table5_benchmarks.csv",
               ["period", "benchmark", "asset_id", "realized_median", "realized_q1", "realized_q3",
                "alter_ego_median", "alter_ego_q1", "alter_ego_q3"], rows)


def _table6(out, headline, bench_spread, behavior, rc, boot, lines) -> None:
    beh = behavior.set_index("investor_id")
    for dep, y in (("spread", headline), ("benchmark", bench_spread)):
        if y is None:
            continue
        ids = [i for i in y.index if i in beh.index and np.isfinite(beh.at[i, "disposition_effect"])]
        metrics = [BehavioralMetrics(i, 0, 0, 0, 0, float(beh.at[i, "trading_frequency"])) for i in ids]
        assign_frequency_quartiles(metrics)
        quart = np.array([m.frequency_quartile for m in metrics])
        de = beh.loc[ids, "disposition_effect"].to_numpy(dtype=float)
        yv = y.loc[ids].to_numpy(dtype=float)
        for model, q in (("de", None), ("de_freq", quart)):
            X, names = behavioral_design(de, q)
            try:
                results = [quantile_regression(yv, X, names, tau, boot) for tau in rc.taus]
            except ValueError as err:
                log.warning("table 6 %s/%s skipped: %s", dep, model, err)
                continue
            write_regression(results, out / f"table6_{dep}_{model}.csv")
            for r in results:
                de_k = names.index("disposition_effect")
                lines.append(f"median regression {dep}/{model} tau {r.tau}: DE {r.coef[de_k]:.4f} "
                             f"(p {r.p_values[de_k]:.3f})")


def _figures(run: Run, out: Path, primary: str, universe: str, plotting) -> None:
    fig1 = run.path("forecasts", "fig1_win_fractions.csv")
    fig3 = run.path("forecasts", "fig3_negative_fraction.csv")
    fig2 = run.path("backtest", universe) / primary / "fig2_median_paths.csv"
    if fig1.is_file():
        shutil.copyfile(fig1, out / "fig1_win_fractions.csv")
        plotting.plot_win_fractions(pd.read_csv(fig1), out / "fig1_win_fractions.png")
    if fig2.is_file():
        shutil.copyfile(fig2, out / "fig2_median_paths.csv")
        plotting.plot_median_paths(pd.read_csv(fig2, dtype={"month": str}), out / "fig2_median_paths.png")
    if fig3.is_file():
        shutil.copyfile(fig3, out / "fig3_negative_fraction.csv")
        plotting.plot_negative_fraction(pd.read_csv(fig3, dtype={"month": str}), out / "fig3_negative_fraction.png")


STAGES: dict[str, Callable[[Run], None]] = {
    "generate": cmd_generate,
    "train": cmd_train,
    "backtest": cmd_backtest,
    "report": cmd_report,
}
