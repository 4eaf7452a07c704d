"""Per-asset model training, winner selection and rolling retraining."""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .._csv import fmt, read_rows, write_rows, ParseError, parse_float
from ..market import PREDICTORS, MonthlyReturnPanel, PredictorPanel
from .features import FeatureSet, InsufficientHistory, SplitSpec, make_features
from .forest import fit_random_forest
from .linear import fit_elastic_net, fit_ols
from .nnet import fit_neural_net

log = logging.getLogger(__name__)

KINDS: tuple[str, ...] = ("OLS", "EN", "RF", "NN", "Comb")
PRIORITY: tuple[str, ...] = ("EN", "NN", "Comb", "RF", "OLS")
MEMBERS: tuple[str, ...] = ("OLS", "EN", "RF", "NN")
FORECAST_HEADER = ["month", "asset_id", "forecast", "winner"] + [f"mse_{k.lower()}" for k in KINDS]


@dataclass(frozen=True)
class ForecastConfig:
    window_months: int = 120
    step_months: int = 12
    split: SplitSpec = SplitSpec()
    min_months: int = 36
    en_alphas: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    en_n_lambdas: int = 50
    en_ratio: float = 1e-4
    rf_trees: tuple[int, ...] = (100, 300)
    rf_depths: tuple[int, ...] = (3, 5, 8)
    rf_subsets: tuple[int, ...] = (5, 7, 22)
    rf_min_leaf: int = 5
    nn_learning_rates: tuple[float, ...] = (1e-2, 1e-3)
    nn_l2s: tuple[float, ...] = (1e-4, 1e-3)
    nn_batch: int = 32
    nn_max_epochs: int = 500
    nn_patience: int = 25

    @classmethod
    def from_dict(cls, d: Mapping) -> "ForecastConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown forecast options: {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            if k == "split":
                kw[k] = SplitSpec(**v) if isinstance(v, Mapping) else v
            elif isinstance(v, list):
                kw[k] = tuple(v)
            else:
                kw[k] = v
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    kind: str
    members: tuple
    tuning: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        return np.mean([m.predict(X) for m in self.members], axis=0)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    kind: str
    asset: str
    model: object
    tuning: dict

    def predict(self, X) -> np.ndarray:
        return self.model.predict(X)


def ensemble_predict(models: Mapping[str, object], X) -> np.ndarray:
    missing = [k for k in MEMBERS if k not in models]
    if missing:
        raise ValueError(f"ensemble is missing constituents: {missing}")
    return np.mean([models[k].predict(X) for k in MEMBERS], axis=0)


def select_winner(mses: Mapping[str, float]) -> str:
    """Lowest MSE at 12 significant digits; ties go to the earlier kind in PRIORITY."""
    def key(kind):
        v = mses[kind]
        return (float(f"{v:.12g}") if np.isfinite(v) else np.inf, PRIORITY.index(kind))
    return min((k for k in mses), key=key)


def asset_seed(seed: int, window: int, asset_id: str) -> int:
    """64-bit seed for one (window, asset) fit, independent of scheduling order."""
    ss = np.random.SeedSequence([int(seed), int(window), zlib.crc32(asset_id.encode())])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True, eq=False)
class AssetResult:
    window: int
    asset: str
    seed: int
    models: dict
    test_months: np.ndarray
    y_test: np.ndarray
    predictions: dict
    mse: dict
    mae: dict
    winner: str


def train_asset(asset: str, fs: FeatureSet, config: ForecastConfig, seed: int, window: int = 0) -> AssetResult:
    tr, va, te = config.split.split(len(fs))
    X, y = fs.X[tr], fs.y[tr]
    Xv, yv = fs.X[va], fs.y[va]
    Xt, yt = fs.X[te], fs.y[te]
    root = np.random.SeedSequence(seed)
    rf_seed, nn_seed = root.spawn(2)
    ols = fit_ols(X, y)
    en = fit_elastic_net(X, y, Xv, yv, config.en_alphas, config.en_n_lambdas, config.en_ratio)
    rf = fit_random_forest(X, y, Xv, yv, rf_seed, config.rf_trees, config.rf_depths,
                           config.rf_subsets, config.rf_min_leaf)
    nn = fit_neural_net(X, y, Xv, yv, nn_seed, config.nn_learning_rates, config.nn_l2s,
                        config.nn_batch, config.nn_max_epochs, config.nn_patience)
    comb = EnsembleModel("Comb", (ols, en, rf, nn))
    fitted = {"OLS": ols, "EN": en, "RF": rf, "NN": nn, "Comb": comb}
    models = {k: TrainedModel(k, asset, m, dict(getattr(m, "tuning", {}))) for k, m in fitted.items()}
    preds = {k: m.predict(Xt) for k, m in fitted.items()}
    mse = {k: float(np.mean((p - yt) ** 2)) for k, p in preds.items()}
    mae = {k: float(np.mean(np.abs(p - yt))) for k, p in preds.items()}
    return AssetResult(window, asset, seed, models, fs.months[te], yt, preds, mse, mae, select_winner(mse))


# ------------------------------------------------------------ panels

@dataclass(eq=False)
class ForecastPanel:
    """Winning-model forecasts per (origin month, asset) plus per-kind metrics."""

    forecasts: pd.DataFrame      # FORECAST_HEADER columns, month as "YYYY-MM"
    metrics: pd.DataFrame        # window, asset_id, kind, mse, mae
    win_fractions: pd.DataFrame  # window, kind, win_fraction
    en_coefs: pd.DataFrame       # window, asset_id, then one column per feature (standardized)

    def lookup(self) -> dict[tuple[str, str], float]:
        return {(m, a): f for m, a, f in zip(self.forecasts["month"], self.forecasts["asset_id"],
                                            self.forecasts["forecast"])}

    def months(self) -> list[str]:
        return sorted(set(self.forecasts["month"]))


def _empty_panel() -> ForecastPanel:
    return ForecastPanel(pd.DataFrame(columns=FORECAST_HEADER),
                         pd.DataFrame(columns=["window", "asset_id", "kind", "mse", "mae"]),
                         pd.DataFrame(columns=["window", "kind", "win_fraction"]),
                         pd.DataFrame(columns=["window", "asset_id"] + list(("own_lag",) + PREDICTORS)))


def evaluate_and_select(results: Sequence[AssetResult], window: int = 0) -> ForecastPanel:
    """Assemble one window's forecast panel from per-asset results."""
    if not results:
        return _empty_panel()
    rows, metrics, coefs = [], [], []
    wins = dict.fromkeys(KINDS, 0)
    for r in results:
        wins[r.winner] += 1
        mses = [r.mse[k] for k in KINDS]
        for month, f in zip(r.test_months, r.predictions[r.winner]):
            rows.append([str(month), r.asset, float(f), r.winner] + mses)
        for k in KINDS:
            metrics.append([window, r.asset, k, r.mse[k], r.mae[k]])
        coefs.append([window, r.asset] + list(r.models["EN"].model.std_coef))
    n = len(results)
    win = pd.DataFrame({"window": window, "kind": list(KINDS), "win_fraction": [wins[k] / n for k in KINDS]})
    return ForecastPanel(
        pd.DataFrame(rows, columns=FORECAST_HEADER),
        pd.DataFrame(metrics, columns=["window", "asset_id", "kind", "mse", "mae"]),
        win,
        pd.DataFrame(coefs, columns=["window", "asset_id", "own_lag", *PREDICTORS]),
    )


def combine_panels(panels: Sequence[ForecastPanel]) -> ForecastPanel:
    """Concatenate window panels; where test months overlap the newest window wins."""
    panels = [p for p in panels if len(p.metrics)]
    if not panels:
        return _empty_panel()
    parts = []
    for w, p in enumerate(panels):
        f = p.forecasts.copy()
        f["_order"] = w
        parts.append(f)
    f = pd.concat(parts, ignore_index=True)
    f = f.sort_values(["month", "asset_id", "_order"]).drop_duplicates(["month", "asset_id"], keep="last")
    f = f.drop(columns="_order").reset_index(drop=True)
    return ForecastPanel(
        f,
        pd.concat([p.metrics for p in panels], ignore_index=True),
        pd.concat([p.win_fractions for p in panels], ignore_index=True),
        pd.concat([p.en_coefs for p in panels], ignore_index=True),
    )


def summarize_metrics(panel: ForecastPanel) -> pd.DataFrame:
    """Cross-sectional mean and median of MSE and MAE per kind."""
    g = panel.metrics.groupby("kind", sort=False)
    out = pd.DataFrame({
        "kind": list(KINDS),
        "mean_mse": [g.get_group(k)["mse"].mean() if k in g.groups else np.nan for k in KINDS],
        "median_mse": [g.get_group(k)["mse"].median() if k in g.groups else np.nan for k in KINDS],
        "mean_mae": [g.get_group(k)["mae"].mean() if k in g.groups else np.nan for k in KINDS],
        "median_mae": [g.get_group(k)["mae"].median() if k in g.groups else np.nan for k in KINDS],
    })
    return out


# ---------------------------------------------------------- rolling windows

def window_bounds(n_months: int, window: int = 120, step: int = 12) -> list[tuple[int, int]]:
    """Half-open month-index ranges of the rolling training windows.

    When the last regular window stops short of the data, one more window
    is anchored at the end so the newest months get forecasts too.
    """
    if n_months <= 0:
        return []
    if n_months < window:
        log.warning("only %d months of data for a %d-month window; using one short window",
                    n_months, window)
        return [(0, n_months)]
    out = [(s, s + window) for s in range(0, n_months - window + 1, step)]
    if out[-1][1] < n_months:
        out.append((n_months - window, n_months))
    return out


def _train_task(task) -> AssetResult | None:
    w, asset, months, r, predictors, config, seed = task
    try:
        fs = make_features(months, r, predictors, config.min_months)
    except InsufficientHistory as err:
        log.info("window %d, %s skipped: %s", w, asset, err)
        return None
    if len(fs.y[config.split.split(len(fs))[2]]) == 0:
        log.info("window %d, %s skipped: empty test split", w, asset)
        return None
    return train_asset(asset, fs, config, seed, w)


@dataclass(eq=False)
class RetrainResult:
    windows: list[tuple[str, str]]  # first and last month of each window
    panels: list[ForecastPanel]
    combined: ForecastPanel
    seeds: pd.DataFrame            # window, asset_id, seed


def rolling_retrain(monthly: MonthlyReturnPanel, predictors: PredictorPanel, config: ForecastConfig,
                    seed: int, assets: Iterable[str] | None = None,
                    map_fn: Callable = map) -> RetrainResult:
    """Train every asset on every rolling window and combine the panels.

    ``map_fn`` lets the caller parallelise the per-asset fits; it must
    preserve input order (``map`` and ``Executor.map`` both do).
    """
    assets = list(assets) if assets is not None else monthly.asset_ids
    bounds = window_bounds(len(monthly.months), config.window_months, config.step_months)
    tasks, seeds = [], []
    for w, (lo, hi) in enumerate(bounds):
        for a in assets:
            s = asset_seed(seed, w, a)
            seeds.append([w, a, s])
            tasks.append((w, a, monthly.months[lo:hi], monthly.series(a)[lo:hi], predictors, config, s))
    for w, a, s in seeds:
        log.debug("window %d asset %s seed %d", w, a, s)
    results = list(map_fn(_train_task, tasks))
    panels = []
    for w in range(len(bounds)):
        panels.append(evaluate_and_select([r for r in results if r is not None and r.window == w], w))
    windows = [(str(monthly.months[lo]), str(monthly.months[hi - 1])) for lo, hi in bounds]
    return RetrainResult(windows, panels, combine_panels(panels),
                         pd.DataFrame(seeds, columns=["window", "asset_id", "seed"]))


# ------------------------------------------------------- derived outputs

def en_l2_ranking(std_coefs: Mapping[str, Sequence[float]] | pd.DataFrame, window: int = 0) -> pd.DataFrame:
    """Rank the 21 predictors by summed squared standardized EN coefficients.

    Accepts a mapping asset -> 22-vector (own lag first) or a frame with
    one column per predictor.  Ties keep the canonical predictor order.
    """
    if isinstance(std_coefs, pd.DataFrame):
        M = std_coefs[list(PREDICTORS)].to_numpy(dtype=float)
    else:
        M = np.array([np.asarray(v, dtype=float)[1:] for v in std_coefs.values()]).reshape(-1, len(PREDICTORS))
    score = (M ** 2).sum(axis=0)
    total = score.sum()
    share = score / total if total > 0 else np.zeros_like(score)
    order = sorted(range(len(PREDICTORS)), key=lambda j: -score[j])
    return pd.DataFrame({"window": window, "rank": np.arange(1, len(PREDICTORS) + 1),
                         "predictor": [PREDICTORS[j] for j in order], "l2_share": share[order]})


def l2_rankings(panel: ForecastPanel) -> pd.DataFrame:
    frames = [en_l2_ranking(g, int(w)) for w, g in panel.en_coefs.groupby("window", sort=True)]
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["window", "rank", "predictor", "l2_share"])


def negative_forecast_fraction(panel: ForecastPanel, month) -> float:
    """Share of assets whose winning forecast for ``month`` is negative; NaN if none."""
    key = str(np.datetime64(month, "M")) if not isinstance(month, str) else month
    f = panel.forecasts.loc[panel.forecasts["month"] == key, "forecast"].to_numpy(dtype=float)
    if len(f) == 0:
        return float("nan")
    return float(np.mean(f < 0))


def negative_fraction_series(panel: ForecastPanel) -> pd.DataFrame:
    g = panel.forecasts.assign(neg=panel.forecasts["forecast"].astype(float) < 0).groupby("month", sort=True)
    return pd.DataFrame({"month": list(g.groups), "negative_fraction": g["neg"].mean().to_numpy()})


# ---------------------------------------------------------------- files

def write_forecasts(panel: ForecastPanel, path: str | Path) -> None:
    write_rows(path, FORECAST_HEADER, panel.forecasts[FORECAST_HEADER].itertuples(index=False))


def load_forecasts(path: str | Path) -> ForecastPanel:
    header, rows = read_rows(path)
    if header != FORECAST_HEADER:
        raise ParseError(path, 1, f"expected header {','.join(FORECAST_HEADER)}")
    data = []
    for line, f in rows:
        if len(f) != len(header):
            raise ParseError(path, line, f"expected {len(header)} fields, got {len(f)}")
        if f[3] not in KINDS:
            raise ParseError(path, line, f"unknown model kind {f[3]!r}")
        try:
            np.datetime64(f[0], "M")
        except ValueError:
            raise ParseError(path, line, f"bad month {f[0]!r}") from None
        data.append([f[0], f[1], parse_float(path, line, f[2], "forecast"), f[3]]
                    + [parse_float(path, line, x, h) for x, h in zip(f[4:], header[4:])])
    panel = _empty_panel()
    panel.forecasts = pd.DataFrame(data, columns=FORECAST_HEADER)
    return panel


def write_window_outputs(result: RetrainResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    panel = result.combined
    write_forecasts(panel, out / "forecasts.csv")
    write_rows(out / "fig1_win_fractions.csv", ["window", "kind", "win_fraction"],
               panel.win_fractions.itertuples(index=False))
    write_rows(out / "fig3_negative_fraction.csv", ["month", "negative_fraction"],
               negative_fraction_series(panel).itertuples(index=False))
    write_rows(out / "table1_mse.csv", ["kind", "mean_mse", "median_mse", "mean_mae", "median_mae"],
               summarize_metrics(panel).itertuples(index=False))
    write_rows(out / "table3_l2_ranking.csv", ["window", "rank", "predictor", "l2_share"],
               l2_rankings(panel).itertuples(index=False))
    write_rows(out / "model_metrics.csv", ["window", "asset_id", "kind", "mse", "mae"],
               panel.metrics.itertuples(index=False))
    write_rows(out / "windows.csv", ["window", "first_month", "last_month"],
               [(w, a, b) for w, (a, b) in enumerate(result.windows)])
    write_rows(out / "seeds.csv", ["window", "asset_id", "seed"], result.seeds.itertuples(index=False))
