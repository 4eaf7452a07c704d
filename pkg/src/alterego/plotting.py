"""Report figures rendered to PNG with the Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

KIND_ORDER = ("OLS", "EN", "RF", "NN", "Comb")
STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "svg.hashsalt": "alterego",
}


def _save(fig, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no Software/date metadata so reruns are byte-identical
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)


def _month_axis(months) -> np.ndarray:
    return pd.PeriodIndex(list(months), freq="M").to_timestamp().to_numpy()


def plot_win_fractions(df: pd.DataFrame, path: str | Path) -> None:
    """Grouped bars: share of assets each model wins, one group per window."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 3.2))
        windows = sorted(df["window"].unique())
        width = 0.8 / len(KIND_ORDER)
        x = np.arange(len(windows))
        for k, kind in enumerate(KIND_ORDER):
            sub = df[df["kind"] == kind].set_index("window")["win_fraction"]
            h = [100.0 * float(sub.get(w, 0.0)) for w in windows]
            ax.bar(x + (k - 2) * width, h, width, label=kind)
        ax.set_xticks(x, [str(w) for w in windows])
        ax.set_xlabel("rolling window")
        ax.set_ylabel("assets won (%)")
        ax.legend(ncol=len(KIND_ORDER), loc="upper center", bbox_to_anchor=(0.5, 1.15))
        _save(fig, path)


def plot_median_paths(df: pd.DataFrame, path: str | Path) -> None:
    """Compounded cross-sectional median returns, one line per series."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        for name, sub in df.groupby("series", sort=False):
            ls = "-" if name == "realized" else "--"
            ax.plot(_month_axis(sub["month"]), sub["index_value"], ls, lw=1.2, label=name)
        ax.axhline(1.0, color="0.6", lw=0.6)
        ax.set_ylabel("value of 1 invested")
        ax.legend()
        _save(fig, path)


def plot_negative_fraction(df: pd.DataFrame, path: str | Path) -> None:
    """Share of assets whose winning forecast is negative."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 3))
        ax.plot(_month_axis(df["month"]), 100.0 * df["negative_fraction"], color="k", lw=1.0)
        ax.set_ylim(0, 100)
        ax.set_ylabel("negative forecasts (%)")
        _save(fig, path)
