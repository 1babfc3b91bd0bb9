"""Figures for the report path: time posterior, hourly forecast bands, strategy comparison.

Rendering uses the non-interactive Agg backend and fixed styling so repeated
runs produce the same files.
"""

from __future__ import annotations

import datetime as dt
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .forecast import ForecastResult  # noqa: E402
from .metrics import EvalReport  # noqa: E402
from .selection import TimePosterior  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "cyclosel",
}
# strip the version/date stamp so identical figures give identical bytes
PNG_METADATA = {"Software": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def plot_time_posterior(
    posterior: TimePosterior,
    test_date: dt.date,
    path: str | Path,
    selected: Sequence[int] = (),
) -> Path:
    """Log score of every candidate day against its date, with selected days marked."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(8, 3.2))
        ax.plot(posterior.dates, posterior.log_scores, lw=0.6, color="0.35")
        if len(selected):
            idx = np.asarray(selected, dtype=int)
            ax.scatter([posterior.dates[i] for i in idx], posterior.log_scores[idx], s=6, color="tab:red", label="selected")
            ax.legend(loc="lower left", frameon=False)
        ax.set_title(f"time posterior for {test_date.isoformat()}")
        ax.set_xlabel("candidate date")
        ax.set_ylabel("log score")
        fig.tight_layout()
        return _save(fig, path)


def plot_forecast(result: ForecastResult, path: str | Path, label: str = "") -> Path:
    """Hourly predictive mean with its 2-sigma band and, if known, the realised load."""
    hours = np.arange(len(result.means))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.2))
        ax.fill_between(hours, result.interval_low, result.interval_high, color="tab:blue", alpha=0.2, label="2 sigma")
        ax.plot(hours, result.means, color="tab:blue", label="mean")
        if result.actual is not None:
            ax.plot(hours, result.actual, "k.", ms=4, label="actual")
        title = f"forecast for {result.target_date.isoformat()}"
        ax.set_title(f"{title} ({label})" if label else title)
        ax.set_xlabel("hour")
        ax.set_ylabel("load")
        ax.set_xlim(0, len(hours) - 1)
        ax.legend(loc="upper left", frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_metrics(reports: Sequence[EvalReport], path: str | Path) -> Path:
    """Side-by-side bars of MAPE and 2-sigma coverage per selection method."""
    names = [r.method for r in reports]
    x = np.arange(len(names))
    with plt.rc_context(STYLE):
        fig, (left, right) = plt.subplots(1, 2, figsize=(7, 3))
        left.bar(x, [r.mape for r in reports], color="tab:blue")
        left.set_ylabel("MAPE (%)")
        right.bar(x, [r.coverage_2sigma for r in reports], color="tab:green")
        right.axhline(95.45, color="k", lw=0.8, ls="--")
        right.set_ylabel("inside 2 sigma (%)")
        right.set_ylim(min(80.0, min((r.coverage_2sigma for r in reports), default=80.0) - 2), 100)
        for ax in (left, right):
            ax.set_xticks(x, names)
        fig.tight_layout()
        return _save(fig, path)
