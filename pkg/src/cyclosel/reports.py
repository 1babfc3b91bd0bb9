"""Report files: JSON summaries, tidy CSVs, the run manifest and (optionally) figures.

Everything except ``timing.json`` is a pure function of the resolved config
and the inputs, so repeated runs write byte-identical files.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import platform
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .forecast import CSV_HEADER, ForecastResult
from .metrics import EvalReport, render_table
from .pipeline import Evaluation, Prepared, RunConfig, file_sha256
from .selection import SelectionResult

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def write_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


def write_forecast_csv(path: Path, results: Iterable[ForecastResult]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for result in results:
            writer.writerows(result.csv_rows())
    return path


def write_scores_csv(
    path: Path,
    prep: Prepared,
    scores: np.ndarray,
    normalized: np.ndarray | None,
    selection: SelectionResult,
) -> Path:
    """One row per pool candidate: date, stamp, score, normalized posterior (MAP only), selected flag and rank."""
    rank = {i: r for r, i in enumerate(np.asarray(selection.indices, dtype=int).tolist(), 1)}
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "day_of_year", "score", "posterior", "selected", "rank"])
        for i, (date, stamp) in enumerate(zip(prep.selection_pool.dates, prep.selection_pool.days)):
            score = "" if not np.isfinite(scores[i]) else f"{scores[i]:.9g}"
            post = "" if normalized is None else f"{normalized[i]:.9g}"
            writer.writerow([date.isoformat(), int(stamp), score, post, int(i in rank), rank.get(i, "")])
    return path


def write_manifest(
    outdir: Path,
    command: str,
    config: RunConfig,
    checksums: dict[str, str],
    outputs: Sequence[Path],
    extra: dict | None = None,
) -> Path:
    """Resolved config, input checksums and checksums of the deterministic outputs."""
    payload = {
        "command": command,
        "version": __version__,
        "python": platform.python_version(),
        "config": config.to_dict(),
        "inputs": dict(sorted(checksums.items())),
        "outputs": {p.name: file_sha256(p) for p in sorted(outputs)},
    }
    if extra:
        payload.update(extra)
    return write_json(outdir / MANIFEST, payload)


def selection_payload(day: dt.date, results: Sequence[SelectionResult]) -> dict:
    return {"test_date": day.isoformat(), "selections": [r.to_dict(timing=False) for r in results]}


def evaluation_payload(prep: Prepared, evaluation: Evaluation) -> dict:
    return {
        "test_dates": [d.isoformat() for d in prep.test_dates],
        "reports": [r.to_dict(timing=False) for r in evaluation.reports],
        "variance_convention": "mean predictive variance over all test hour-points, squared load units",
    }


def timing_payload(evaluation: Evaluation) -> dict:
    return {
        "chain_fit_seconds": evaluation.fit_seconds,
        "methods": {
            r.method: {
                "selection_plus_training_seconds": r.selection_plus_training_seconds,
                "seconds_per_day": r.seconds_per_day,
            }
            for r in evaluation.reports
        },
    }


def write_evaluation(outdir: Path, prep: Prepared, evaluation: Evaluation) -> list[Path]:
    """Deterministic evaluation outputs plus ``timing.json``; returns the deterministic ones."""
    outdir.mkdir(parents=True, exist_ok=True)
    written = [
        write_json(outdir / "report.json", evaluation_payload(prep, evaluation)),
    ]
    table = outdir / "table.txt"
    table.write_text(render_table(evaluation.reports, timing=False), encoding="utf-8")
    written.append(table)
    for method, outcomes in evaluation.outcomes.items():
        written.append(write_forecast_csv(outdir / f"forecasts_{method}.csv", (o.forecast for o in outcomes)))
    write_json(outdir / "timing.json", timing_payload(evaluation))
    return written


def render_evaluation_plots(outdir: Path, evaluation: Evaluation, per_method_days: int = 1) -> list[Path]:
    """Metrics bar chart plus the forecast band of the first ``per_method_days`` test days of each method."""
    from . import plotting

    figs = outdir / "figures"
    out = [plotting.plot_metrics(evaluation.reports, figs / "metrics.png")]
    for method, outcomes in evaluation.outcomes.items():
        for o in outcomes[:per_method_days]:
            out.append(plotting.plot_forecast(o.forecast, figs / f"forecast_{method}_{o.forecast.target_date}.png", method))
    return out


def report_summary(reports: Sequence[EvalReport]) -> str:
    return render_table(list(reports), timing=True)
