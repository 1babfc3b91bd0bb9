"""Forecast accuracy and interval metrics, and the strategy comparison table."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError


def _pair(actuals, predictions) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actuals, dtype=float)
    p = np.asarray(predictions, dtype=float)
    if a.shape != p.shape:
        raise DataError(f"shape mismatch: actuals {a.shape} vs predictions {p.shape}")
    if a.size == 0:
        raise DataError("metrics need at least one point")
    return a, p


def mape(actuals, predictions) -> float:
    """Mean absolute percentage error over all days and hours, in percent."""
    a, p = _pair(actuals, predictions)
    if np.any(a <= 0):
        raise DataError("MAPE needs strictly positive actual values")
    return float(100.0 * np.mean(np.abs(a - p) / a))


def r2(actuals, predictions) -> float:
    """Coefficient of determination pooled over every day-hour point."""
    a, p = _pair(actuals, predictions)
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0:
        raise DataError("R^2 undefined for constant actuals")
    return 1.0 - float(np.sum((a - p) ** 2)) / ss_tot


def coverage(actuals, lows, highs) -> float:
    """Percentage of points with ``low <= actual <= high``."""
    a = np.asarray(actuals, dtype=float)
    lo = np.asarray(lows, dtype=float)
    hi = np.asarray(highs, dtype=float)
    if not (a.shape == lo.shape == hi.shape):
        raise DataError(f"shape mismatch: {a.shape}, {lo.shape}, {hi.shape}")
    if a.size == 0:
        raise DataError("coverage needs at least one point")
    if np.any(lo > hi):
        raise DataError("interval lows must not exceed highs")
    return float(100.0 * np.mean((lo <= a) & (a <= hi)))


@dataclass
class EvalReport:
    method: str
    mape: float
    r2: float
    mean_pred_variance: float
    coverage_2sigma: float
    n_test_days: int
    selection_plus_training_seconds: float = 0.0

    def __post_init__(self) -> None:
        if self.mape < 0 or not 0 <= self.coverage_2sigma <= 100 or self.r2 > 1 + 1e-12:
            raise DataError(f"inconsistent report values for {self.method}")

    @property
    def seconds_per_day(self) -> float:
        return self.selection_plus_training_seconds / self.n_test_days if self.n_test_days else 0.0

    def to_dict(self, timing: bool = True) -> dict:
        out = asdict(self)
        for key in ("mape", "r2", "mean_pred_variance", "coverage_2sigma"):
            out[key] = round(out[key], 6)
        if timing:
            out["seconds_per_day"] = self.seconds_per_day
        else:
            del out["selection_plus_training_seconds"]
        return out


def evaluate_forecasts(method: str, actuals, means, variances, lows, highs, seconds: float = 0.0) -> EvalReport:
    """Aggregate ``n_days x 24`` forecast arrays into one report.

    ``mean_pred_variance`` is the mean predictive variance over all day-hour
    points, in squared target units.
    """
    a = np.asarray(actuals, dtype=float)
    return EvalReport(
        method=method,
        mape=mape(a, means),
        r2=r2(a, means),
        mean_pred_variance=float(np.mean(variances)),
        coverage_2sigma=coverage(a, lows, highs),
        n_test_days=int(a.shape[0]),
        selection_plus_training_seconds=float(seconds),
    )


def render_table(reports: list[EvalReport], timing: bool = True) -> str:
    """Aligned text table: method, MAPE, R2, mean predicted variance, 2-sigma coverage, time."""
    header = ["Method", "MAPE (%)", "R2", "var_pred", "in 2sigma (%)", "days"]
    if timing:
        header += ["sel+train (s)", "per day (s)"]
    rows = []
    for r in reports:
        row = [r.method, f"{r.mape:.3f}", f"{r.r2:.4f}", f"{r.mean_pred_variance:.1f}", f"{r.coverage_2sigma:.2f}", str(r.n_test_days)]
        if timing:
            row += [f"{r.selection_plus_training_seconds:.2f}", f"{r.seconds_per_day:.3f}"]
        rows.append(row)
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) if i else h.ljust(w) for i, (h, w) in enumerate(zip(header, widths)))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths))))
    return "\n".join(lines) + "\n"
