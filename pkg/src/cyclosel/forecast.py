"""Day-ahead hourly forecaster: 24 independent Bayesian linear regressors."""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass

import numpy as np

from . import bayes
from .core import HOURS, Dataset, DaySample, FeatureSchema, Standardization, fit_standardization
from .errors import DataError

log = logging.getLogger(__name__)

INTERVAL_SIGMAS = 2.0
# below this many samples per weight the plug-in noise level is unreliable
MIN_SAMPLES_PER_WEIGHT = 1.5


@dataclass(frozen=True)
class HourlyForecaster:
    hour_models: tuple[bayes.LinearPosterior, ...]
    schema: FeatureSchema
    standardization: Standardization
    target_mean: np.ndarray
    target_std: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.schema.total_dim


@dataclass(frozen=True)
class ForecastResult:
    target_date: dt.date
    means: np.ndarray
    variances: np.ndarray
    interval_low: np.ndarray
    interval_high: np.ndarray
    actual: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {
            "target_date": self.target_date.isoformat(),
            "means": _round(self.means),
            "variances": _round(self.variances),
            "interval_low": _round(self.interval_low),
            "interval_high": _round(self.interval_high),
        }
        if self.actual is not None:
            out["actual"] = _round(self.actual)
        return out

    def csv_rows(self) -> list[list[str]]:
        rows = []
        for h in range(len(self.means)):
            actual = "" if self.actual is None else f"{self.actual[h]:.6f}"
            rows.append(
                [
                    self.target_date.isoformat(),
                    str(h),
                    f"{self.means[h]:.6f}",
                    f"{self.variances[h]:.6f}",
                    f"{self.interval_low[h]:.6f}",
                    f"{self.interval_high[h]:.6f}",
                    actual,
                ]
            )
        return rows


CSV_HEADER = ["date", "hour", "mean", "var", "lo", "hi", "actual"]


def _round(values: np.ndarray) -> list[float]:
    return [round(float(v), 6) for v in values]


def _design(stats: Standardization, features: np.ndarray) -> np.ndarray:
    z = stats.apply(features)
    return np.column_stack([z, np.ones(z.shape[0])])


def train(selected: Dataset, noise_floor: float = bayes.NOISE_FLOOR, noise_rule: str = "dof") -> HourlyForecaster:
    """Fit one regressor per target hour on z-scored features plus an intercept column.

    Targets are z-scored per hour; each hour's noise variance is the residual
    plug-in estimate.
    """
    if selected.standardization is not None:
        raise DataError("train expects raw (unstandardized) samples")
    missing = [s.date.isoformat() for s in selected.samples if s.target is None]
    if missing:
        raise DataError(f"samples without targets: {', '.join(missing)}")
    if len(selected) < 2:
        raise DataError(f"need at least 2 training samples, got {len(selected)}")

    stats = fit_standardization(selected.features, selected.days)
    design = _design(stats, selected.features)
    y = selected.targets
    if y.shape[1] != HOURS:
        raise DataError(f"targets must have {HOURS} hours, got {y.shape[1]}")
    y_mean = y.mean(axis=0)
    y_std = y.std(axis=0)
    y_std = np.where(y_std > 1e-12 * np.maximum(np.abs(y_mean), 1.0), y_std, 1.0)
    ys = (y - y_mean) / y_std

    n = design.shape[0]
    if n < MIN_SAMPLES_PER_WEIGHT * design.shape[1]:
        log.debug(
            "%d training samples for %d weights per hour: noise estimates and intervals are unreliable",
            n, design.shape[1],
        )
    gram = design.T @ design
    cross = design.T @ ys
    eig = bayes.gram_eigen(gram)
    models = tuple(
        bayes.plugin_noise_fit(
            gram, cross[:, h], float(ys[:, h] @ ys[:, h]), n, floor=noise_floor, rule=noise_rule, eig=eig
        )
        for h in range(HOURS)
    )
    return HourlyForecaster(models, selected.schema, stats, y_mean, y_std)


def forecast(model: HourlyForecaster, predictor: DaySample) -> ForecastResult:
    """Predictive mean/variance per hour (noise included) in target units, with a 2-sigma band."""
    if predictor.features.shape[0] != model.input_dim:
        raise DataError(f"predictor has {predictor.features.shape[0]} features, forecaster expects {model.input_dim}")
    x = _design(model.standardization, predictor.features[np.newaxis, :])[0]
    means = np.empty(HOURS)
    variances = np.empty(HOURS)
    for h, post in enumerate(model.hour_models):
        means[h], variances[h] = bayes.predict(post, x, include_noise=True)
    means = model.target_mean + model.target_std * means
    variances = model.target_std**2 * variances
    half = INTERVAL_SIGMAS * np.sqrt(variances)
    return ForecastResult(
        predictor.date + dt.timedelta(days=1),
        means,
        variances,
        means - half,
        means + half,
        None if predictor.target is None else np.array(predictor.target),
    )
