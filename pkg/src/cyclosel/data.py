"""Hourly CSV ingestion, day-sample assembly and synthetic cyclostationary data."""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    DAYS_PER_YEAR,
    HOURS,
    PREDICTOR_SCHEMA,
    SELECTION_SCHEMA,
    Dataset,
    DaySample,
    FeatureSchema,
    Standardization,
)
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

FIELDS = ("load", "temperature", "dew_point")
DEFAULT_COLUMNS = {"date": "date", "hour": "hour", "load": "load", "temperature": "temperature", "dew_point": "dew_point"}


@dataclass(frozen=True, slots=True)
class HourlyRecord:
    date: dt.date
    hour: int
    load: float | None = None
    temperature: float | None = None
    dew_point: float | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.hour <= 23:
            raise DataError(f"hour {self.hour} outside [0, 23] on {self.date}")


# ---------------------------------------------------------------- ingestion


def read_key_values(path: str | Path) -> dict[str, str]:
    """Parse a ``key = value`` file; ``#`` starts a comment, ``[section]`` lines are ignored."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line or (line.startswith("[") and line.endswith("]")):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip().strip('"').strip("'")
    return out


def load_column_map(path: str | Path | None) -> dict[str, str]:
    columns = dict(DEFAULT_COLUMNS)
    if path is None:
        return columns
    for key, value in read_key_values(path).items():
        if key not in DEFAULT_COLUMNS:
            raise ConfigError(f"unknown canonical column {key!r} in {path}")
        columns[key] = value
    return columns


def _parse_value(text: str | None, where: str, name: str) -> float | None:
    if text is None or text.strip() == "" or text.strip().lower() in ("na", "nan", "null"):
        return None
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{where}: cannot parse {name} value {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{where}: non-finite {name}")
    return value


def ingest(paths: Sequence[str | Path], columns: dict[str, str] | None = None) -> list[HourlyRecord]:
    """Parse hourly CSV files into sorted, de-duplicated records.

    Files may carry any subset of the value columns; records for the same
    ``(date, hour)`` are merged field by field. A repeated value is noted,
    a conflicting one is logged as a warning and the last file wins.
    """
    columns = columns or dict(DEFAULT_COLUMNS)
    merged: dict[tuple[dt.date, int], dict[str, float | None]] = {}
    for path in paths:
        path = Path(path)
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                continue
            header = [h.strip() for h in reader.fieldnames]
            reader.fieldnames = header
            for key in ("date", "hour"):
                if columns[key] not in header:
                    raise DataError(f"{path}: missing column {columns[key]!r}")
            present = [f for f in FIELDS if columns[f] in header]
            for lineno, row in enumerate(reader, 2):
                where = f"{path}:{lineno}"
                try:
                    date = dt.date.fromisoformat(row[columns["date"]].strip()[:10])
                    hour = int(float(row[columns["hour"]]))
                except (ValueError, AttributeError, TypeError):
                    raise DataError(f"{where}: cannot parse date/hour") from None
                if not 0 <= hour <= 23:
                    raise DataError(f"{where}: hour {hour} outside [0, 23]")
                slot = merged.setdefault((date, hour), {})
                repeated = []
                for name in present:
                    value = _parse_value(row.get(columns[name]), where, name)
                    if value is None:
                        continue
                    if name in slot:
                        if slot[name] == value:
                            repeated.append(name)
                        else:
                            log.warning(
                                "%s: conflicting %s for %s hour %d (%s -> %s), keeping last",
                                where, name, date, hour, slot[name], value,
                            )
                    slot[name] = value
                if repeated:
                    log.info("%s: duplicate %s for %s hour %d", where, "/".join(repeated), date, hour)

    records = [HourlyRecord(d, h, **vals) for (d, h), vals in sorted(merged.items())]
    for gap in find_gaps(records):
        log.warning("gap in hourly records: %s", gap)
    return records


def find_gaps(records: Sequence[HourlyRecord]) -> list[str]:
    """Human-readable list of missing hourly stretches between the first and last record."""
    if not records:
        return []
    base = records[0].date.toordinal()
    slots = sorted({(r.date.toordinal() - base) * HOURS + r.hour for r in records})

    def label(slot: int) -> str:
        return f"{dt.date.fromordinal(base + slot // HOURS)} h{slot % HOURS}"

    return [
        f"{label(prev + 1)} .. {label(cur - 1)}" for prev, cur in zip(slots, slots[1:]) if cur - prev > 1
    ]


def write_records_csv(path: str | Path, records: Iterable[HourlyRecord], fields: Sequence[str] = FIELDS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "hour", *fields])
        for r in records:
            writer.writerow([r.date.isoformat(), r.hour, *(_fmt(getattr(r, f)) for f in fields)])


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.4f}"


# ---------------------------------------------------------------- assembly


@dataclass(frozen=True)
class EligibilityRule:
    """Which calendar days become samples and how they are stamped.

    The first ``skip_head`` days lack a full lookback, the last ``skip_tail``
    days lack a next-day target, and Feb 29 is dropped so that every year
    yields the same number of stamps and equal calendar dates share a stamp.
    """

    skip_head: int = 6
    skip_tail: int = 2
    skip_leap_day: bool = True

    def eligible_days(self, year: int) -> list[dt.date]:
        first = dt.date(year, 1, 1)
        n = (dt.date(year + 1, 1, 1) - first).days
        days = [first + dt.timedelta(days=i) for i in range(self.skip_head, n - self.skip_tail)]
        if self.skip_leap_day:
            days = [d for d in days if not (d.month == 2 and d.day == 29)]
        return days


DEFAULT_RULE = EligibilityRule()


def _hourly_grid(records: Iterable[HourlyRecord]) -> dict[dt.date, np.ndarray]:
    grid: dict[dt.date, np.ndarray] = {}
    for r in records:
        arr = grid.get(r.date)
        if arr is None:
            arr = grid[r.date] = np.full((3, HOURS), np.nan)
        for j, name in enumerate(FIELDS):
            value = getattr(r, name)
            if value is not None:
                arr[j, r.hour] = value
    return grid


def _day_block(grid, day: dt.date, field_index: int) -> np.ndarray | None:
    arr = grid.get(day)
    if arr is None:
        return None
    block = arr[field_index]
    if np.isnan(block).any():
        return None
    return block


def _window(grid, day: dt.date, offsets: Iterable[int], field_index: int) -> np.ndarray | None:
    parts = []
    for off in offsets:
        block = _day_block(grid, day + dt.timedelta(days=off), field_index)
        if block is None:
            return None
        parts.append(block)
    return np.concatenate(parts)


def assemble(
    records: Iterable[HourlyRecord],
    schema: FeatureSchema,
    years: Iterable[int] | None = None,
    rule: EligibilityRule = DEFAULT_RULE,
) -> Dataset:
    """One day sample per eligible day whose windows are complete.

    Selection samples hold ``[temp_i, temp_{i+1}, load_i]``; predictor samples
    add the stamp, the previous six days of temperature and load, and the
    dew point of days ``i`` and ``i+1``. The target is ``load_{i+1}``.
    """
    if schema.name not in (SELECTION_SCHEMA.name, PREDICTOR_SCHEMA.name):
        raise DataError(f"assemble supports the selection and predictor schemas, not {schema.name!r}")
    grid = _hourly_grid(records)
    if years is None:
        years = sorted({d.year for d in grid})
    load, temp, dew = 0, 1, 2
    samples = []
    skipped = 0
    for year in sorted(set(years)):
        for stamp, day in enumerate(rule.eligible_days(year), 1):
            if stamp > DAYS_PER_YEAR:
                raise DataError(f"eligibility rule yields more than {DAYS_PER_YEAR} days in {year}")
            target = _day_block(grid, day + dt.timedelta(days=1), load)
            if schema.name == SELECTION_SCHEMA.name:
                blocks = [_window(grid, day, [0], temp), _window(grid, day, [1], temp), _window(grid, day, [0], load)]
            else:
                blocks = [
                    np.array([float(stamp)]),
                    _window(grid, day, range(-6, 0), temp),
                    _window(grid, day, range(-6, 0), load),
                    _window(grid, day, [0], dew),
                    _window(grid, day, [1], dew),
                    _window(grid, day, [0], temp),
                    _window(grid, day, [1], temp),
                    _window(grid, day, [0], load),
                ]
                if target is None:
                    blocks.append(None)
            if any(b is None for b in blocks):
                if day in grid or (day - dt.timedelta(days=1)) in grid:
                    log.info("skipping %s: incomplete %s window", day, schema.name)
                skipped += 1
                continue
            samples.append(DaySample(day, stamp, np.concatenate(blocks), target))
    if not samples:
        raise DataError(f"no eligible days for the {schema.name} schema")
    if skipped:
        log.info("%s: %d samples assembled, %d days skipped", schema.name, len(samples), skipped)
    return Dataset(tuple(samples), schema)


# ---------------------------------------------------------------- dataset cache


def save_dataset(path: str | Path, dataset: Dataset) -> None:
    """Write a dataset to ``.npz`` (features, stamps, dates, targets, schema descriptor)."""
    meta = {"schema": dataset.schema.to_dict(), "has_targets": dataset.has_targets}
    arrays = {
        "features": dataset.features,
        "days": dataset.days,
        "dates": np.array([d.toordinal() for d in dataset.dates], dtype=np.int64),
        "meta": np.array(json.dumps(meta)),
    }
    if dataset.has_targets and len(dataset):
        arrays["targets"] = dataset.targets
    if dataset.standardization is not None:
        s = dataset.standardization
        arrays.update(std_mean=s.mean, std_std=s.std, std_time=np.array([s.time_mean, s.time_std]))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_dataset(path: str | Path) -> Dataset:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        schema = FeatureSchema.from_dict(meta["schema"])
        targets = z["targets"] if "targets" in z else None
        stats = None
        if "std_mean" in z:
            stats = Standardization(z["std_mean"], z["std_std"], float(z["std_time"][0]), float(z["std_time"][1]))
        samples = tuple(
            DaySample(
                dt.date.fromordinal(int(o)),
                int(t),
                z["features"][i],
                None if targets is None else targets[i],
            )
            for i, (o, t) in enumerate(zip(z["dates"], z["days"]))
        )
    return Dataset(samples, schema, stats)


# ---------------------------------------------------------------- synthetic data


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic hourly load/weather generator settings (loads in MW, temperatures in degrees F)."""

    n_years: int = 8
    seasonal_amplitude: float = 300.0
    weekly_amplitude: float = 150.0
    noise_std: float = 40.0
    temp_load_coupling: float = 20.0
    seed: int = 0
    start_year: int = 2011
    base_load: float = 2600.0
    daily_amplitude: float = 350.0
    temp_mean: float = 52.0
    temp_amplitude: float = 22.0
    diurnal_temp_amplitude: float = 7.0
    weather_noise_std: float = 5.0
    seasonal_shape: str = "sine"
    coupling_mode: str = "linear"
    load_peak_day: float = 355.0

    def __post_init__(self) -> None:
        if self.n_years < 2:
            raise ConfigError(f"n_years must be >= 2, got {self.n_years}")
        if self.noise_std < 0 or self.weather_noise_std < 0:
            raise ConfigError("noise levels must be >= 0")
        if self.seasonal_shape not in ("sine", "ramp"):
            raise ConfigError(f"seasonal_shape must be 'sine' or 'ramp', got {self.seasonal_shape!r}")
        if self.coupling_mode not in ("linear", "regime"):
            raise ConfigError(f"coupling_mode must be 'linear' or 'regime', got {self.coupling_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)


WEEKLY_PATTERN = np.array([0.35, 0.45, 0.45, 0.4, 0.25, -0.8, -1.1])  # Monday first
HEATING_BALANCE_F = 55.0
COOLING_BALANCE_F = 65.0
HEATING_RATIO = 0.6


def season_phase(dates: Sequence[dt.date]) -> np.ndarray:
    """Fraction of the year in [0, 1), keyed on month/day so that every year repeats exactly."""
    out = np.empty(len(dates))
    for i, d in enumerate(dates):
        if d.month == 2 and d.day == 29:
            doy = 59.5
        else:
            doy = dt.date(2011, d.month, d.day).timetuple().tm_yday
        out[i] = (doy - 1.0) / 365.0
    return out


COLDEST_DAY = 20.0


def seasonal_profile(phase: np.ndarray, shape: str, trough_day: float = COLDEST_DAY) -> np.ndarray:
    """Annual shape in [-1, 1]: a cosine with its minimum on calendar day ``trough_day``, or a yearly ramp."""
    if shape == "ramp":
        return 2.0 * phase - 1.0
    return -np.cos(2.0 * np.pi * (phase - (trough_day - 1.0) / 365.0))


def temperature_response(temp: np.ndarray, mode: str, mean: float) -> np.ndarray:
    """Load response (per unit coupling) to temperature."""
    if mode == "regime":
        return np.maximum(temp - COOLING_BALANCE_F, 0.0) + HEATING_RATIO * np.maximum(HEATING_BALANCE_F - temp, 0.0)
    return temp - mean


def synthetic_components(config: SynthConfig) -> dict[str, np.ndarray]:
    """Noise-free ground-truth components on the ``days x 24`` grid.

    Keys: ``dates``, ``season`` (temperature shape per day),
    ``load_season`` (shape of the load's own seasonal term, peaking on
    ``load_peak_day``), ``weekly`` (per day, MW), ``daily`` (per hour, MW),
    ``diurnal`` (per hour, F).
    """
    first = dt.date(config.start_year, 1, 1)
    n_days = (dt.date(config.start_year + config.n_years, 1, 1) - first).days
    dates = [first + dt.timedelta(days=i) for i in range(n_days)]
    hours = np.arange(HOURS)
    phase = season_phase(dates)
    return {
        "dates": np.array(dates, dtype=object),
        "season": seasonal_profile(phase, config.seasonal_shape),
        "load_season": -seasonal_profile(phase, config.seasonal_shape, config.load_peak_day),
        "weekly": config.weekly_amplitude * WEEKLY_PATTERN[[d.weekday() for d in dates]],
        "daily": config.daily_amplitude * -np.cos(2.0 * np.pi * (hours - 6.0) / HOURS),
        "diurnal": config.diurnal_temp_amplitude * -np.cos(2.0 * np.pi * (hours - 3.0) / HOURS),
    }


def synthetic_arrays(config: SynthConfig) -> tuple[list[dt.date], np.ndarray, np.ndarray, np.ndarray]:
    """Dates plus ``days x 24`` arrays of load, temperature and dew point."""
    comp = synthetic_components(config)
    rng = np.random.default_rng(config.seed)
    n = len(comp["dates"])
    season = comp["season"][:, None]

    # weather anomaly: AR(1) day level with stationary std weather_noise_std plus hourly jitter
    rho = 0.7
    innov = rng.standard_normal(n) * config.weather_noise_std * math.sqrt(1 - rho * rho)
    anomaly = np.empty(n)
    level = rng.standard_normal() * config.weather_noise_std
    for i in range(n):
        level = rho * level + innov[i]
        anomaly[i] = level
    temp = (
        config.temp_mean
        + config.temp_amplitude * season
        + comp["diurnal"][None, :]
        + anomaly[:, None]
        + 0.2 * config.weather_noise_std * rng.standard_normal((n, HOURS))
    )
    dew = temp - (12.0 - 4.0 * season) + 0.3 * config.weather_noise_std * rng.standard_normal((n, HOURS))
    load = (
        config.base_load
        + config.seasonal_amplitude * comp["load_season"][:, None]
        + comp["weekly"][:, None]
        + comp["daily"][None, :]
        + config.temp_load_coupling * temperature_response(temp, config.coupling_mode, config.temp_mean)
        + config.noise_std * rng.standard_normal((n, HOURS))
    )
    return list(comp["dates"]), load, temp, dew


def generate_synthetic(config: SynthConfig) -> list[HourlyRecord]:
    """Deterministic synthetic hourly records for ``config.n_years`` calendar years."""
    dates, load, temp, dew = synthetic_arrays(config)
    return [
        HourlyRecord(d, h, float(load[i, h]), float(temp[i, h]), float(dew[i, h]))
        for i, d in enumerate(dates)
        for h in range(HOURS)
    ]
