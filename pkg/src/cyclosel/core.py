"""Shared domain types: day samples, feature schemas, datasets and z-scoring."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

DAYS_PER_YEAR = 357
HOURS = 24
# stamp 1 is the 7th calendar day; stamps cover Jan 7 .. Dec 29 of a 365-day cycle
STAMP_OFFSET = 6
CALENDAR_DAYS = 365


def stamp_angle(day_of_year) -> np.ndarray:
    """Position of a day-of-year stamp on the annual cycle, in radians."""
    return 2.0 * np.pi * (np.asarray(day_of_year, dtype=float) - 1.0 + STAMP_OFFSET) / CALENDAR_DAYS


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered named blocks making up a feature vector."""

    name: str
    blocks: tuple[tuple[str, int], ...]

    @property
    def total_dim(self) -> int:
        return sum(size for _, size in self.blocks)

    @property
    def block_names(self) -> list[str]:
        return [name for name, _ in self.blocks]

    def block_slice(self, name: str) -> slice:
        start = 0
        for block, size in self.blocks:
            if block == name:
                return slice(start, start + size)
            start += size
        raise KeyError(f"schema {self.name!r} has no block {name!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "blocks": [[b, s] for b, s in self.blocks]}

    @classmethod
    def from_dict(cls, payload: dict) -> "FeatureSchema":
        return cls(payload["name"], tuple((str(b), int(s)) for b, s in payload["blocks"]))


SELECTION_SCHEMA = FeatureSchema(
    "selection",
    (("temp", 24), ("temp_next", 24), ("load", 24)),
)

PREDICTOR_SCHEMA = FeatureSchema(
    "predictor",
    (
        ("timestamp", 1),
        ("temp_week", 144),
        ("load_week", 144),
        ("dew", 24),
        ("dew_next", 24),
        ("temp", 24),
        ("temp_next", 24),
        ("load", 24),
    ),
)


def generic_schema(dim: int, name: str = "generic") -> FeatureSchema:
    """Single-block schema, handy for synthetic experiments."""
    return FeatureSchema(name, (("x", dim),))


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise DataError(f"{name} must be a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DaySample:
    """Feature vector of one calendar day, its day-of-year stamp and optional next-day target."""

    date: dt.date
    day_of_year: int
    features: np.ndarray
    target: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not 1 <= int(self.day_of_year) <= DAYS_PER_YEAR:
            raise DataError(f"day_of_year {self.day_of_year} outside [1, {DAYS_PER_YEAR}] ({self.date})")
        object.__setattr__(self, "day_of_year", int(self.day_of_year))
        object.__setattr__(self, "features", _frozen_array(self.features, f"features of {self.date}"))
        if self.target is not None:
            object.__setattr__(self, "target", _frozen_array(self.target, f"target of {self.date}"))

    @property
    def sample_id(self) -> str:
        return self.date.isoformat()


@dataclass(frozen=True)
class Standardization:
    """Per-dimension z-score statistics plus the matching statistics of the day-of-year stamp."""

    mean: np.ndarray
    std: np.ndarray
    time_mean: float
    time_std: float

    def __post_init__(self) -> None:
        if self.mean.shape != self.std.shape:
            raise DataError("standardization mean/std shapes differ")
        if np.any(self.std <= 0):
            bad = int(np.flatnonzero(self.std <= 0)[0])
            raise DataError(f"standardization std must be > 0 (dimension {bad})")
        if self.time_std <= 0:
            raise DataError("time_std must be > 0")

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=float) - self.mean) / self.std

    def invert(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=float) * self.std + self.mean

    def time(self, day_of_year) -> np.ndarray:
        return (np.asarray(day_of_year, dtype=float) - self.time_mean) / self.time_std

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "time_mean": self.time_mean,
            "time_std": self.time_std,
        }


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of samples sharing one schema."""

    samples: tuple[DaySample, ...]
    schema: FeatureSchema
    standardization: Standardization | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        dim = self.schema.total_dim
        for s in self.samples:
            if s.features.shape[0] != dim:
                raise DataError(
                    f"sample {s.date} has {s.features.shape[0]} features, schema {self.schema.name!r} needs {dim}"
                )
        if self.standardization is not None and self.standardization.mean.shape[0] != dim:
            raise DataError("standardization dimension does not match schema")

    def __len__(self) -> int:
        return len(self.samples)

    @cached_property
    def features(self) -> np.ndarray:
        if not self.samples:
            return np.empty((0, self.schema.total_dim))
        out = np.vstack([s.features for s in self.samples])
        out.setflags(write=False)
        return out

    @cached_property
    def days(self) -> np.ndarray:
        return np.array([s.day_of_year for s in self.samples], dtype=int)

    @cached_property
    def dates(self) -> list[dt.date]:
        return [s.date for s in self.samples]

    @cached_property
    def ids(self) -> list[str]:
        return [s.sample_id for s in self.samples]

    @cached_property
    def targets(self) -> np.ndarray:
        missing = [s.date.isoformat() for s in self.samples if s.target is None]
        if missing:
            raise DataError(f"samples without targets: {', '.join(missing[:10])}")
        return np.vstack([s.target for s in self.samples])

    @property
    def has_targets(self) -> bool:
        return all(s.target is not None for s in self.samples)

    def standardized_times(self) -> np.ndarray:
        if self.standardization is None:
            raise DataError("dataset is not standardized")
        return self.standardization.time(self.days)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return replace(self, samples=tuple(self.samples[i] for i in indices))

    def filter_years(self, years: Iterable[int]) -> "Dataset":
        keep = set(years)
        return replace(self, samples=tuple(s for s in self.samples if s.date.year in keep))

    def by_date(self) -> dict[dt.date, DaySample]:
        return {s.date: s for s in self.samples}

    def with_features(self, features: np.ndarray, standardization: Standardization | None) -> "Dataset":
        samples = tuple(
            replace(s, features=row) for s, row in zip(self.samples, np.asarray(features, dtype=float))
        )
        return Dataset(samples, self.schema, standardization)


def fit_standardization(features: np.ndarray, days) -> Standardization:
    """Population mean/std per column; raises on a zero-variance column."""
    x = np.asarray(features, dtype=float)
    if x.shape[0] == 0:
        raise DataError("cannot standardize an empty dataset")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    # relative guard: a column whose spread is at rounding level is constant
    flat = std <= 1e-12 * np.maximum(np.abs(mean), 1.0)
    if np.any(flat):
        raise DataError(f"zero-variance feature dimension {int(np.flatnonzero(flat)[0])}")
    days = np.asarray(days, dtype=float)
    return Standardization(mean, std, float(days.mean()), float(days.std()) or 1.0)


def standardize(dataset: Dataset) -> Dataset:
    """Z-score every feature dimension with population statistics of ``dataset``.

    If ``dataset`` already carries statistics they are composed, so the
    stored statistics always map back to the raw features.
    """
    if len(dataset) == 0:
        raise DataError("cannot standardize an empty dataset")
    stats = fit_standardization(dataset.features, dataset.days)
    z = stats.apply(dataset.features)
    prev = dataset.standardization
    if prev is not None:
        stats = Standardization(prev.mean + prev.std * stats.mean, prev.std * stats.std, prev.time_mean, prev.time_std)
    return dataset.with_features(z, stats)


def apply_standardization(data: Dataset | DaySample, stats: Standardization):
    """Z-score test data with statistics learned on a training pool."""
    if isinstance(data, DaySample):
        return replace(data, features=stats.apply(data.features))
    if data.standardization is not None:
        raise DataError("dataset is already standardized")
    return data.with_features(stats.apply(data.features), stats)


def destandardize(dataset: Dataset) -> Dataset:
    if dataset.standardization is None:
        return dataset
    return dataset.with_features(dataset.standardization.invert(dataset.features), None)


def make_dataset(
    features: np.ndarray,
    days: Sequence[int],
    dates: Sequence[dt.date] | None = None,
    targets: np.ndarray | None = None,
    schema: FeatureSchema | None = None,
) -> Dataset:
    """Build a dataset from plain arrays; dates default to consecutive 357-day years from 2011."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    n = features.shape[0]
    if dates is None:
        dates = [dt.date(2011 + i // DAYS_PER_YEAR, 1, 7) + dt.timedelta(days=i % DAYS_PER_YEAR) for i in range(n)]
    schema = schema or generic_schema(features.shape[1])
    samples = tuple(
        DaySample(dates[i], int(days[i]), features[i], None if targets is None else targets[i]) for i in range(n)
    )
    return Dataset(samples, schema)
