"""Select -> train -> forecast loop over test days, shared by the CLI and the acceptance suite."""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import data as data_mod
from . import forecast as fc
from . import metrics
from . import selection as sel
from .core import PREDICTOR_SCHEMA, SELECTION_SCHEMA, Dataset, DaySample, apply_standardization, standardize
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

DATA_DIR_ENV = "CYCLOSEL_DATA_DIR"
# the random-draw selection mode; available on request, never part of the defaults
DRAW_METHOD = "MAP-DRAW"
ALL_METHODS = (*sel.METHODS, DRAW_METHOD)


@dataclass
class RunConfig:
    data_paths: list[str] = field(default_factory=list)
    columns: str | None = None
    synth: data_mod.SynthConfig | None = None
    train_years: list[int] = field(default_factory=lambda: list(range(2011, 2018)))
    test_year: int = 2018
    methods: list[str] = field(default_factory=lambda: list(sel.METHODS))
    k: int = 714
    ordering: list[int] | str = "natural"
    time_encoding: str = "cyclic"
    noise_rule: str = "dof"
    seed: int = 0
    output: str = "out"
    workers: int = 1
    test_start: dt.date | None = None
    test_end: dt.date | None = None
    test_stride: int = 1
    cache: str | None = None
    plots: bool = True

    def __post_init__(self) -> None:
        if self.test_year in self.train_years:
            raise ConfigError(f"test year {self.test_year} is also a training year")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        bad = [m for m in self.methods if m not in ALL_METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown selection method(s) {bad}; choose from {', '.join(ALL_METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError(f"duplicate selection methods in {self.methods}")
        if self.workers < 1 or self.test_stride < 1:
            raise ConfigError("workers and test_stride must be >= 1")
        if self.time_encoding not in sel.TIME_ENCODINGS:
            raise ConfigError(f"time_encoding must be one of {sel.TIME_ENCODINGS}")
        if self.noise_rule not in ("mse", "dof"):
            raise ConfigError("noise_rule must be 'mse' or 'dof'")
        if not self.data_paths and self.synth is None:
            raise ConfigError(f"no input data: pass --data, set {DATA_DIR_ENV}, or use --synth")

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.synth is not None:
            out["synth"] = self.synth.to_dict()
        for key in ("test_start", "test_end"):
            if out[key] is not None:
                out[key] = out[key].isoformat()
        return out


# ---------------------------------------------------------------- config parsing


def _int_list(text: str) -> list[int]:
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


SYNTH_PREFIX = "synth_"


def build_config(values: dict[str, object]) -> RunConfig:
    """Resolve a flat ``key -> value`` mapping (config file merged with CLI flags) into a RunConfig."""
    values = {k: v for k, v in values.items() if v is not None}
    try:
        synth = None
        synth_keys = {f.name for f in fields(data_mod.SynthConfig)}
        synth_values = {}
        for key, value in values.items():
            if key.startswith(SYNTH_PREFIX) and key[len(SYNTH_PREFIX):] in synth_keys:
                name = key[len(SYNTH_PREFIX):]
                kind = type(getattr(data_mod.SynthConfig, name))
                synth_values[name] = kind(float(value)) if kind is int else kind(value)
        if _truthy(values.get("synth", False)) or synth_values:
            synth = data_mod.SynthConfig(**synth_values)

        paths: list[str] = []
        data = values.get("data")
        if data:
            paths = [p.strip() for p in str(data).split(",") if p.strip()] if isinstance(data, str) else list(data)
        elif synth is None and os.environ.get(DATA_DIR_ENV):
            paths = sorted(str(p) for p in Path(os.environ[DATA_DIR_ENV]).glob("*.csv"))
        expanded = []
        for p in paths:
            if Path(p).is_dir():
                expanded.extend(sorted(str(q) for q in Path(p).glob("*.csv")))
            else:
                expanded.append(p)

        cfg = RunConfig(
            data_paths=expanded,
            columns=values.get("columns"),
            synth=synth,
            train_years=_int_list(values.get("train_years", "2011-2017")),
            test_year=int(values.get("test_year", 2018)),
            methods=[m.strip().upper() for m in str(values.get("methods", "CT,CD,MAP")).split(",") if m.strip()],
            k=int(values.get("k", 714)),
            ordering=_parse_ordering(values.get("ordering", "natural")),
            time_encoding=str(values.get("time_encoding", "cyclic")),
            noise_rule=str(values.get("noise_rule", "dof")),
            seed=int(values.get("seed", 0)),
            output=str(values.get("output", "out")),
            workers=int(values.get("workers", 1)),
            test_start=_date(values.get("test_start")),
            test_end=_date(values.get("test_end")),
            test_stride=int(values.get("test_stride", 1)),
            cache=values.get("cache") or None,
            plots=_truthy(values.get("plots", True)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg


def _truthy(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def _date(value) -> dt.date | None:
    if value is None or value == "":
        return None
    if isinstance(value, dt.date):
        return value
    return dt.date.fromisoformat(str(value))


def _parse_ordering(value) -> list[int] | str:
    if isinstance(value, list):
        return value
    text = str(value).strip()
    if text in ("natural", "reverse"):
        return text
    return _int_list(text)


def resolve_ordering(choice: list[int] | str, dim: int) -> np.ndarray:
    if choice == "natural":
        return np.arange(dim)
    if choice == "reverse":
        return np.arange(dim)[::-1].copy()
    order = np.asarray(choice, dtype=int)
    if sorted(order.tolist()) != list(range(dim)):
        raise ConfigError(f"ordering must be a permutation of 0..{dim - 1}")
    return order


# ---------------------------------------------------------------- data preparation


@dataclass
class Prepared:
    """Training pool and test days, aligned by date across the two schemas."""

    config: RunConfig
    selection_pool: Dataset  # standardized
    predictor_pool: dict[dt.date, DaySample]
    selection_test: dict[dt.date, DaySample]  # standardized with pool statistics
    predictor_test: dict[dt.date, DaySample]
    test_dates: list[dt.date]
    chain: sel.ChainModel | None
    checksums: dict[str, str]
    chain_seconds: float = 0.0


def load_records(config: RunConfig) -> tuple[list[data_mod.HourlyRecord], dict[str, str]]:
    if config.data_paths:
        for p in config.data_paths:
            if not Path(p).is_file():
                raise DataError(f"input file not found: {p}")
        columns = data_mod.load_column_map(config.columns)
        records = data_mod.ingest(config.data_paths, columns)
        checksums = {str(p): file_sha256(p) for p in config.data_paths}
    else:
        records = data_mod.generate_synthetic(config.synth)
        blob = json.dumps(config.synth.to_dict(), sort_keys=True).encode()
        checksums = {"synth_config": hashlib.sha256(blob).hexdigest()}
    if not records:
        raise DataError("no hourly records loaded")
    return records, checksums


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def prepare(config: RunConfig, records=None, checksums=None) -> Prepared:
    if records is None:
        records, checksums = load_records(config)
    years = sorted(set(config.train_years) | {config.test_year})
    sel_all, pred_all = _assembled(records, years, config.cache, checksums or {})
    pred_by_date = pred_all.by_date()
    sel_by_date = {s.date: s for s in sel_all.samples if s.date in pred_by_date}

    train_years = set(config.train_years)
    pool_dates = [d for d in sorted(sel_by_date) if d.year in train_years]
    if not pool_dates:
        raise DataError(f"no complete training days in years {sorted(train_years)}")
    pool = Dataset(tuple(sel_by_date[d] for d in pool_dates), SELECTION_SCHEMA)
    pool_std = standardize(pool)
    stats = pool_std.standardization

    test_dates = [d for d in sorted(sel_by_date) if d.year == config.test_year]
    if config.test_start:
        test_dates = [d for d in test_dates if d >= config.test_start]
    if config.test_end:
        test_dates = [d for d in test_dates if d <= config.test_end]
    test_dates = test_dates[:: config.test_stride]
    if not test_dates:
        raise DataError(f"no complete test days in {config.test_year} within the requested range")

    weights = PREDICTOR_SCHEMA.total_dim + 1
    if config.k < fc.MIN_SAMPLES_PER_WEIGHT * weights:
        log.warning("k=%d is small against %d forecaster weights: predictive intervals are unreliable", config.k, weights)

    chain = None
    start = time.perf_counter()
    if "MAP" in config.methods or DRAW_METHOD in config.methods:
        chain = sel.fit_chain(
            pool_std,
            resolve_ordering(config.ordering, SELECTION_SCHEMA.total_dim),
            time_encoding=config.time_encoding,
            noise_rule=config.noise_rule,
        )
    return Prepared(
        config=config,
        selection_pool=pool_std,
        predictor_pool={d: pred_by_date[d] for d in pool_dates},
        selection_test={d: apply_standardization(sel_by_date[d], stats) for d in test_dates},
        predictor_test={d: pred_by_date[d] for d in test_dates},
        test_dates=test_dates,
        chain=chain,
        checksums=checksums or {},
        chain_seconds=time.perf_counter() - start,
    )


def _assembled(records, years: list[int], cache: str | None, checksums: dict[str, str]) -> tuple[Dataset, Dataset]:
    """Assemble both schemas, reusing ``.npz`` files in ``cache`` keyed on the inputs and years."""
    if cache is None:
        return data_mod.assemble(records, SELECTION_SCHEMA, years), data_mod.assemble(records, PREDICTOR_SCHEMA, years)
    key_src = json.dumps({"inputs": checksums, "years": years, "rule": asdict(data_mod.DEFAULT_RULE)}, sort_keys=True)
    key = hashlib.sha256(key_src.encode()).hexdigest()[:16]
    out = []
    for schema in (SELECTION_SCHEMA, PREDICTOR_SCHEMA):
        path = Path(cache) / f"{schema.name}-{key}.npz"
        if path.is_file():
            log.info("loading cached %s dataset %s", schema.name, path)
            out.append(data_mod.load_dataset(path))
            continue
        ds = data_mod.assemble(records, schema, years)
        path.parent.mkdir(parents=True, exist_ok=True)
        data_mod.save_dataset(path, ds)
        out.append(ds)
    return out[0], out[1]


# ---------------------------------------------------------------- one test day


def select(prep: Prepared, method: str, day: dt.date, k: int | None = None) -> sel.SelectionResult:
    k = prep.config.k if k is None else k
    if day not in prep.selection_test:
        raise DataError(f"{day} is not an available test day")
    test = prep.selection_test[day]
    if method == "CT":
        return sel.select_ct(prep.selection_pool, day, k)
    if method == "CD":
        return sel.select_cd(prep.selection_pool, test, k)
    if method in ("MAP", DRAW_METHOD):
        if prep.chain is None:
            raise ConfigError(f"{method} selection requested but no chain model was fitted")
        if method == DRAW_METHOD:
            # one stream per (seed, day) so results do not depend on scheduling
            return sel.sample_map(prep.chain, test, prep.selection_pool, k, seed=[prep.config.seed, day.toordinal()])
        return sel.select_map(prep.chain, test, prep.selection_pool, k)
    raise ConfigError(f"unknown method {method!r}")


def candidate_scores(prep: Prepared, method: str, day: dt.date) -> tuple[np.ndarray, np.ndarray | None]:
    """Score of every pool candidate under ``method`` (higher is better) and, for MAP, the normalized posterior.

    CT candidates from the test year or later get ``-inf``.
    """
    pool = prep.selection_pool
    test = prep.selection_test[day]
    if method == "CT":
        cutoff = dt.date(day.year, 1, 1)
        return np.array([-(day - d).days if d < cutoff else -np.inf for d in pool.dates], dtype=float), None
    if method == "CD":
        return -np.sqrt(((pool.features - test.features) ** 2).sum(axis=1)), None
    if prep.chain is None:
        raise ConfigError(f"{method} scores requested but no chain model was fitted")
    post = sel.score_times(prep.chain, test, pool)
    return post.log_scores, post.normalized


@dataclass
class DayOutcome:
    method: str
    forecast: fc.ForecastResult
    selection: sel.SelectionResult
    seconds: float


def run_day(prep: Prepared, method: str, day: dt.date) -> DayOutcome:
    start = time.perf_counter()
    try:
        chosen = select(prep, method, day)
        train_set = Dataset(
            tuple(prep.predictor_pool[prep.selection_pool.samples[i].date] for i in chosen.indices),
            PREDICTOR_SCHEMA,
        )
        model = fc.train(train_set, noise_rule=prep.config.noise_rule)
        result = fc.forecast(model, prep.predictor_test[day])
    except Exception as exc:
        if hasattr(exc, "exit_code"):
            raise type(exc)(f"{method} on {day}: {exc}") from exc
        raise
    return DayOutcome(method, result, chosen, time.perf_counter() - start)


# ---------------------------------------------------------------- evaluation loop

_WORKER_PREP: Prepared | None = None


def _init_worker(prep: Prepared) -> None:
    global _WORKER_PREP
    _WORKER_PREP = prep


def _worker_task(task: tuple[str, dt.date]) -> DayOutcome:
    return run_day(_WORKER_PREP, *task)


@dataclass
class Evaluation:
    reports: list[metrics.EvalReport]
    outcomes: dict[str, list[DayOutcome]]
    fit_seconds: float


def evaluate(prep: Prepared, progress=None) -> Evaluation:
    """Run every configured method on every test day and aggregate per method."""
    tasks = [(m, d) for m in prep.config.methods for d in prep.test_dates]
    if prep.config.workers > 1:
        with ProcessPoolExecutor(prep.config.workers, initializer=_init_worker, initargs=(prep,)) as pool:
            results = list(pool.map(_worker_task, tasks, chunksize=max(1, len(tasks) // (4 * prep.config.workers))))
    else:
        results = []
        for i, task in enumerate(tasks):
            results.append(run_day(prep, *task))
            if progress:
                progress(i + 1, len(tasks))

    outcomes: dict[str, list[DayOutcome]] = {m: [] for m in prep.config.methods}
    for res in results:
        outcomes[res.method].append(res)
    reports = []
    for method, days in outcomes.items():
        actual = np.vstack([o.forecast.actual for o in days])
        reports.append(
            metrics.evaluate_forecasts(
                method,
                actual,
                np.vstack([o.forecast.means for o in days]),
                np.vstack([o.forecast.variances for o in days]),
                np.vstack([o.forecast.interval_low for o in days]),
                np.vstack([o.forecast.interval_high for o in days]),
                seconds=sum(o.seconds for o in days) + (prep.chain_seconds if method in ("MAP", DRAW_METHOD) else 0.0),
            )
        )
    return Evaluation(reports, outcomes, prep.chain_seconds)
