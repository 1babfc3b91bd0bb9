"""Command-line interface: ``cyclosel {synth,select,forecast,evaluate}``.

Settings are resolved in order: built-in defaults, a ``key = value`` config
file (``--config``), then command-line flags. Without ``--data`` or
``--synth`` the CSV files in ``$CYCLOSEL_DATA_DIR`` are used.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import logging
import sys
from pathlib import Path

from . import __version__, data as data_mod, pipeline, reports
from .errors import ConfigError, CycloselError, DataError

log = logging.getLogger("cyclosel")

RUN_FLAGS = (
    ("--data", "comma-separated CSV files or directories (default: $%s)" % pipeline.DATA_DIR_ENV),
    ("--columns", "column-mapping file: canonical field = CSV header"),
    ("--train-years", "training years, e.g. 2011-2017 or 2011,2012"),
    ("--test-year", "test year (default 2018)"),
    ("--methods", "comma-separated selection methods: CT, CD, MAP (MAP-DRAW on request)"),
    ("--k", "number of selected training days (default 714)"),
    ("--ordering", "chain ordering: natural, reverse or a comma-separated permutation"),
    ("--time-encoding", "time covariates of the chain: cyclic (default) or linear"),
    ("--noise-rule", "residual noise estimate: dof (default) or mse"),
    ("--seed", "seed for the random-draw selection mode"),
    ("--output", "output directory (default out)"),
    ("--workers", "parallel worker processes for evaluate"),
    ("--test-start", "first test date (ISO)"),
    ("--test-end", "last test date (ISO)"),
    ("--test-stride", "evaluate every n-th test day"),
    ("--cache", "directory for cached assembled datasets"),
)


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("run configuration")
    for flag, help_text in RUN_FLAGS:
        group.add_argument(flag, default=None, help=help_text)
    group.add_argument("--no-plots", dest="plots", action="store_const", const="false", default=None,
                       help="skip rendering figures")
    synth = parser.add_argument_group("synthetic data")
    synth.add_argument("--synth", action="store_const", const="true", default=None,
                       help="use the synthetic generator instead of CSV input")
    for f in dataclasses.fields(data_mod.SynthConfig):
        synth.add_argument(f"--synth-{f.name.replace('_', '-')}", dest=f"synth_{f.name}", default=None,
                           metavar=type(f.default).__name__.upper(), help=f"generator {f.name} (default {f.default})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cyclosel", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file; flags override it")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    common.add_argument("-q", "--quiet", action="store_true", help="only errors on stderr")
    _add_run_flags(common)

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write synthetic hourly load and weather CSVs")
    p = sub.add_parser("select", parents=[common], help="rank training days for one test day")
    p.add_argument("--date", required=True, help="test date (ISO)")
    p = sub.add_parser("forecast", parents=[common], help="select, train and forecast one test day")
    p.add_argument("--date", required=True, help="test date (ISO); the forecast is for the following day")
    sub.add_parser("evaluate", parents=[common], help="run every method over the test range and report metrics")
    return parser


def resolve(args: argparse.Namespace, force_synth: bool = False) -> pipeline.RunConfig:
    values: dict[str, object] = {}
    if args.config:
        if not Path(args.config).is_file():
            raise ConfigError(f"config file not found: {args.config}")
        values.update(data_mod.read_key_values(args.config))
    skip = {"config", "verbose", "quiet", "command", "date"}
    values.update({k: v for k, v in vars(args).items() if k not in skip and v is not None})
    if force_synth:
        values["synth"] = "true"
    return pipeline.build_config(values)


def _parse_date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise ConfigError(f"invalid date {text!r}, expected YYYY-MM-DD") from None


def _single_day(config: pipeline.RunConfig, day: dt.date) -> pipeline.RunConfig:
    if day.year != config.test_year:
        raise DataError(f"{day} is outside the test year {config.test_year}")
    return dataclasses.replace(config, test_start=day, test_end=day, test_stride=1)


def _prepare_day(config: pipeline.RunConfig, day: dt.date) -> pipeline.Prepared:
    prep = pipeline.prepare(_single_day(config, day))
    if prep.test_dates != [day]:
        raise DataError(f"{day} is not a usable test day (ineligible or incomplete data)")
    return prep


def cmd_synth(args) -> int:
    config = resolve(args, force_synth=True)
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    records = data_mod.generate_synthetic(config.synth)
    load_path = out / "load.csv"
    weather_path = out / "weather.csv"
    data_mod.write_records_csv(load_path, records, ("load",))
    data_mod.write_records_csv(weather_path, records, ("temperature", "dew_point"))
    truth = reports.write_json(out / "synth_config.json", config.synth.to_dict())
    files = [load_path, weather_path, truth]
    reports.write_manifest(out, "synth", config, {}, files)
    days = len(records) // 24
    print(f"{len(records)} hourly records ({days} days, {config.synth.n_years} years) -> {out}")
    for path in files:
        print(f"{pipeline.file_sha256(path)}  {path}")
    return 0


def cmd_select(args) -> int:
    config = resolve(args)
    day = _parse_date(args.date)
    prep = _prepare_day(config, day)
    out = Path(config.output)
    results = []
    written = []
    for method in config.methods:
        chosen = pipeline.select(prep, method, day)
        scores, normalized = pipeline.candidate_scores(prep, method, day)
        written.append(reports.write_scores_csv(out / f"scores_{method}.csv", prep, scores, normalized, chosen))
        if config.plots and method in ("MAP", pipeline.DRAW_METHOD):
            from . import plotting
            from .selection import score_times

            post = score_times(prep.chain, prep.selection_test[day], prep.selection_pool)
            plotting.plot_time_posterior(post, day, out / "figures" / f"posterior_{method}_{day}.png", chosen.indices)
        results.append(chosen)
    payload = reports.selection_payload(day, results)
    written.insert(0, reports.write_json(out / "selection.json", payload))
    reports.write_manifest(out, "select", config, prep.checksums, written)
    for r in results:
        first = ", ".join(r.selected_ids[:3])
        print(f"{r.method}: {r.k} days selected in {r.selection_seconds:.3f}s (top: {first})")
    return 0


def cmd_forecast(args) -> int:
    config = resolve(args)
    day = _parse_date(args.date)
    prep = _prepare_day(config, day)
    out = Path(config.output)
    written = []
    payload = {}
    for method in config.methods:
        outcome = pipeline.run_day(prep, method, day)
        result = outcome.forecast
        payload[method] = result.to_dict()
        written.append(reports.write_forecast_csv(out / f"forecast_{method}.csv", [result]))
        if config.plots:
            from . import plotting

            plotting.plot_forecast(result, out / "figures" / f"forecast_{method}_{result.target_date}.png", method)
        peak = int(result.means.argmax())
        print(f"{method}: {result.target_date} peak hour {peak} mean {result.means[peak]:.1f} "
              f"[{result.interval_low[peak]:.1f}, {result.interval_high[peak]:.1f}] ({outcome.seconds:.2f}s)")
    written.insert(0, reports.write_json(out / "forecast.json", {"test_date": day.isoformat(), "forecasts": payload}))
    reports.write_manifest(out, "forecast", config, prep.checksums, written)
    return 0


def cmd_evaluate(args) -> int:
    config = resolve(args)
    prep = pipeline.prepare(config)
    log.info("%d test days, %d training days, methods %s", len(prep.test_dates), len(prep.selection_pool), config.methods)

    def progress(done: int, total: int) -> None:
        if done % 50 == 0 or done == total:
            log.info("%d/%d day runs done", done, total)

    evaluation = pipeline.evaluate(prep, progress)
    out = Path(config.output)
    written = reports.write_evaluation(out, prep, evaluation)
    if config.plots:
        reports.render_evaluation_plots(out, evaluation)
    reports.write_manifest(out, "evaluate", config, prep.checksums, written)
    sys.stdout.write(reports.report_summary(evaluation.reports))
    return 0


COMMANDS = {"synth": cmd_synth, "select": cmd_select, "forecast": cmd_forecast, "evaluate": cmd_evaluate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return COMMANDS[args.command](args)
    except CycloselError as exc:
        print(f"cyclosel: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"cyclosel: error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
