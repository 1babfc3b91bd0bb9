import csv
import json

import numpy as np
import pytest

from cyclosel import cli, pipeline
from cyclosel.errors import NumericalError

SMALL = ["--synth", "--synth-n-years", "3", "--train-years", "2011-2012", "--test-year", "2013", "--k", "120"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--synth-n-years", "3", "--synth-seed", "7", "--output", str(out), "-q"]) == 0
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_synth_files_and_checksums(synth_dir, tmp_path, capsys):
    rows = read_csv(synth_dir / "load.csv")
    assert len(rows) == 24 * (365 + 366 + 365)
    assert list(rows[0]) == ["date", "hour", "load"]
    assert list(read_csv(synth_dir / "weather.csv")[0]) == ["date", "hour", "temperature", "dew_point"]
    capsys.readouterr()
    cli.main(["synth", "--synth-n-years", "3", "--synth-seed", "7", "--output", str(tmp_path), "-q"])
    printed = capsys.readouterr().out
    assert (synth_dir / "load.csv").read_bytes() == (tmp_path / "load.csv").read_bytes()
    assert pipeline.file_sha256(synth_dir / "load.csv") in printed


def test_synth_eight_years_row_count(tmp_path):
    assert cli.main(["synth", "--synth-seed", "7", "--output", str(tmp_path), "-q"]) == 0
    rows = (tmp_path / "load.csv").read_text().count("\n") - 1
    assert rows == 24 * (8 * 365 + 2)  # 2012 and 2016 are leap years


def test_synth_config_error(tmp_path, capsys):
    assert cli.main(["synth", "--synth-n-years", "1", "--output", str(tmp_path)]) == 2
    assert "n_years" in capsys.readouterr().err


def test_select_outputs(synth_dir, tmp_path):
    out = tmp_path / "sel"
    code = cli.main(["select", "--data", str(synth_dir), "--train-years", "2011-2012", "--test-year", "2013",
                     "--date", "2013-01-20", "--output", str(out), "-q"])
    assert code == 0
    payload = json.loads((out / "selection.json").read_text())
    assert [s["method"] for s in payload["selections"]] == ["CT", "CD", "MAP"]
    assert all(s["k"] == 714 for s in payload["selections"])
    ct = set(payload["selections"][0]["selected_dates"])
    assert {d[:4] for d in ct} == {"2011", "2012"} and len(ct) == 714
    rows = read_csv(out / "scores_MAP.csv")
    assert len(rows) == 714 and sum(int(r["selected"]) for r in rows) == 714
    assert abs(sum(float(r["posterior"]) for r in rows) - 1.0) < 1e-6
    assert (out / "figures" / "posterior_MAP_2013-01-20.png").stat().st_size > 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "select"
    assert set(manifest["inputs"].values()) == {pipeline.file_sha256(synth_dir / n) for n in ("load.csv", "weather.csv")}
    assert "selection.json" in manifest["outputs"]


def test_select_winter_maxima(synth_dir, tmp_path):
    out = tmp_path / "w"
    code = cli.main(["select", "--data", str(synth_dir), "--train-years", "2011-2012", "--test-year", "2013",
                     "--date", "2013-01-25", "--methods", "MAP", "--k", "10", "--output", str(out), "-q", "--no-plots"])
    assert code == 0
    rows = read_csv(out / "scores_MAP.csv")
    for year in ("2011", "2012"):
        yr = [r for r in rows if r["date"].startswith(year)]
        best = max(yr, key=lambda r: float(r["score"]))
        month = int(best["date"][5:7])
        assert month in (12, 1, 2, 3)
    assert not (out / "figures").exists()


def test_select_errors(synth_dir, tmp_path):
    base = ["select", "--data", str(synth_dir), "--train-years", "2011-2012", "--test-year", "2013",
            "--output", str(tmp_path), "-q"]
    assert cli.main(base + ["--date", "2014-01-20"]) == 3
    assert cli.main(base + ["--date", "2013-12-31"]) == 3
    assert cli.main(base + ["--date", "2013-02-10", "--k", "5000"]) == 3
    assert cli.main(base + ["--date", "20-01-2013"]) == 2


def test_forecast_outputs(tmp_path):
    out = tmp_path / "fc"
    assert cli.main(["forecast", *SMALL, "--date", "2013-07-01", "--output", str(out), "-q"]) == 0
    payload = json.loads((out / "forecast.json").read_text())
    assert set(payload["forecasts"]) == {"CT", "CD", "MAP"}
    rows = read_csv(out / "forecast_MAP.csv")
    assert len(rows) == 24 and rows[0]["date"] == "2013-07-02"
    assert all(float(r["lo"]) <= float(r["mean"]) <= float(r["hi"]) for r in rows)
    assert (out / "figures" / "forecast_MAP_2013-07-02.png").exists()


def test_evaluate_single_day(tmp_path, capsys):
    out = tmp_path / "ev"
    code = cli.main(["evaluate", *SMALL, "--test-start", "2013-05-01", "--test-end", "2013-05-01",
                     "--output", str(out), "-q"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert [r["n_test_days"] for r in report["reports"]] == [1, 1, 1]
    assert "seconds" not in (out / "report.json").read_text()
    assert "per day (s)" in capsys.readouterr().out
    timing = json.loads((out / "timing.json").read_text())
    assert set(timing["methods"]) == {"CT", "CD", "MAP"}
    assert len(read_csv(out / "forecasts_CD.csv")) == 24
    assert (out / "figures" / "metrics.png").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["test_start"] == "2013-05-01"
    assert set(manifest["outputs"]) == {"report.json", "table.txt", "forecasts_CT.csv", "forecasts_CD.csv",
                                        "forecasts_MAP.csv"}


def test_config_file_overridden_by_flags(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("synth = true\nsynth_n_years = 3\ntrain-years = 2011-2012\ntest_year = 2013\n"
                   "k = 50\nmethods = CT\ntest_start = 2013-05-01\ntest_end = 2013-05-03\n")
    out = tmp_path / "o"
    assert cli.main(["evaluate", "--config", str(cfg), "--k", "60", "--output", str(out), "-q", "--no-plots"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["k"] == 60 and manifest["config"]["methods"] == ["CT"]
    assert cli.main(["evaluate", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_env_data_dir(synth_dir, tmp_path, monkeypatch):
    monkeypatch.setenv(pipeline.DATA_DIR_ENV, str(synth_dir))
    out = tmp_path / "env"
    code = cli.main(["select", "--train-years", "2011-2012", "--test-year", "2013", "--date", "2013-03-03",
                     "--methods", "CT", "--output", str(out), "-q"])
    assert code == 0
    assert len(json.loads((out / "manifest.json").read_text())["inputs"]) == 2


def test_numerical_failure_exit_code(monkeypatch, tmp_path, capsys):
    def boom(*args, **kwargs):
        raise NumericalError("matrix is not positive definite")

    monkeypatch.setattr(pipeline, "evaluate", boom)
    code = cli.main(["evaluate", *SMALL, "--methods", "CT", "--output", str(tmp_path), "-q"])
    assert code == 4
    assert "positive definite" in capsys.readouterr().err


def test_every_run_config_field_has_a_flag():
    parser = cli.build_parser()
    sub = parser._subparsers._group_actions[0].choices["evaluate"]
    dests = {a.dest for a in sub._actions}
    fields = set(pipeline.RunConfig.__dataclass_fields__) - {"data_paths"}
    assert fields <= dests | {"data_paths"}
    assert "data" in dests
    for name in ("n_years", "seasonal_amplitude", "weekly_amplitude", "noise_std", "temp_load_coupling", "seed"):
        assert f"synth_{name}" in dests


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        cli.main(["evaluate", "--bogus"])
    assert exc.value.code == 2
