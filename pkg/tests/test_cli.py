import json
import subprocess
import sys

import pytest

from tempobeat.cli import main


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(d), "--start", "2019-01-01", "--end", "2019-03-31",
                 "--seed", "3", "--noise-rel", "0.01"]) == 0
    return d


def inputs(d):
    return ["--obs", str(d / "observations.csv"), "--weather", str(d / "weather.csv"),
            "--events", str(d / "events.csv")]


@pytest.fixture(scope="module")
def pipeline(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("out")
    assert main(["ingest", *inputs(synth_dir), "--out", str(out)]) == 0
    for cmd in ("acf", "fit", "rmsd", "recommend", "anomalies", "proxy", "report"):
        assert main([cmd, "--out", str(out)]) == 0, cmd
    return out


def test_artifacts_and_manifest(pipeline):
    for name in ("dataset/dataset.csv", "acf_day_step7.csv", "acf_hours.svg", "fit_full.json",
                 "predictions_restricted.csv", "rmsd_empty_grid.csv", "rmsd_weekday.svg",
                 "recommendation.json", "anomalies.csv", "report.html", "profile_week.csv"):
        assert (pipeline / name).is_file(), name
    manifest = json.loads((pipeline / "manifest.json").read_text())
    assert set(manifest["runs"]) >= {"ingest", "fit", "rmsd", "recommend", "report"}
    run = manifest["runs"]["fit"]
    assert run["tool_version"] and "fit_empty.json" in run["outputs"]
    assert all(len(v) == 64 for v in run["inputs"].values())
    html = (pipeline / "report.html").read_text()
    assert "<svg" in html and "Recommended slots" in html and "Variance components" in html


def test_fit_json_fields(pipeline):
    fit = json.loads((pipeline / "fit_full.json").read_text())
    assert fit["converged"]
    comps = [r["component"] for r in fit["random_effects"]]
    assert comps == ["hour", "day", "month_year", "residual"]
    assert fit["random_effects"][-1]["cumulative_share"] == pytest.approx(1.0)
    assert {"name", "coef", "se", "z", "p", "ci95"} <= set(fit["fixed_effects"][0])


def test_rerun_is_byte_identical(synth_dir, pipeline, tmp_path):
    assert main(["ingest", *inputs(synth_dir), "--out", str(tmp_path)]) == 0
    assert main(["fit", "--out", str(tmp_path), "--model", "empty"]) == 0
    for name in ("dataset/dataset.csv", "dataset/dataset.json", "fit_empty.json", "predictions_empty.csv"):
        assert (tmp_path / name).read_bytes() == (pipeline / name).read_bytes(), name


def test_single_axis_and_model(pipeline, tmp_path, capsys):
    assert main(["rmsd", "--dataset", str(pipeline / "dataset"), "--out", str(tmp_path),
                 "--model", "empty", "--axis", "hour"]) == 0
    assert (tmp_path / "rmsd_empty_hour.csv").read_text().startswith("hour,rmsd,count\n")
    assert not (tmp_path / "rmsd_empty_grid.csv").exists()
    assert "empty: overall RMSD" in capsys.readouterr().out


def test_exit_codes(tmp_path):
    assert main(["fit", "--out", str(tmp_path / "nothing")]) == 3
    with pytest.raises(SystemExit) as err:
        main(["fit", "--model", "bogus"])
    assert err.value.code == 3
    bad = tmp_path / "obs.csv"
    bad.write_text("timestamp,size_bytes\n2019-01-01T00:00,1\n2019-01-01T00:00,2\n")
    assert main(["ingest", "--obs", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert main(["ingest", "--obs", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 1
    gap = tmp_path / "gap.csv"
    gap.write_text("timestamp,size_bytes\n2019-01-01T00:00,1\n2019-01-01T02:00,2\n")
    assert main(["ingest", "--obs", str(gap), "--out", str(tmp_path / "g"), "--fill-gaps", "error"]) == 1
    assert main(["ingest", "--obs", str(gap), "--out", str(tmp_path / "g"), "--fill-gaps", "zero"]) == 0


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "tempobeat", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "tempobeat" in res.stdout


def test_fit_on_gapped_observations_names_stamp(tmp_path, capsys):
    gap = tmp_path / "gap.csv"
    gap.write_text("timestamp,size_bytes\n2019-01-01T00:00,1\n2019-01-01T01:00,3\n2019-01-01T03:00,2\n")
    assert main(["fit", "--obs", str(gap), "--out", str(tmp_path / "o"), "--model", "empty"]) == 1
    assert "2019-01-01T02:00" in capsys.readouterr().err
