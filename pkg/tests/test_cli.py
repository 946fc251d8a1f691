import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from qrfuse.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main, toy_csv_path
from qrfuse.forecast import ar1_heteroskedastic

TOY = str(toy_csv_path())


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fit_qr_toy(tmp_path, capsys):
    code = main(["fit", "--data", TOY, "--kind", "QR", "--out", str(tmp_path)])
    assert code == EXIT_OK
    fitted = json.loads((tmp_path / "fit.json").read_text())
    assert len(fitted["beta"]) == 9 and len(fitted["beta"][0]) == 2
    coef = rows(tmp_path / "coefficients.csv")
    assert len(coef) == 9 * 3
    float(coef[0]["coefficient"])
    assert "objective=" in capsys.readouterr().out


def test_fit_gncqr_without_alpha_is_config_error(tmp_path):
    assert main(["fit", "--data", TOY, "--kind", "GNCQR", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_alpha_forbidden_for_qr(tmp_path):
    assert main(["fit", "--data", TOY, "--kind", "QR", "--alpha", "1", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_alpha_one_matches_brw(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["fit", "--data", TOY, "--kind", "GNCQR", "--alpha", "1", "--out", str(a)]) == EXIT_OK
    assert main(["fit", "--data", TOY, "--kind", "BRW", "--out", str(b)]) == EXIT_OK
    assert (a / "coefficients.csv").read_bytes() == (b / "coefficients.csv").read_bytes()


def test_fit_with_grid_selection_and_json(tmp_path):
    code = main(["fit", "--data", TOY, "--kind", "FLQR", "--grid-values", "0,0.1,1",
                 "--folds", "4", "--taus-list", "0.25,0.5,0.75", "--json", "--out", str(tmp_path)])
    assert code == EXIT_OK
    doc = json.loads((tmp_path / "coefficients.json").read_text())
    assert doc["schema"] == 1 and len(doc["rows"]) == 9


def test_data_errors(tmp_path):
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == EXIT_DATA
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x\n1,2\n2,\n")
    assert main(["fit", "--data", str(bad), "--out", str(tmp_path)]) == EXIT_DATA
    flat = tmp_path / "flat.csv"
    flat.write_text("y,x\n1,2\n2,2\n3,2\n")
    assert main(["fit", "--data", str(flat), "--kind", "BRW", "--out", str(tmp_path)]) == EXIT_DATA


def test_bad_flags_are_config_errors(tmp_path):
    assert main(["fit", "--data", TOY, "--taus", "0.9:0.1:0.1x", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["fit", "--data", TOY, "--kind", "XYZ", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["fit", "--out", str(tmp_path)]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as err:
        main(["fit", "--no-such-flag"])
    assert err.value.code == EXIT_CONFIG


def test_cv_profile(tmp_path, monkeypatch):
    monkeypatch.delenv("QRFUSE_SEED", raising=False)
    args = ["cv", "--data", TOY, "--kind", "GNCQR", "--grid", "3,1,3,2", "--folds", "5",
            "--taus", "0.1:0.9:0.2", "--out"]
    assert main(args + [str(tmp_path / "x")]) == EXIT_CONFIG  # seed is mandatory
    assert main(args + [str(tmp_path / "a"), "--seed", "3"]) == EXIT_OK
    prof = rows(tmp_path / "a" / "cv_profile.csv")
    assert len(prof) == 6
    assert json.loads((tmp_path / "a" / "selected.json").read_text())["estimator"] == "GNCQR"
    monkeypatch.setenv("QRFUSE_SEED", "3")
    assert main(args + [str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "cv_profile.csv").read_bytes() == (tmp_path / "b" / "cv_profile.csv").read_bytes()
    assert main(["cv", "--data", TOY, "--kind", "QR", "--seed", "1", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cv_alpha_zero_row_is_qr_loss(tmp_path):
    from qrfuse import EstimatorConfig, TauGrid, fit, read_csv
    from qrfuse.estimators import mean_tick_loss
    from qrfuse.selection import CvPlan, cv_folds

    assert main(["cv", "--data", TOY, "--grid-values", "0,1", "--folds", "5", "--seed", "0",
                 "--out", str(tmp_path)]) == EXIT_OK
    ds = read_csv(TOY, "y")
    grid = TauGrid.parse("0.1:0.9:0.1")
    total = 0.0
    for train, valid in cv_folds(ds.T, CvPlan(5)):
        f = fit(ds.subset(train), grid, EstimatorConfig.make("QR"))
        total += mean_tick_loss(f, ds.subset(valid)) * len(valid) * grid.Q
    first = rows(tmp_path / "cv_profile.csv")[0]
    assert float(first["oos_loss"]) == pytest.approx(total / (ds.T * grid.Q), abs=1e-9)


def test_simulate_smoke_and_determinism(tmp_path):
    args = ["simulate", "--dgp", "y2", "--reps", "5", "--T", "60", "--estimators", "QR",
            "--n-eval", "100", "--seed", "11", "--out"]
    assert main(args + [str(tmp_path / "a")]) == EXIT_OK
    assert main(args + [str(tmp_path / "b")]) == EXIT_OK
    for name in ("rmise.csv", "selection_rates.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rates = rows(tmp_path / "a" / "selection_rates.csv")
    assert float(rates[0]["tpr"]) == 1.0 and float(rates[0]["tnr"]) == 0.0
    assert len(rows(tmp_path / "a" / "rmise.csv")) == 5


def test_simulate_config_errors(tmp_path):
    assert main(["simulate", "--dgp", "y9", "--seed", "1", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["simulate", "--reps", "1", "--seed", "1", "--estimators", "QR",
                 "--out", str(tmp_path)]) == EXIT_CONFIG


def series_csv(path, n=80, constant=False):
    raw, dates = ar1_heteroskedastic(n, seed=9)
    with open(path, "w") as fh:
        fh.write("date,gdp,nfci\n")
        for d, y, c in zip(dates, raw.y, raw.X[:, 1]):
            fh.write(f"{d},{2.0 if constant else float(y)!r},{float(c)!r}\n")


def test_forecast_smoke(tmp_path):
    data = tmp_path / "s.csv"
    series_csv(data)
    out = tmp_path / "out"
    code = main(["forecast", "--data", str(data), "--response", "gdp", "--window", "30",
                 "--estimators", "QR,GNCQR", "--grid-values", "0,1", "--folds", "5",
                 "--taus", "0.1:0.9:0.2", "--seed", "2", "--out", str(out)])
    assert code == EXIT_OK
    fc = rows(out / "forecasts.csv")
    n_windows = 80 - 1 - 30 - 1 + 1
    assert len(fc) == 2 * n_windows * 5
    srt = np.array([float(r["sorted"]) for r in fc]).reshape(2 * n_windows, 5)
    assert np.all(np.diff(srt, axis=1) >= 0)
    assert len(rows(out / "scores.csv")) == 2


def test_forecast_constant_series(tmp_path):
    data = tmp_path / "c.csv"
    series_csv(data, n=40, constant=True)
    out = tmp_path / "out"
    assert main(["forecast", "--data", str(data), "--response", "gdp", "--columns", "",
                 "--window", "10", "--estimators", "QR", "--out", str(out)]) == EXIT_OK
    (score,) = rows(out / "scores.csv")
    assert float(score["crps"]) == 0.0


def test_config_file(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# toy fit\nkind = GNCQR\nalpha = 1\ntaus = 0.25:0.75:0.25\njson = true\n")
    out = tmp_path / "o"
    assert main(["fit", "--config", str(conf), "--data", TOY, "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "fit.json").read_text())
    assert doc["estimator"]["alpha"] == 1.0 and doc["taus"] == [0.25, 0.5, 0.75]
    assert (out / "coefficients.json").exists()
    # the command line wins over the file
    assert main(["fit", "--config", str(conf), "--data", TOY, "--alpha", "2", "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "fit.json").read_text())["estimator"]["alpha"] == 2.0
    conf.write_text("nonsense line\n")
    assert main(["fit", "--config", str(conf), "--data", TOY, "--out", str(out)]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qrfuse", "fit", "--data", TOY, "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
