import numpy as np
import pytest

from qrfuse import DataError, Dataset, EstimatorConfig, TauGrid, fit, tick_loss
from qrfuse.estimators import Kind
from qrfuse.forecast import (
    ForecastExercise,
    ForecastModel,
    ar1_heteroskedastic,
    build_target_pairs,
    read_series,
    rolling_forecast,
    score_exercise,
    write_scores,
)
from qrfuse.selection import HyperGrid

GRID = TauGrid((0.1, 0.25, 0.5, 0.75, 0.9))


def lagged(y):
    y = np.asarray(y, dtype=float)
    return Dataset(y[:, None], y, ("lag",))


# target pairs ---------------------------------------------------------------

def test_pairs_h0_identity():
    raw = lagged([1.0, 2.0, 3.0])
    p = build_target_pairs(raw, 0)
    np.testing.assert_array_equal(p.data.y, raw.y)
    np.testing.assert_array_equal(p.data.X, raw.X)


def test_pairs_h1():
    p = build_target_pairs(lagged([1.0, 2.0, 3.0]), 1, ["a", "b", "c"])
    np.testing.assert_array_equal(p.data.X[:, 0], [1.0, 2.0])
    np.testing.assert_array_equal(p.data.y, [2.0, 3.0])
    assert p.dates == ("b", "c")


def test_pairs_count_h4():
    assert build_target_pairs(lagged(np.arange(200.0)), 4).data.T == 196


def test_pairs_too_short():
    with pytest.raises(DataError):
        build_target_pairs(lagged([1.0, 2.0]), 1)
    with pytest.raises(DataError):
        build_target_pairs(lagged([1.0, 2.0, 3.0]), 1, ["a"])


# windows --------------------------------------------------------------------

def exercise(raw, h=1, window=50, models=None, grid=GRID, **kw):
    models = models or [ForecastModel("QR", Kind.QR)]
    return ForecastExercise(build_target_pairs(raw, h), window, models, grid, **kw)


def test_window_count():
    raw, _ = ar1_heteroskedastic(300, seed=0)
    assert exercise(raw).n_windows == 249
    raw200 = lagged(np.random.default_rng(0).standard_normal(200))
    assert exercise(raw200, h=4).n_windows == 200 - 4 - 50 - 4 + 1


def test_exercise_validation():
    raw = lagged(np.random.default_rng(0).standard_normal(40))
    with pytest.raises(ValueError):
        exercise(raw, h=0)
    with pytest.raises(DataError):
        exercise(raw, window=39)
    with pytest.raises(ValueError):
        exercise(raw, window=10, models=[ForecastModel("a", Kind.QR), ForecastModel("a", Kind.QR)])
    with pytest.raises(ValueError):
        ForecastModel("g", Kind.GNCQR)
    with pytest.raises(ValueError):
        ForecastModel("q", Kind.QR, value=1.0)


def test_intercept_only_forecast_is_window_quantile():
    rng = np.random.default_rng(1)
    y = rng.standard_normal(40)
    raw = Dataset(np.zeros((40, 0)), y)
    ex = exercise(raw, h=2, window=12)
    res = rolling_forecast(ex)
    pairs_y = ex.pairs.data.y
    for s in range(ex.n_windows):
        window_y = pairs_y[s:s + 12]
        for q, tau in enumerate(GRID.taus):
            k = int(np.ceil(tau * 12)) - 1
            oracle = np.sort(window_y)[k]
            got = res.unsorted["QR"][s, q]
            assert np.sum(tick_loss(window_y - got, tau)) == pytest.approx(
                np.sum(tick_loss(window_y - oracle, tau)), abs=1e-9)
    np.testing.assert_array_equal(res.realized, pairs_y[12 + 2 - 1:])


def test_constant_series():
    raw = Dataset(np.zeros((30, 0)), np.full(30, 2.5))
    ex = exercise(raw, window=10)
    res = rolling_forecast(ex)
    np.testing.assert_allclose(res.unsorted["QR"], 2.5, atol=1e-12)
    (row,) = score_exercise(res.unsorted, res.sorted, res.realized, GRID)
    assert row.crps == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)
    assert np.isfinite(row.log_score)


def test_gncqr_windows_non_crossing_in_sample():
    raw, _ = ar1_heteroskedastic(120, seed=2)
    ex = exercise(raw, window=40)
    data = ex.pairs.data
    for s in range(0, ex.n_windows, 20):
        train = data.subset(np.arange(s, s + 40))
        f = fit(train, GRID, EstimatorConfig.make("GNCQR", 1.0))
        assert np.all(np.diff(f.predict(train.X), axis=1) >= -1e-8)


def test_sorted_forecasts_and_failures_recorded():
    raw, _ = ar1_heteroskedastic(100, seed=3)
    models = [ForecastModel("QR", Kind.QR), ForecastModel("G", Kind.GNCQR, value=0.5),
              ForecastModel("F", Kind.FLQR, hypergrid=HyperGrid((0.0, 0.1, 1.0)))]
    ex = exercise(raw, window=30, models=models)
    res = rolling_forecast(ex, seed=1)
    for label in res.labels:
        assert np.all(np.diff(res.sorted[label], axis=1) >= 0)
        same = np.all(np.diff(res.unsorted[label], axis=1) >= 0, axis=1)
        np.testing.assert_array_equal(res.sorted[label][same], res.unsorted[label][same])
    assert res.hyperparameters["F"][0] in (0.0, 0.1, 1.0)
    assert len(set(res.hyperparameters["F"])) == 1

    # a constant regressor makes every constrained window fail
    flat = Dataset(np.ones((60, 1)), np.random.default_rng(0).standard_normal(60))
    res = rolling_forecast(exercise(flat, window=20, models=[ForecastModel("B", Kind.BRW)]))
    assert len(res.failures["B"]) == res.unsorted["B"].shape[0]
    (row,) = score_exercise(res.unsorted, res.sorted, res.realized, GRID)
    assert row.n_windows == 0 and row.n_failed == res.unsorted["B"].shape[0]


def test_reselection_policy():
    raw, _ = ar1_heteroskedastic(90, seed=4)
    model = ForecastModel("G", Kind.GNCQR, hypergrid=HyperGrid((0.0, 1.0, 100.0)))
    ex = exercise(raw, window=30, models=[model], reselect_every=20)
    res = rolling_forecast(ex, seed=0)
    assert len(res.hyperparameters["G"]) == ex.n_windows
    assert all(v is not None for v in res.hyperparameters["G"])


def test_forecast_csv_deterministic(tmp_path):
    raw, dates = ar1_heteroskedastic(90, seed=5)
    ex = ForecastExercise(build_target_pairs(raw, 1, dates), 30,
                          [ForecastModel("QR", Kind.QR), ForecastModel("BRW", Kind.BRW)], GRID)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    rolling_forecast(ex).write_csv(a)
    rolling_forecast(ex).write_csv(b)
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "date,estimator,tau,unsorted,sorted,realized"
    assert len(lines) == 1 + 2 * ex.n_windows * GRID.Q


# scoring --------------------------------------------------------------------

def test_zero_error_scores():
    y = np.array([1.0, 2.0])
    f = np.tile(y[:, None], (1, GRID.Q))
    (row,) = score_exercise({"m": f}, {"m": f}, y, GRID)
    assert row.crps == (0.0, 0.0, 0.0) and row.crps_sorted == (0.0, 0.0, 0.0)
    assert np.isfinite(row.log_score)


def test_single_window_single_quantile():
    g = TauGrid((0.3,))
    (row,) = score_exercise({"m": [[1.0]]}, {"m": [[1.0]]}, [0.2], g)
    assert row.crps[0] == pytest.approx(tick_loss(-0.8, 0.3))


def test_sorting_improves_crossing_forecasts():
    rng = np.random.default_rng(6)
    g = TauGrid.equispaced(0.05, 0.95, 0.05)
    raw = np.sort(rng.standard_normal((200, g.Q)), axis=1) + rng.normal(scale=0.5, size=(200, g.Q))
    y = rng.standard_normal(200)
    (row,) = score_exercise({"m": raw}, {"m": np.sort(raw, axis=1)}, y, g)
    assert row.crps_sorted[0] <= row.crps[0] + 1e-12


def test_scores_csv(tmp_path):
    y = np.array([0.0, 1.0])
    f = np.zeros((2, GRID.Q))
    rows = score_exercise({"a": f, "b": f + 1}, {"a": f, "b": f + 1}, y, GRID)
    p = tmp_path / "s.csv"
    write_scores(p, rows)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("estimator,crps,crps_center,crps_left,crps_sorted")
    assert len(lines) == 3


# CSV input ------------------------------------------------------------------

def test_read_series(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("date,gdp,nfci\n2000-01-01,1.0,0.1\n2000-04-01,2.0,0.2\n2000-07-01,1.5,0.0\n")
    ds, dates = read_series(p, "gdp")
    assert dates == ("2000-01-01", "2000-04-01", "2000-07-01")
    assert ds.names == ("gdp", "nfci")
    np.testing.assert_array_equal(ds.X[:, 0], ds.y)
    assert read_series(p, "gdp", include_target=False)[0].names == ("nfci",)
    p.write_text("date,gdp\n2000-04-01,1.0\n2000-01-01,2.0\n")
    with pytest.raises(DataError):
        read_series(p, "gdp")
    p.write_text("date,gdp\n2000Q1,1.0\n2000Q2,2.0\n")
    with pytest.raises(DataError):
        read_series(p, "gdp")
    with pytest.raises(DataError):
        read_series(p, "gdp", date_column="when")
