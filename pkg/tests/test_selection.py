import numpy as np
import pytest

from qrfuse import Dataset, EstimatorConfig, TauGrid, fit
from qrfuse.estimators import mean_tick_loss
from qrfuse.selection import (
    CvPlan,
    HyperGrid,
    SelectionError,
    cv_folds,
    grid_search,
    make_grid,
    select,
)
from qrfuse.simulate import dgp, draw

GRID5 = TauGrid.equispaced(0.1, 0.9, 0.2)


def toy(seed=0, T=40, K=2):
    rng = np.random.default_rng(seed)
    X = rng.random((T, K))
    return Dataset(X, 1 + X.sum(axis=1) + (1 + X[:, 0]) * rng.standard_normal(T))


# grids ------------------------------------------------------------------

def test_make_grid_default():
    g = make_grid(100, 1, 200, 6)
    assert len(g) == 300
    assert g.values[0] == 0.0
    assert 1.0 in g.values and 1e6 in g.values


def test_make_grid_application():
    g = make_grid(100, 1, 100, 3)
    assert max(g.values) == pytest.approx(1000.0)


def test_make_grid_minimal():
    assert make_grid(1, 1, 1, 0).values == (0.0, 1.0)


@pytest.mark.parametrize("args", [(0, 1, 1, 1), (1, 0, 1, 1), (1, 1, 0, 1), (1, 1, 1, -1)])
def test_make_grid_invalid(args):
    with pytest.raises(ValueError):
        make_grid(*args)


def test_hypergrid_validation():
    assert HyperGrid((0.0, 1.0, 1.0)).values == (0.0, 1.0, 1.0)
    for bad in [(), (-1.0,), (2.0, 1.0), (np.inf,)]:
        with pytest.raises(ValueError):
            HyperGrid(bad)


# folds ------------------------------------------------------------------

def one_based(idx):
    return sorted(int(i) + 1 for i in idx)


def test_kfold_first_fold():
    train, valid = cv_folds(10, CvPlan(5, 0))[0]
    assert one_based(valid) == [1, 2]
    assert one_based(train) == list(range(3, 11))


def test_hv_block_gap():
    train, valid = cv_folds(10, CvPlan(5, 1))[1]
    assert one_based(valid) == [3, 4]
    assert one_based(train) == [1, 6, 7, 8, 9, 10]


def test_empty_training_set_rejected():
    with pytest.raises(SelectionError):
        cv_folds(10, CvPlan(2, 5))
    with pytest.raises(SelectionError):
        cv_folds(3, CvPlan(5, 0))


@pytest.mark.parametrize("plan", [CvPlan(10, 0), CvPlan(7, 2), CvPlan(4, 0, shuffle=True)])
def test_validation_sets_partition(plan):
    folds = cv_folds(53, plan, seed=11)
    allv = np.concatenate([v for _, v in folds])
    assert sorted(allv.tolist()) == list(range(53))
    for train, valid in folds:
        assert not set(train) & set(valid)


def test_shuffle_is_seeded():
    a = cv_folds(30, CvPlan(5, shuffle=True), seed=1)
    b = cv_folds(30, CvPlan(5, shuffle=True), seed=1)
    c = cv_folds(30, CvPlan(5, shuffle=True), seed=2)
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(a, b))
    assert not all(np.array_equal(x[1], y[1]) for x, y in zip(a, c))


def test_plan_validation():
    with pytest.raises(ValueError):
        CvPlan(1)
    with pytest.raises(ValueError):
        CvPlan(5, -1)


# grid search --------------------------------------------------------------

def qr_cv_loss(ds, plan, seed):
    total = 0.0
    for train, valid in cv_folds(ds.T, plan, seed):
        f = fit(ds.subset(train), GRID5, EstimatorConfig.make("QR"))
        total += mean_tick_loss(f, ds.subset(valid)) * len(valid) * GRID5.Q
    return total / (ds.T * GRID5.Q)


def test_single_zero_candidate_is_qr():
    ds = toy()
    plan = CvPlan(5)
    res = grid_search(ds, GRID5, "GNCQR", [0.0], plan)
    assert res.best == 0.0
    assert res.oos_loss[0] == pytest.approx(qr_cv_loss(ds, plan, None), abs=1e-9)


def test_duplicates_tie_to_first_index():
    res = grid_search(toy(1), GRID5, "GNCQR", [0.5, 0.5, 0.5], CvPlan(4))
    assert res.oos_loss[0] == res.oos_loss[1] == res.oos_loss[2]
    assert res.best_index == 0


def test_in_sample_profile_monotone():
    res = grid_search(toy(2), GRID5, "GNCQR", make_grid(5, 1, 5, 3), CvPlan(5))
    ins = res.in_sample_loss
    assert np.all(np.diff(ins) >= -1e-8 * ins[:-1])
    assert list(res.rows())[0][0] == 0.0


def test_flqr_search_and_select():
    ds = toy(3)
    plan = CvPlan(5)
    res = grid_search(ds, GRID5, "FLQR", [0.0, 0.01, 0.1, 1.0], plan)
    assert select(ds, GRID5, "FLQR", [0.0, 0.01, 0.1, 1.0], plan) == res.best


def test_no_hyperparameter_rejected():
    with pytest.raises(SelectionError):
        grid_search(toy(), GRID5, "QR", [0.0], CvPlan(5))


def test_failed_candidates_recorded(monkeypatch):
    import qrfuse.selection as sel
    from qrfuse.estimators import EstimationError

    real = sel.fit_path

    def flaky(ds, grid, kind, values, prescale="minmax"):
        out = real(ds, grid, kind, values, prescale=prescale)
        return [EstimationError("boom") if v == 1.0 else f for v, f in zip(values, out)]

    monkeypatch.setattr(sel, "fit_path", flaky)
    res = grid_search(toy(), GRID5, "GNCQR", [0.0, 1.0, 2.0], CvPlan(5))
    assert np.isnan(res.oos_loss[1]) and res.n_failed_folds[1] == 5
    assert res.best_index != 1

    def broken(ds, grid, kind, values, prescale="minmax"):
        return [EstimationError("boom") for _ in values]

    monkeypatch.setattr(sel, "fit_path", broken)
    with pytest.raises(EstimationError):
        grid_search(toy(), GRID5, "GNCQR", [0.0, 1.0], CvPlan(5), in_sample=False)


def test_profile_csv_and_determinism(tmp_path):
    ds = toy(4)
    args = (ds, GRID5, "GNCQR", [0.0, 0.5, 2.0], CvPlan(5, shuffle=True), 9)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    grid_search(*args).write_csv(a)
    grid_search(*args).write_csv(b)
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "candidate,in_sample_loss,oos_loss,n_failed_folds"
    assert len(lines) == 4


def test_parallel_matches_serial():
    ds = toy(5)
    args = (ds, GRID5, "GNCQR", [0.0, 0.5, 2.0], CvPlan(4))
    a = grid_search(*args, jobs=1)
    b = grid_search(*args, jobs=2)
    np.testing.assert_array_equal(a.oos_loss, b.oos_loss)
    np.testing.assert_array_equal(a.in_sample_loss, b.in_sample_loss)


@pytest.mark.slow
def test_y2_selection_interior():
    rep = draw(dgp("y2"), 100, seed=2024)
    grid = make_grid(10, 1, 20, 6)
    res = grid_search(rep.data, GRID5, "GNCQR", grid, CvPlan(10, shuffle=True), seed=2024)
    assert 0.0 < res.best < 1e6
    # U-shape up to noise: both ends are worse than the optimum
    assert res.oos_loss[0] > res.oos_loss[res.best_index]
    assert res.oos_loss[-1] > res.oos_loss[res.best_index]
