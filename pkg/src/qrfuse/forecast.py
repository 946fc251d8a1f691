"""Rolling-window quantile forecasts and their evaluation.

A raw series of regressors ``x_t`` and target ``y_t`` becomes pairs
``(x_t, y_{t+h})``. Window ``s`` trains on pairs ``s .. s+W-1``; the last
target it uses, ``y_{s+W-1+h}``, is observed at time ``s+W-1+h``, which is
therefore the forecast origin. The forecast is for pair ``s+W-1+h``, i.e.
the regressors observed at the origin mapped ``h`` periods ahead. With
``n`` pairs this gives ``n - W - h + 1`` windows.
"""

from __future__ import annotations

import csv
import datetime as _dt
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DataError, Dataset, QrfuseError, TauGrid, read_csv
from .estimators import EstimatorConfig, Kind, fit, sort_quantiles
from .metrics import WeightScheme, log_score, quantile_score, qwcrps, write_table
from .selection import CvPlan, HyperGrid, select


@dataclass(frozen=True, eq=False)
class TargetPairs:
    """Regressors at ``t`` aligned with the target at ``t + h``.

    ``dates`` are the target dates, one per pair.
    """

    data: Dataset
    dates: tuple[str, ...]
    h: int


def build_target_pairs(raw: Dataset, h: int, dates: Sequence[str] | None = None) -> TargetPairs:
    """Pair row ``t`` of ``raw.X`` with ``raw.y[t + h]``; the last ``h`` rows drop out."""
    if h < 0:
        raise ValueError("horizon must be non-negative")
    if raw.T < h + 2:
        raise DataError(f"series of length {raw.T} is too short for horizon {h}")
    if dates is None:
        dates = [str(i) for i in range(raw.T)]
    elif len(dates) != raw.T:
        raise DataError(f"{len(dates)} dates for {raw.T} observations")
    n = raw.T - h
    pairs = Dataset(raw.X[:n], raw.y[h:], raw.names)
    return TargetPairs(pairs, tuple(dates[h:]), h)


def read_series(path, target: str, date_column: str = "date",
                regressors: Sequence[str] | None = None,
                include_target: bool = True) -> tuple[Dataset, tuple[str, ...]]:
    """Load a time-ordered CSV with an ISO-8601 date column.

    Returns the raw (unshifted) dataset and its dates. With
    ``include_target`` the current value of the target is the first
    regressor, so after :func:`build_target_pairs` it enters as a lag.
    """
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or date_column not in reader.fieldnames:
            raise DataError(f"{path}: date column {date_column!r} not found")
        dates = [row[date_column].strip() for row in reader]
    parsed = []
    for i, d in enumerate(dates, start=1):
        try:
            parsed.append(_dt.date.fromisoformat(d))
        except ValueError:
            raise DataError(f"{path}: row {i} has non-ISO date {d!r}") from None
    if any(b <= a for a, b in zip(parsed, parsed[1:])):
        raise DataError(f"{path}: dates must be strictly increasing")
    ds = read_csv(path, target, exclude=(date_column,), columns=regressors)
    if include_target and target not in ds.names:
        ds = Dataset(np.column_stack([ds.y, ds.X]), ds.y, (target,) + tuple(ds.names))
    return ds, tuple(dates)


@dataclass(frozen=True)
class ForecastModel:
    """An estimator in the exercise: a fixed hyperparameter or a grid to select from."""

    label: str
    kind: Kind
    value: float | None = None
    hypergrid: HyperGrid | None = None

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind.hyperparameter is None and (self.value is not None or self.hypergrid is not None):
            raise ValueError(f"{kind.value} takes no hyperparameter")
        if kind.hyperparameter is not None and (self.value is None) == (self.hypergrid is None):
            raise ValueError(f"{kind.value} needs exactly one of a fixed value or a hypergrid")

    @property
    def selects(self) -> bool:
        return self.hypergrid is not None


@dataclass(frozen=True, eq=False)
class ForecastExercise:
    pairs: TargetPairs
    window: int
    models: tuple[ForecastModel, ...]
    grid: TauGrid
    reselect_every: int | None = None
    folds: int = 10
    prescale: str = "minmax"

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        if self.window < 2:
            raise ValueError("window must hold at least two observations")
        if self.reselect_every is not None and self.reselect_every < 1:
            raise ValueError("reselect_every must be a positive window count")
        if self.pairs.h < 1:
            raise ValueError("rolling forecasts need a horizon of at least 1")
        if self.n_windows < 1:
            raise DataError(f"{self.pairs.data.T} pairs leave no forecast windows "
                            f"(window {self.window}, h={self.pairs.h})")
        labels = [m.label for m in self.models]
        if len(set(labels)) != len(labels):
            raise ValueError("model labels must be unique")

    @property
    def h(self) -> int:
        return self.pairs.h

    @property
    def n_windows(self) -> int:
        return self.pairs.data.T - self.window - self.h + 1

    def target_index(self, s: int) -> int:
        return s + self.window - 1 + self.h


FORECAST_COLUMNS = ("date", "estimator", "tau", "unsorted", "sorted", "realized")


@dataclass(frozen=True, eq=False)
class ForecastResult:
    grid: TauGrid
    dates: tuple[str, ...]
    realized: np.ndarray
    unsorted: dict  # label -> (n_windows, Q), nan rows where the fit failed
    sorted: dict
    hyperparameters: dict  # label -> per-window value, None without a hyperparameter
    failures: dict  # label -> list of (window, message)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.unsorted)

    def rows(self):
        for label in self.labels:
            for w, date in enumerate(self.dates):
                for q, tau in enumerate(self.grid.taus):
                    yield (date, label, tau, float(self.unsorted[label][w, q]),
                           float(self.sorted[label][w, q]), float(self.realized[w]))

    def write_csv(self, path) -> None:
        write_table(path, FORECAST_COLUMNS, self.rows())


def _run_model(ex: ForecastExercise, model: ForecastModel, seed):
    data = ex.pairs.data
    W, Q = ex.n_windows, ex.grid.Q
    raw = np.full((W, Q), np.nan)
    values: list = [None] * W
    failures = []
    value = model.value
    plan = CvPlan(ex.folds, ex.h)
    for s in range(W):
        train = data.subset(np.arange(s, s + ex.window))
        try:
            if model.selects and (value is None or s == 0 or (ex.reselect_every and s % ex.reselect_every == 0)):
                value = select(train, ex.grid, model.kind, model.hypergrid, plan, seed, ex.prescale)
            values[s] = value
            f = fit(train, ex.grid, EstimatorConfig.make(model.kind, value), prescale=ex.prescale)
        except QrfuseError as err:
            failures.append((s, str(err)))
            continue
        raw[s] = f.predict(data.X[ex.target_index(s)][None, :])[0]
    return raw, values, failures


def _call(args):
    return _run_model(*args)


def rolling_forecast(ex: ForecastExercise, seed=0, jobs: int = 1) -> ForecastResult:
    """Fit every model on each rolling window and forecast the next target.

    Models with a hypergrid select their hyperparameter by hv-block CV
    (gap = horizon) on the first window and keep it, re-selecting every
    ``reselect_every`` windows when that is set. Failed windows are kept as
    ``nan`` rows and listed in ``failures``.
    """
    tasks = [(ex, m, seed) for m in ex.models]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_call, tasks))
    else:
        results = [_call(t) for t in tasks]
    idx = [ex.target_index(s) for s in range(ex.n_windows)]
    realized = ex.pairs.data.y[idx].copy()
    dates = tuple(ex.pairs.dates[i] for i in idx)
    unsorted, srt, hyper, failures = {}, {}, {}, {}
    for m, (raw, values, fails) in zip(ex.models, results):
        unsorted[m.label] = raw
        srt[m.label] = sort_quantiles(raw)
        hyper[m.label] = values
        failures[m.label] = fails
    return ForecastResult(ex.grid, dates, realized, unsorted, srt, hyper, failures)


SCORE_COLUMNS = ("estimator", "crps", "crps_center", "crps_left",
                 "crps_sorted", "crps_center_sorted", "crps_left_sorted",
                 "log_score_sorted", "n_windows", "n_failed")


@dataclass(frozen=True)
class ScoreRow:
    estimator: str
    crps: tuple[float, float, float]
    crps_sorted: tuple[float, float, float]
    log_score: float
    n_windows: int
    n_failed: int

    def as_tuple(self):
        return (self.estimator, *self.crps, *self.crps_sorted, self.log_score,
                self.n_windows, self.n_failed)


def score_exercise(unsorted, sorted_, realized, grid: TauGrid) -> list[ScoreRow]:
    """Quantile-weighted CRPS (uniform, center, left) for unsorted and sorted
    forecasts plus the mean log score of the sorted ones, per estimator.

    ``unsorted`` and ``sorted_`` map labels to (n_windows, Q) arrays;
    windows with any ``nan`` are skipped and counted as failed.
    """
    y = np.asarray(realized, dtype=float)
    schemes = (WeightScheme.UNIFORM, WeightScheme.CENTER, WeightScheme.LEFT)
    rows = []
    for label in unsorted:
        raw = np.atleast_2d(np.asarray(unsorted[label], dtype=float))
        srt = np.atleast_2d(np.asarray(sorted_[label], dtype=float))
        ok = ~np.isnan(raw).any(axis=1)
        n_ok = int(ok.sum())
        if n_ok == 0:
            nan3 = (float("nan"),) * 3
            rows.append(ScoreRow(label, nan3, nan3, float("nan"), 0, len(ok)))
            continue
        qs_raw = quantile_score(y[ok], raw[ok], grid)
        qs_srt = quantile_score(y[ok], srt[ok], grid)
        crps = tuple(qwcrps(qs_raw, grid, s) for s in schemes)
        crps_s = tuple(qwcrps(qs_srt, grid, s) for s in schemes)
        ls = float("nan")
        if grid.Q >= 2:
            ls = float(np.mean([log_score(yt, f, grid) for yt, f in zip(y[ok], srt[ok])]))
        rows.append(ScoreRow(label, crps, crps_s, ls, n_ok, int((~ok).sum())))
    return rows


def write_scores(path, rows: Sequence[ScoreRow]) -> None:
    write_table(path, SCORE_COLUMNS, (r.as_tuple() for r in rows))


def ar1_heteroskedastic(n: int = 300, seed=0, phi: float = 0.5) -> tuple[Dataset, tuple[str, ...]]:
    """Synthetic AR(1) series whose shock scale grows with a stress index.

    Regressors are the target's own level and an AR(1) "conditions" index
    ``c_t``; ``y_t = 1 + phi y_{t-1} - 0.5 c_{t-1} + (1 + 0.5 |c_{t-1}|) e_t``.
    Returns the raw dataset (regressors at ``t``, target at ``t``) and
    quarterly ISO dates.
    """
    rng = np.random.default_rng(seed)
    c = np.zeros(n)
    y = np.zeros(n)
    y[0] = 2.0
    for t in range(1, n):
        c[t] = 0.8 * c[t - 1] + 0.5 * rng.standard_normal()
        y[t] = 1.0 + phi * y[t - 1] - 0.5 * c[t - 1] + (1.0 + 0.5 * abs(c[t - 1])) * rng.standard_normal()
    dates = tuple(_dt.date(1970 + t // 4, 3 * (t % 4) + 1, 1).isoformat() for t in range(n))
    return Dataset(np.column_stack([y, c]), y, ("y", "conditions")), dates
