"""Hyperparameter grids, (hv-)blocked cross-validation and grid search."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Dataset, QrfuseError, TauGrid
from .estimators import EstimationError, Kind, fit_path, mean_tick_loss


class SelectionError(QrfuseError):
    pass


@dataclass(frozen=True)
class HyperGrid:
    """Candidate hyperparameters in non-decreasing order (duplicates allowed)."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("hyperparameter grid is empty")
        if any(not (np.isfinite(v) and v >= 0) for v in vals):
            raise ValueError("hyperparameters must be finite and non-negative")
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise ValueError("hyperparameters must be sorted")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


def make_grid(n_linear: int, linear_hi: float, n_log: int, log_exp_hi: float) -> HyperGrid:
    """``n_linear`` points equally spaced on [0, linear_hi) followed by
    ``n_log`` powers of ten with exponents equally spaced on [0, log_exp_hi]."""
    if n_linear < 1 or n_log < 1:
        raise ValueError("point counts must be at least 1")
    if not (linear_hi > 0 and log_exp_hi >= 0):
        raise ValueError("need linear_hi > 0 and log_exp_hi >= 0")
    lin = np.linspace(0.0, linear_hi, n_linear, endpoint=False)
    logs = 10.0 ** np.linspace(0.0, log_exp_hi, n_log)
    values = np.concatenate([lin, logs])
    return HyperGrid(tuple(np.sort(values, kind="stable")))


@dataclass(frozen=True)
class CvPlan:
    """``fold_count`` contiguous validation blocks; ``h`` observations on each
    side of a block are dropped from training (``h = 0`` is plain k-fold).
    ``shuffle`` permutes rows once (seeded) before blocking, for cross-section data."""

    fold_count: int = 10
    h: int = 0
    shuffle: bool = False

    def __post_init__(self):
        if self.fold_count < 2:
            raise ValueError("need at least two folds")
        if self.h < 0:
            raise ValueError("gap h must be non-negative")


def cv_folds(T: int, plan: CvPlan, seed=None) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train, validation) index arrays, 0-based."""
    if plan.fold_count > T:
        raise SelectionError(f"{plan.fold_count} folds need at least as many observations, got T={T}")
    order = np.random.default_rng(seed).permutation(T) if plan.shuffle else np.arange(T)
    blocks = np.array_split(np.arange(T), plan.fold_count)
    folds = []
    for k, block in enumerate(blocks):
        lo, hi = block[0] - plan.h, block[-1] + plan.h
        pos = np.arange(T)
        train_pos = pos[(pos < lo) | (pos > hi)]
        if train_pos.size == 0:
            raise SelectionError(f"fold {k + 1} has an empty training set (T={T}, h={plan.h})")
        folds.append((order[train_pos], order[block]))
    return folds


@dataclass(frozen=True, eq=False)
class GridSearchResult:
    kind: Kind
    values: np.ndarray
    in_sample_loss: np.ndarray
    oos_loss: np.ndarray
    n_failed_folds: np.ndarray
    best_index: int

    @property
    def best(self) -> float:
        return float(self.values[self.best_index])

    def rows(self):
        for v, i, o, nf in zip(self.values, self.in_sample_loss, self.oos_loss, self.n_failed_folds):
            yield float(v), float(i), float(o), int(nf)

    def write_csv(self, path) -> None:
        lines = ["candidate,in_sample_loss,oos_loss,n_failed_folds"]
        lines += [f"{v!r},{i!r},{o!r},{nf}" for v, i, o, nf in self.rows()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _fold_losses(ds, train, valid, grid, kind, values, prescale):
    """Summed validation tick loss per candidate (nan where the fit failed)."""
    fits = fit_path(ds.subset(train), grid, kind, values, prescale=prescale)
    vds = ds.subset(valid)
    n = len(valid) * grid.Q
    return np.array([np.nan if isinstance(f, EstimationError) else mean_tick_loss(f, vds) * n
                     for f in fits])


def _in_sample(ds, grid, kind, values, prescale):
    fits = fit_path(ds, grid, kind, values, prescale=prescale)
    return np.array([np.nan if isinstance(f, EstimationError) else f.objective / (ds.T * grid.Q)
                     for f in fits])


def _call(args):
    fn, a = args
    return fn(*a)


def grid_search(ds: Dataset, grid: TauGrid, kind, hgrid, plan: CvPlan, seed=None,
                prescale: str = "minmax", jobs: int = 1, in_sample: bool = True) -> GridSearchResult:
    """Choose the hyperparameter with the lowest cross-validated tick loss.

    The out-of-sample score of a candidate is its tick loss averaged over
    every validation observation and quantile across all folds. A
    candidate whose fit fails on any fold is scored ``nan`` and skipped;
    ties go to the smaller hyperparameter. ``in_sample_loss`` is the
    average tick loss of the full-data fit.
    """
    kind = Kind(kind)
    if kind.hyperparameter is None:
        raise SelectionError(f"{kind.value} has no hyperparameter to select")
    values = list(hgrid.values if isinstance(hgrid, HyperGrid) else HyperGrid(tuple(hgrid)).values)
    folds = cv_folds(ds.T, plan, seed)
    tasks = [(_fold_losses, (ds, tr, va, grid, kind, values, prescale)) for tr, va in folds]
    if in_sample:
        tasks.append((_in_sample, (ds, grid, kind, values, prescale)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_call, tasks))
    else:
        results = [_call(t) for t in tasks]
    fold_sums = np.vstack(results[: len(folds)])
    ins = results[-1] if in_sample else np.full(len(values), np.nan)
    failed = np.isnan(fold_sums).sum(axis=0)
    oos = fold_sums.sum(axis=0) / (ds.T * grid.Q)
    oos[failed > 0] = np.nan
    if np.all(np.isnan(oos)):
        raise EstimationError(f"every {kind.value} candidate failed during cross-validation")
    best = int(np.nanargmin(oos))
    return GridSearchResult(kind, np.asarray(values), ins, oos, failed, best)


def select(ds: Dataset, grid: TauGrid, kind, hgrid: Sequence[float] | HyperGrid, plan: CvPlan,
           seed=None, prescale: str = "minmax", jobs: int = 1) -> float:
    """Shorthand for the selected value only (skips the full-data profile)."""
    return grid_search(ds, grid, kind, hgrid, plan, seed, prescale, jobs, in_sample=False).best
