"""Data containers, covariate rescaling, quantile grids and the tick loss."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class QrfuseError(Exception):
    """Base class for package errors."""


class DataError(QrfuseError):
    """Malformed or unusable input data."""


class ConstantColumnError(DataError):
    """A covariate has max == min, so it cannot be rescaled."""

    def __init__(self, column: str):
        super().__init__(f"covariate {column!r} is constant (max == min)")
        self.column = column


class DimensionError(QrfuseError, ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ColumnStats:
    min: np.ndarray
    mean: np.ndarray
    max: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    """Covariates ``X`` (T x K, no intercept column) and response ``y``.

    Column statistics are computed once at construction, so any subset
    (a CV fold, a rolling window) carries its own local statistics.
    """

    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...] = ()
    stats: ColumnStats = field(init=False, repr=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise DimensionError("X must be a 2-d array")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if y.shape[0] < 1:
            raise DataError("dataset needs at least one observation")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains non-finite values")
        names = tuple(self.names) if self.names else tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DimensionError("one name per covariate column is required")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "names", names)
        if X.shape[1]:
            stats = ColumnStats(_frozen(X.min(axis=0)), _frozen(X.mean(axis=0)), _frozen(X.max(axis=0)))
        else:
            empty = _frozen(np.zeros(0))
            stats = ColumnStats(empty, empty, empty)
        object.__setattr__(self, "stats", stats)

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def K(self) -> int:
        return self.X.shape[1]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.X[index], self.y[index], self.names)

    def require_nonconstant(self) -> None:
        for j in range(self.K):
            if not self.stats.max[j] > self.stats.min[j]:
                raise ConstantColumnError(self.names[j])

    def with_X(self, X: np.ndarray) -> "Dataset":
        return Dataset(X, self.y, self.names)


@dataclass(frozen=True)
class TauGrid:
    """Strictly increasing quantile levels inside (0, 1)."""

    taus: tuple[float, ...]

    def __post_init__(self):
        taus = tuple(float(t) for t in np.atleast_1d(np.asarray(self.taus, dtype=float)))
        if not taus:
            raise ValueError("a tau grid needs at least one quantile level")
        if any(not (0.0 < t < 1.0) for t in taus):
            raise ValueError(f"quantile levels must lie in (0, 1): {taus}")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError(f"quantile levels must be strictly increasing: {taus}")
        object.__setattr__(self, "taus", taus)

    @classmethod
    def equispaced(cls, start: float, stop: float, step: float) -> "TauGrid":
        """Grid ``start, start+step, ...`` up to and including ``stop``.

        Levels are rounded to 10 decimals so that e.g. 0.1 + 4 * 0.2 is
        stored as 0.9.
        """
        if step <= 0:
            raise ValueError("step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return cls(tuple(round(start + k * step, 10) for k in range(n)))

    @classmethod
    def parse(cls, text: str) -> "TauGrid":
        """Parse ``"0.1:0.9:0.1"`` (start:stop:step) or ``"0.1,0.5,0.9"``."""
        text = text.strip()
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError(f"expected start:stop:step, got {text!r}")
            return cls.equispaced(*parts)
        return cls(tuple(float(p) for p in text.split(",") if p.strip()))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.taus)

    @property
    def Q(self) -> int:
        return len(self.taus)

    def __len__(self) -> int:
        return len(self.taus)


@dataclass(frozen=True)
class AffineMap:
    """Per-column map ``x_scaled = (x - shift) / scale``."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        shift = _frozen(np.atleast_1d(self.shift))
        scale = _frozen(np.atleast_1d(self.scale))
        if shift.shape != scale.shape:
            raise DimensionError("shift and scale must have the same length")
        if np.any(~(scale > 0)) or not np.all(np.isfinite(shift)):
            raise ValueError("scales must be positive and shifts finite")
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def identity(cls, K: int) -> "AffineMap":
        return cls(np.zeros(K), np.ones(K))

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.shift) / self.scale

    def invert(self, X_scaled: np.ndarray) -> np.ndarray:
        return np.asarray(X_scaled, dtype=float) * self.scale + self.shift


def tick_loss(u, tau):
    """Check loss ``u * (tau - 1{u < 0})``; vectorised over ``u`` and ``tau``."""
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(~((tau_arr > 0) & (tau_arr < 1))):
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    u_arr = np.asarray(u, dtype=float)
    out = np.where(u_arr < 0, (tau_arr - 1.0) * u_arr, tau_arr * u_arr)
    if out.ndim == 0:
        return float(out)
    return out


def scale_to_unit(ds: Dataset) -> tuple[Dataset, AffineMap]:
    """Min-max rescale every covariate onto [0, 1].

    The minimum maps to exactly 0 and the maximum to exactly 1.
    """
    ds.require_nonconstant()
    lo, hi = ds.stats.min, ds.stats.max
    amap = AffineMap(lo, hi - lo)
    return ds.with_X(amap.apply(ds.X)), amap


def scale_symmetric(ds: Dataset) -> tuple[Dataset, AffineMap]:
    """Standardise each column then divide by its largest absolute value.

    Columns end up mean zero inside [-1, 1]; at least one end touches +-1.
    """
    ds.require_nonconstant()
    mean = ds.stats.mean
    sd = ds.X.std(axis=0)
    z = (ds.X - mean) / sd
    amap = AffineMap(mean, sd * np.abs(z).max(axis=0))
    return ds.with_X(amap.apply(ds.X)), amap


def inverse_transform_coefficients(intercept, slopes, amap: AffineMap):
    """Map coefficients fitted on ``amap``-scaled covariates back to the raw scale.

    ``slopes`` is (K,) or (K, Q); ``intercept`` is a scalar or (Q,).
    Returns ``(intercept, slopes)`` such that fitted values agree on every x.
    """
    slopes = np.asarray(slopes, dtype=float)
    K = amap.shift.shape[0]
    if slopes.shape[0] != K:
        raise DimensionError(f"expected {K} slope rows, got {slopes.shape[0]}")
    factor = 1.0 / amap.scale
    if slopes.ndim == 1:
        raw = slopes * factor
        return float(intercept - raw @ amap.shift), raw
    raw = slopes * factor[:, None]
    intercept = np.asarray(intercept, dtype=float)
    if intercept.shape != (slopes.shape[1],):
        raise DimensionError("one intercept per quantile is required")
    return intercept - amap.shift @ raw, raw


def fitted_quantiles(fit, X) -> np.ndarray:
    """T x Q matrix of ``xi_q + x_t' beta_q`` for a fit exposing ``xi`` and ``beta``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    beta = np.asarray(fit.beta)
    if X.shape[1] != beta.shape[0]:
        raise DimensionError(f"X has {X.shape[1]} columns, fit expects {beta.shape[0]}")
    return np.asarray(fit.xi)[None, :] + X @ beta


def read_csv(path, response: str, exclude: Iterable[str] = (), columns: Sequence[str] | None = None) -> Dataset:
    """Load a Dataset from a header-first, comma-delimited UTF-8 file.

    Every numeric column except the response and ``exclude`` becomes a
    covariate unless ``columns`` names them explicitly. Columns with any
    non-numeric, non-empty cell are treated as non-numeric and skipped.
    Missing cells in a used column raise :class:`DataError` listing the
    (1-based, header excluded) row numbers.
    """
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if response not in header:
        raise DataError(f"{path}: response column {response!r} not found")
    for i, r in enumerate(rows, start=1):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i} has {len(r)} fields, header has {len(header)}")
    excluded = set(exclude) | {response}

    def parse(col):
        vals, missing = [], []
        for i, r in enumerate(rows, start=1):
            cell = r[col].strip()
            if cell == "" or cell.upper() in ("NA", "NAN"):
                missing.append(i)
                vals.append(np.nan)
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                return None, missing
        return np.array(vals), missing

    if columns is None:
        use = []
        for j, name in enumerate(header):
            if name in excluded:
                continue
            vals, _ = parse(j)
            if vals is not None:
                use.append(name)
    else:
        use = list(columns)
        for name in use:
            if name not in header:
                raise DataError(f"{path}: column {name!r} not found")
    data = {}
    for name in [response, *use]:
        vals, missing = parse(header.index(name))
        if vals is None:
            raise DataError(f"{path}: column {name!r} is not numeric")
        if missing:
            raise DataError(f"{path}: column {name!r} has missing values in rows {missing}")
        data[name] = vals
    X = np.column_stack([data[n] for n in use]) if use else np.zeros((len(rows), 0))
    return Dataset(X, data[response], tuple(use))
