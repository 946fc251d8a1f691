"""Fit, selection and forecast evaluation measures."""

from __future__ import annotations

import enum
from pathlib import Path

import numpy as np

from .core import TauGrid, tick_loss

DETECTION_TOL = 1e-4
DENSITY_FLOOR = 1e-10


def rmise(estimated, true) -> tuple[np.ndarray, np.ndarray]:
    """Average root mean integrated squared error (x100) and its standard error.

    ``estimated`` and ``true`` have shape (n_reps, n_points) or
    (n_reps, n_points, Q). For each replication the squared error is
    averaged over evaluation points and square-rooted; the result is the
    mean over replications, with standard error ``sd / sqrt(n_reps)``.
    """
    est = np.asarray(estimated, dtype=float)
    tru = np.asarray(true, dtype=float)
    if est.shape != tru.shape or est.ndim < 2:
        raise ValueError(f"shape mismatch: {est.shape} vs {tru.shape}")
    n = est.shape[0]
    if n < 2:
        raise ValueError("need at least two replications")
    root = np.sqrt(np.mean((est - tru) ** 2, axis=1))
    return 100.0 * root.mean(axis=0), 100.0 * root.std(axis=0, ddof=1) / np.sqrt(n)


def tpr_tnr(differences, truth, tol: float = DETECTION_TOL) -> tuple[float, float | None]:
    """Pooled true positive / true negative rates of detected slope differences.

    ``differences`` is a sequence of (K, Q-1) arrays of estimated slope
    differences ``gamma[j, q]`` for q >= 2 (a GammaSolution's
    ``difference[1:, 1:]``), or GammaSolutions themselves. A difference is
    detected when its magnitude exceeds ``tol``. TNR is ``None`` when the
    truth has no zero entries.
    """
    if not tol > 0:
        raise ValueError("detection tolerance must be positive")
    truth = np.asarray(truth, dtype=bool)
    tp = fn = tn = fp = 0
    for d in differences:
        if hasattr(d, "difference"):
            d = d.difference[1:, 1:]
        d = np.asarray(d, dtype=float)
        if d.shape != truth.shape:
            raise ValueError(f"estimate shape {d.shape} does not match truth {truth.shape}")
        hit = np.abs(d) > tol
        tp += int(np.sum(hit & truth))
        fn += int(np.sum(~hit & truth))
        tn += int(np.sum(~hit & ~truth))
        fp += int(np.sum(hit & ~truth))
    tpr = tp / (tp + fn) if tp + fn else float("nan")
    tnr = tn / (tn + fp) if tn + fp else None
    return tpr, tnr


def quantile_score(y, forecast, grid: TauGrid) -> np.ndarray:
    """Tick loss of the realised value(s) against each forecast quantile."""
    forecast = np.asarray(forecast, dtype=float)
    if forecast.shape[-1] != grid.Q:
        raise ValueError(f"expected {grid.Q} forecast quantiles, got {forecast.shape[-1]}")
    y = np.asarray(y, dtype=float)
    if y.ndim:
        y = y[..., None]
    return np.asarray(tick_loss(y - forecast, grid.array))


class WeightScheme(str, enum.Enum):
    UNIFORM = "uniform"
    CENTER = "center"
    LEFT = "left"

    def weights(self, taus) -> np.ndarray:
        """Weight function evaluated at each quantile level.

        The quadrature applies a further ``1/Q``, so uniform weights of one
        make the score the plain mean quantile score.
        """
        taus = np.asarray(taus, dtype=float)
        if self is WeightScheme.UNIFORM:
            return np.ones_like(taus)
        if self is WeightScheme.CENTER:
            return taus * (1.0 - taus)
        return (1.0 - taus) ** 2


def qwcrps(scores, grid: TauGrid, scheme=WeightScheme.UNIFORM) -> float:
    """Quantile-weighted CRPS: ``(1/Q) sum_q w(tau_q) QS[t, q]`` averaged over t."""
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    if scores.shape[-1] != grid.Q:
        raise ValueError(f"expected {grid.Q} quantile columns, got {scores.shape[-1]}")
    w = WeightScheme(scheme).weights(grid.array)
    return float(np.mean(scores @ w) / grid.Q)


def log_score(y, forecast, grid: TauGrid) -> float:
    """Log predictive density at ``y`` from sorted forecast quantiles.

    The CDF is interpolated linearly between the points ``(forecast_q, tau_q)``;
    outside the forecast range the nearest bin's density is extended.
    Zero-width bins and tiny densities are floored at ``1e-10``.
    """
    f = np.asarray(forecast, dtype=float)
    if grid.Q < 2 or f.shape != (grid.Q,):
        raise ValueError("log score needs one forecast per quantile and at least two quantiles")
    if np.any(np.diff(f) < 0):
        raise ValueError("forecast quantiles must be sorted; apply sort_quantiles first")
    k = int(np.clip(np.searchsorted(f, y, side="left") - 1, 0, grid.Q - 2))
    # a zero-width bin that contains y takes precedence over its neighbours
    flat = np.flatnonzero((f[:-1] == y) & (f[1:] == y))
    if flat.size:
        k = int(flat[0])
    width = f[k + 1] - f[k]
    mass = grid.taus[k + 1] - grid.taus[k]
    density = mass / width if width > 0 else 0.0
    return float(np.log(max(density, DENSITY_FLOOR)))


def interpolated_density(forecast, grid: TauGrid):
    """Bin edges and densities used by :func:`log_score` (for checks and plots)."""
    f = np.asarray(forecast, dtype=float)
    width = np.diff(f)
    mass = np.diff(grid.array)
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(width > 0, mass / np.where(width > 0, width, 1.0), 0.0)
    return f, dens


def write_table(path, header, rows) -> None:
    """Minimal CSV writer; floats use repr so files are byte-stable."""
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(float(v))
        return str(v)

    lines = [",".join(header)] + [",".join(fmt(v) for v in r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
