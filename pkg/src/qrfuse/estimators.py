"""Joint quantile regression estimators as linear programs.

All estimators share one parameterisation. For quantile ``q`` and
variable ``j`` (``j = 0`` is the intercept) the coefficient difference
``gamma[j, q] = beta[j, q] - beta[j, q-1]`` (with ``beta[j, -1] = 0``) is
split into non-negative parts ``gamma_plus - gamma_minus``. Residuals are
split the same way, and the objective is the sum of tick losses over all
quantiles and observations.

* ``QR``    independent quantile regressions, nothing couples the quantiles.
* ``GNCQR`` adds, for every q >= 2, the adaptive non-crossing row::

      gamma0_q + sum_j [m_j - alpha (m_j - lo_j)] gamma_plus[j, q]
               >= sum_j [m_j + alpha (hi_j - m_j)] gamma_minus[j, q]

  with column mean ``m``, minimum ``lo`` and maximum ``hi``. ``alpha = 0``
  reproduces QR, ``alpha = 1`` is the worst-case (box) non-crossing
  constraint, and ``alpha -> inf`` forces equal slopes.
* ``BRW``   is GNCQR with ``alpha = 1``.
* ``FLQR``  adds ``lam * sum_{q>=2, j>=1} (gamma_plus + gamma_minus)`` to the
  objective (fused LASSO in penalised form; intercepts are not penalised).
* ``CQR``   one slope vector shared by all quantiles, quantile-specific
  intercepts.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import (
    AffineMap,
    Dataset,
    DimensionError,
    QrfuseError,
    TauGrid,
    fitted_quantiles,
    inverse_transform_coefficients,
    scale_symmetric,
    scale_to_unit,
    tick_loss,
)
from .lp import FEAS_TOL, LpProblem, LpSession, LpSolution, Status

CROSSING_TOL = 1e-8


class Kind(str, enum.Enum):
    QR = "QR"
    BRW = "BRW"
    GNCQR = "GNCQR"
    FLQR = "FLQR"
    CQR = "CQR"

    @property
    def hyperparameter(self) -> str | None:
        return {Kind.GNCQR: "alpha", Kind.FLQR: "lambda"}.get(self)


class EstimationError(QrfuseError):
    """The LP behind a fit did not reach a certified optimum."""

    def __init__(self, message: str, status: Status | None = None):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class EstimatorConfig:
    kind: Kind
    alpha: float | None = None
    lam: float | None = None

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if (self.alpha is not None) != (kind is Kind.GNCQR):
            raise ValueError("alpha must be given for GNCQR and only for GNCQR")
        if (self.lam is not None) != (kind is Kind.FLQR):
            raise ValueError("lambda must be given for FLQR and only for FLQR")
        for v in (self.alpha, self.lam):
            if v is not None and not (np.isfinite(v) and v >= 0):
                raise ValueError(f"hyperparameter must be finite and >= 0, got {v}")

    @classmethod
    def make(cls, kind, value: float | None = None) -> "EstimatorConfig":
        kind = Kind(kind)
        if kind is Kind.GNCQR:
            return cls(kind, alpha=float(value) if value is not None else None)
        if kind is Kind.FLQR:
            return cls(kind, lam=float(value) if value is not None else None)
        if value is not None:
            raise ValueError(f"{kind.value} takes no hyperparameter")
        return cls(kind)

    @property
    def value(self) -> float | None:
        return self.alpha if self.kind is Kind.GNCQR else self.lam

    def with_value(self, value: float) -> "EstimatorConfig":
        return EstimatorConfig.make(self.kind, value)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "alpha": self.alpha, "lambda": self.lam}


@dataclass(frozen=True, eq=False)
class GammaSolution:
    """Split quantile differences, arrays of shape (K+1, Q); row 0 is the intercept."""

    plus: np.ndarray
    minus: np.ndarray

    def __post_init__(self):
        plus = np.asarray(self.plus, dtype=float)
        minus = np.asarray(self.minus, dtype=float)
        if plus.shape != minus.shape or plus.ndim != 2:
            raise DimensionError("gamma parts must be equal-shape 2-d arrays")
        object.__setattr__(self, "plus", plus)
        object.__setattr__(self, "minus", minus)

    @property
    def difference(self) -> np.ndarray:
        return self.plus - self.minus

    def levels(self) -> np.ndarray:
        """Coefficient levels ``beta[j, q]`` by cumulative summation over q."""
        return np.cumsum(self.difference, axis=1)

    @classmethod
    def from_levels(cls, levels: np.ndarray) -> "GammaSolution":
        levels = np.asarray(levels, dtype=float)
        diff = np.diff(levels, axis=1, prepend=0.0)
        return cls(np.maximum(diff, 0.0), np.maximum(-diff, 0.0))


def canonicalize(g: GammaSolution) -> GammaSolution:
    """Keep at most one non-zero part per difference.

    Subtracting ``min(plus, minus)`` from both parts leaves every level
    unchanged and can only loosen the non-crossing rows, whose
    left-hand side moves by ``min * alpha * (hi - lo) >= 0``.
    """
    d = g.difference
    return GammaSolution(np.maximum(d, 0.0), np.maximum(-d, 0.0))


def sort_quantiles(fitted) -> np.ndarray:
    """Rearrange each row of fitted quantiles into ascending order."""
    return np.sort(np.asarray(fitted, dtype=float), axis=-1)


def crossing_rate(fitted, tol: float = CROSSING_TOL) -> float:
    fitted = np.asarray(fitted, dtype=float)
    if fitted.shape[-1] < 2:
        return 0.0
    crossed = np.any(np.diff(fitted, axis=-1) < -tol, axis=-1)
    return float(np.mean(crossed))


@dataclass(frozen=True)
class NonCrossingRow:
    """``plus . gamma_plus[:, q] >= minus . gamma_minus[:, q]``; entry 0 is the intercept."""

    plus: np.ndarray
    minus: np.ndarray

    def slack(self, gamma_plus, gamma_minus) -> float:
        return float(self.plus @ gamma_plus - self.minus @ gamma_minus)


def build_constraint_row(ds: Dataset, alpha: float) -> NonCrossingRow:
    """Coefficients of the adaptive non-crossing row, identical for every q >= 2."""
    if not (np.isfinite(alpha) and alpha >= 0):
        raise ValueError(f"alpha must be finite and >= 0, got {alpha}")
    ds.require_nonconstant()
    m, lo, hi = ds.stats.mean, ds.stats.min, ds.stats.max
    plus = np.concatenate([[1.0], m - alpha * (m - lo)])
    minus = np.concatenate([[1.0], m + alpha * (hi - m)])
    return NonCrossingRow(plus, minus)


@dataclass(frozen=True, eq=False)
class QuantileFit:
    taus: tuple[float, ...]
    xi: np.ndarray
    beta: np.ndarray
    gamma: GammaSolution
    objective: float
    estimator: EstimatorConfig
    crossing_rate: float
    names: tuple[str, ...] = ()
    lp_objective: float = float("nan")
    iterations: int = 0
    diagnostics: tuple[str, ...] = ()

    @property
    def Q(self) -> int:
        return len(self.taus)

    def predict(self, X) -> np.ndarray:
        return fitted_quantiles(self, X)

    def to_dict(self) -> dict:
        return {
            "taus": list(self.taus),
            "xi": self.xi.tolist(),
            "beta": self.beta.T.tolist(),
            "variables": list(self.names),
            "objective": self.objective,
            "estimator": self.estimator.to_dict(),
            "crossing_rate": self.crossing_rate,
            "diagnostics": list(self.diagnostics),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "QuantileFit":
        xi = np.asarray(d["xi"], dtype=float)
        beta = np.asarray(d["beta"], dtype=float).reshape(len(xi), -1).T
        est = d["estimator"]
        cfg = EstimatorConfig(Kind(est["kind"]), est.get("alpha"), est.get("lambda"))
        gamma = GammaSolution.from_levels(np.vstack([xi[None, :], beta]))
        return cls(tuple(d["taus"]), xi, beta, gamma, float(d["objective"]), cfg,
                   float(d["crossing_rate"]), tuple(d.get("variables", ())),
                   diagnostics=tuple(d.get("diagnostics", ())))

    def coefficient_rows(self):
        """Tidy ``(tau, variable, coefficient)`` rows, intercept first."""
        names = ("(intercept)",) + tuple(self.names)
        levels = np.vstack([self.xi[None, :], self.beta])
        for q, tau in enumerate(self.taus):
            for j, name in enumerate(names):
                yield tau, name, float(levels[j, q])

    def write_csv(self, path) -> None:
        lines = ["tau,variable,coefficient"]
        lines += [f"{tau!r},{name},{coef!r}" for tau, name, coef in self.coefficient_rows()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# LP assembly


@dataclass(frozen=True, eq=False)
class _Layout:
    T: int
    Kp: int
    Q: int
    active: np.ndarray  # (Q, Kp) bool, which gamma columns exist
    gidx: np.ndarray  # (Q, Kp) column of gamma_plus, -1 if absent
    n_gamma: int

    @classmethod
    def create(cls, T: int, K: int, Q: int, shared_slopes: bool) -> "_Layout":
        Kp = K + 1
        active = np.ones((Q, Kp), dtype=bool)
        if shared_slopes:
            active[1:, 1:] = False
        gidx = np.full((Q, Kp), -1)
        gidx[active] = np.arange(active.sum())
        return cls(T, Kp, Q, active, gidx, int(active.sum()))

    def plus_col(self, q, j):
        return self.gidx[q, j]

    def minus_col(self, q, j):
        return self.gidx[q, j] + self.n_gamma

    @property
    def u_offset(self) -> int:
        return 2 * self.n_gamma

    def gamma_from(self, z: np.ndarray) -> GammaSolution:
        plus = np.zeros((self.Q, self.Kp))
        minus = np.zeros((self.Q, self.Kp))
        plus[self.active] = z[: self.n_gamma]
        minus[self.active] = z[self.n_gamma: 2 * self.n_gamma]
        return GammaSolution(plus.T, minus.T)


def _penalised_columns(layout: _Layout) -> np.ndarray:
    cols = [layout.plus_col(q, j) for q in range(1, layout.Q) for j in range(1, layout.Kp)
            if layout.active[q, j]]
    cols = np.asarray(cols, dtype=int)
    return np.concatenate([cols, cols + layout.n_gamma])


def _row_entries(layout: _Layout, row: NonCrossingRow):
    """(row index, column, value) triples of all non-crossing rows in <= form."""
    scale = max(np.max(np.abs(row.plus)), np.max(np.abs(row.minus)))
    rows, cols, vals = [], [], []
    for q in range(1, layout.Q):
        for j in range(layout.Kp):
            rows += [q - 1, q - 1]
            cols += [layout.plus_col(q, j), layout.minus_col(q, j)]
            vals += [-row.plus[j] / scale, row.minus[j] / scale]
    return np.array(rows), np.array(cols), np.array(vals)


def _build(ds: Dataset, grid: TauGrid, cfg: EstimatorConfig) -> tuple[LpProblem, _Layout]:
    T, K, Q = ds.T, ds.K, grid.Q
    taus = grid.array
    layout = _Layout.create(T, K, Q, shared_slopes=cfg.kind is Kind.CQR)
    Z = np.column_stack([np.ones(T), ds.X])
    cum = sp.kron(sp.csr_matrix(np.tril(np.ones((Q, Q)))), sp.csr_matrix(Z), format="csc")
    G = cum[:, np.flatnonzero(layout.active.ravel())]
    eye = sp.identity(T * Q, format="csc")
    A_eq = sp.hstack([G, -G, eye, -eye], format="csr")
    b_eq = np.tile(ds.y, Q)

    c = np.zeros(2 * layout.n_gamma + 2 * T * Q)
    c[layout.u_offset: layout.u_offset + T * Q] = np.repeat(taus, T)
    c[layout.u_offset + T * Q:] = np.repeat(1.0 - taus, T)
    if cfg.kind is Kind.FLQR:
        c[_penalised_columns(layout)] = cfg.lam

    n = c.shape[0]
    if cfg.kind in (Kind.GNCQR, Kind.BRW) and Q > 1:
        alpha = 1.0 if cfg.kind is Kind.BRW else cfg.alpha
        r, cols, vals = _row_entries(layout, build_constraint_row(ds, alpha))
        A_ub = sp.csr_matrix((vals, (r, cols)), shape=(Q - 1, n))
        b_ub = np.zeros(Q - 1)
    else:
        A_ub, b_ub = None, None
    return LpProblem(c, A_eq, b_eq, A_ub, b_ub), layout


def build_problem(ds: Dataset, grid: TauGrid, cfg: EstimatorConfig) -> LpProblem:
    """The LP solved by :func:`fit`, on the covariates as given."""
    return _build(ds, grid, cfg)[0]


_PRESCALERS = {"none": None, "minmax": scale_to_unit, "symmetric": scale_symmetric}


def _prepare(ds: Dataset, cfg: EstimatorConfig, prescale: str):
    if prescale not in _PRESCALERS:
        raise ValueError(f"prescale must be one of {sorted(_PRESCALERS)}")
    if cfg.kind in (Kind.BRW, Kind.GNCQR):
        ds.require_nonconstant()
    scaler = _PRESCALERS[prescale]
    # unconstrained estimators tolerate constant columns; they are fitted unscaled
    constant = ds.K and np.any(ds.stats.max <= ds.stats.min)
    if scaler is None or ds.K == 0 or constant:
        return ds, AffineMap.identity(ds.K)
    return scaler(ds)


def _finish(ds: Dataset, grid: TauGrid, cfg: EstimatorConfig, layout: _Layout,
            sol: LpSolution, amap: AffineMap) -> QuantileFit:
    if not sol.ok:
        raise EstimationError(f"{cfg.kind.value} fit failed: LP status {sol.status.value}", sol.status)
    gamma = canonicalize(layout.gamma_from(sol.z))
    levels = gamma.levels()
    xi, beta = levels[0], levels[1:]
    if ds.K:
        xi, beta = inverse_transform_coefficients(xi, beta, amap)
        gamma = canonicalize(GammaSolution.from_levels(np.vstack([xi[None, :], beta])))
    fitted = xi[None, :] + ds.X @ beta
    loss = float(np.sum(tick_loss(ds.y[:, None] - fitted, grid.array[None, :])))
    diagnostics = ()
    if ds.T < ds.K + 1:
        diagnostics = (f"T={ds.T} < K+1={ds.K + 1}: the LP is degenerate, coefficients are not unique",)
    return QuantileFit(grid.taus, xi, beta, gamma, loss, cfg, crossing_rate(fitted), ds.names,
                       sol.objective, sol.iterations, diagnostics)


def fit(ds: Dataset, grid: TauGrid, cfg: EstimatorConfig, prescale: str = "minmax",
        tol: float = FEAS_TOL, max_iter: int | None = None) -> QuantileFit:
    """Solve the estimator's LP and return coefficients on the original covariate scale.

    ``prescale`` rescales covariates before solving ("minmax" onto [0, 1],
    "symmetric" onto mean-zero [-1, 1], or "none") and maps the solution
    back. QR, CQR, BRW and GNCQR are exactly equivariant under these
    affine maps, so the choice only affects numerics for them; for FLQR
    it sets the scale on which ``lam`` penalises slope differences.

    Raises :class:`EstimationError` when the LP is infeasible, unbounded or
    runs out of iterations (very large ``alpha`` can make it unstable).
    """
    if not isinstance(cfg, EstimatorConfig):
        cfg = EstimatorConfig.make(cfg)
    work, amap = _prepare(ds, cfg, prescale)
    problem, layout = _build(work, grid, cfg)
    sol = LpSession(problem, tol=tol, max_iter=max_iter).solve()
    return _finish(ds, grid, cfg, layout, sol, amap)


def fit_path(ds: Dataset, grid: TauGrid, kind, values: Sequence[float], prescale: str = "minmax",
             tol: float = FEAS_TOL, max_iter: int | None = None) -> list:
    """Fit GNCQR or FLQR for each hyperparameter in ``values``.

    Consecutive solves reuse the previous optimal basis. The result has one
    entry per value: a :class:`QuantileFit`, or the :class:`EstimationError`
    raised for that value.
    """
    kind = Kind(kind)
    if kind.hyperparameter is None:
        raise ValueError(f"{kind.value} has no hyperparameter to sweep")
    values = [float(v) for v in values]
    if not values:
        return []
    cfgs = [EstimatorConfig.make(kind, v) for v in values]
    work, amap = _prepare(ds, cfgs[0], prescale)
    problem, layout = _build(work, grid, cfgs[0])
    session = LpSession(problem, tol=tol, max_iter=max_iter)
    pen_cols = _penalised_columns(layout) if kind is Kind.FLQR else None
    out = []
    for i, cfg in enumerate(cfgs):
        if i and kind is Kind.GNCQR and grid.Q > 1:
            session.set_ub_coefficients(*_row_entries(layout, build_constraint_row(work, cfg.alpha)))
        elif i and kind is Kind.FLQR and pen_cols.size:
            session.set_costs(pen_cols, np.full(pen_cols.size, cfg.lam))
        try:
            out.append(_finish(ds, grid, cfg, layout, session.solve(), amap))
        except EstimationError as err:
            out.append(err)
    return out


def slope_spread(fit: QuantileFit) -> float:
    """Largest range of any slope across quantiles."""
    if fit.beta.size == 0:
        return 0.0
    return float(np.max(fit.beta.max(axis=1) - fit.beta.min(axis=1)))


def mean_tick_loss(fit: QuantileFit, ds: Dataset) -> float:
    """Average tick loss of ``fit`` on ``ds`` over observations and quantiles."""
    pred = fit.predict(ds.X)
    return float(np.mean(tick_loss(ds.y[:, None] - pred, np.asarray(fit.taus)[None, :])))
