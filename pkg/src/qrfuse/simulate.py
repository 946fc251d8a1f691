"""Location-scale Monte Carlo designs and the replication runner.

Responses follow::

    y_t = b0 + b'x_t + (t0 + (v_t * theta)'x_t) e_t,   x_tk ~ U(0,1),  e_t ~ N(0,1)

where ``v_t`` switches gated covariates on only when ``|e_t|`` reaches the
0.9 quantile of ``|N(0,1)|``'s two-sided tail, i.e. in the lowest and highest
10% of the error distribution.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .core import Dataset, TauGrid, inverse_transform_coefficients, scale_to_unit
from .estimators import EstimationError, EstimatorConfig, Kind, fit
from .metrics import DETECTION_TOL, rmise, tpr_tnr, write_table
from .selection import CvPlan, HyperGrid, SelectionError, select

TAIL_LEVEL = 0.9
LOWER_TAIL = round(1.0 - TAIL_LEVEL, 12)  # 0.1 exactly, not 0.09999999999999998
GATE_CUTOFF = float(norm.ppf(TAIL_LEVEL))
ZERO_TRUTH = 1e-12


@dataclass(frozen=True, eq=False)
class DgpSpec:
    name: str
    beta: np.ndarray
    theta: np.ndarray
    gated: np.ndarray
    beta0: float = 1.0
    theta0: float = 1.0

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        gated = np.asarray(self.gated, dtype=bool)
        if not (beta.shape == theta.shape == gated.shape) or beta.ndim != 1:
            raise ValueError("beta, theta and gated must be equal-length vectors")
        if np.any(theta < 0):
            raise ValueError("scale loadings must be non-negative")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "gated", gated)

    @property
    def K(self) -> int:
        return self.beta.shape[0]

    def theta_at(self, tau) -> np.ndarray:
        """Scale loadings in force at quantile level ``tau``."""
        in_tail = tau <= LOWER_TAIL or tau >= TAIL_LEVEL
        return self.theta if in_tail else np.where(self.gated, 0.0, self.theta)


def _pad(head, K):
    return np.concatenate([head, np.zeros(K - len(head))])


def dgp(name: str) -> DgpSpec:
    """The four standard designs ``y1`` .. ``y4``.

    ``y4`` carries scale loading 0.1 on covariates 1-8 with 5-8 gated to
    the tails, so those covariates vary only in the outer quantiles.
    """
    one4, tenth4 = np.ones(4), np.full(4, 0.1)
    if name == "y1":
        return DgpSpec("y1", one4, tenth4, np.zeros(4, bool))
    if name == "y2":
        return DgpSpec("y2", _pad(one4, 10), _pad(tenth4, 10), np.zeros(10, bool))
    if name == "y3":
        return DgpSpec("y3", np.ones(7), _pad(np.ones(3), 7), np.zeros(7, bool))
    if name == "y4":
        gated = np.zeros(10, bool)
        gated[4:8] = True
        return DgpSpec("y4", _pad(one4, 10), _pad(np.full(8, 0.1), 10), gated)
    raise ValueError(f"unknown design {name!r}; expected y1, y2, y3 or y4")


def generate_response(spec: DgpSpec, X: np.ndarray, eps: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    eps = np.asarray(eps, dtype=float)
    tail = np.abs(eps) >= GATE_CUTOFF
    loadings = np.where(spec.gated[None, :] & ~tail[:, None], 0.0, spec.theta[None, :])
    scale = spec.theta0 + np.sum(loadings * X, axis=1)
    return spec.beta0 + X @ spec.beta + scale * eps


@dataclass(frozen=True, eq=False)
class Replication:
    seed: int
    data: Dataset
    eps: np.ndarray
    eval_X: np.ndarray


def draw(spec: DgpSpec, T: int, seed, n_eval: int = 1000) -> Replication:
    """One simulated dataset plus fresh uniform points for RMISE evaluation."""
    rng = np.random.default_rng(seed)
    X = rng.random((T, spec.K))
    eps = rng.standard_normal(T)
    eval_X = rng.random((n_eval, spec.K))
    return Replication(seed, Dataset(X, generate_response(spec, X, eps)), eps, eval_X)


def true_slopes(spec: DgpSpec, tau: float) -> np.ndarray:
    return spec.beta + spec.theta_at(tau) * norm.ppf(tau)


def true_quantile(spec: DgpSpec, x, tau) -> np.ndarray | float:
    """Conditional quantile ``b0 + b'x + (t0 + theta_tau'x) * Phi^-1(tau)``."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    x = np.asarray(x, dtype=float)
    z = norm.ppf(tau)
    val = spec.beta0 + spec.theta0 * z + x @ true_slopes(spec, tau)
    return float(val) if np.ndim(val) == 0 else val


def selection_truth(spec: DgpSpec, grid: TauGrid) -> np.ndarray:
    """(K, Q-1) boolean mask of slope differences that are truly non-zero."""
    slopes = np.column_stack([true_slopes(spec, t) for t in grid.taus])
    return np.abs(np.diff(slopes, axis=1)) > ZERO_TRUTH


@dataclass(frozen=True)
class EstimatorSpec:
    """An estimator in a Monte Carlo run; ``hypergrid`` triggers CV selection."""

    kind: Kind
    hypergrid: HyperGrid | None = None

    @property
    def label(self) -> str:
        return Kind(self.kind).value


def default_estimators(hypergrid: HyperGrid) -> list[EstimatorSpec]:
    return [EstimatorSpec(Kind.BRW), EstimatorSpec(Kind.GNCQR, hypergrid),
            EstimatorSpec(Kind.QR), EstimatorSpec(Kind.FLQR, hypergrid)]


def _replicate(spec, T, grid, estimators, rep_seed, folds, n_eval):
    rep = draw(spec, T, rep_seed, n_eval)
    scaled, amap = scale_to_unit(rep.data)
    out = []
    for est in estimators:
        kind = Kind(est.kind)
        try:
            value = None
            if kind.hyperparameter is not None:
                plan = CvPlan(folds, 0, shuffle=True)
                value = select(scaled, grid, kind, est.hypergrid, plan, seed=rep_seed, prescale="none")
            f = fit(scaled, grid, EstimatorConfig.make(kind, value), prescale="none")
        except (EstimationError, SelectionError) as err:
            out.append({"error": str(err)})
            continue
        xi, beta = inverse_transform_coefficients(f.xi, f.beta, amap)
        out.append({
            "pred": xi[None, :] + rep.eval_X @ beta,
            "diff": f.gamma.difference[1:, 1:],
            "value": value,
        })
    truth = np.column_stack([true_quantile(spec, rep.eval_X, t) for t in grid.taus])
    return out, truth


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    dgp: str
    T: int
    grid: TauGrid
    labels: tuple[str, ...]
    rmise: dict  # label -> (mean (Q,), se (Q,))
    rates: dict  # label -> (tpr, tnr or None)
    n_failed: dict
    selected: dict  # label -> list of chosen hyperparameters

    @property
    def dtau(self) -> float:
        return round(self.grid.taus[1] - self.grid.taus[0], 10) if self.grid.Q > 1 else float("nan")

    def rmise_rows(self):
        for label in self.labels:
            if label not in self.rmise:
                continue
            mean, se = self.rmise[label]
            for q, tau in enumerate(self.grid.taus):
                yield label, self.dgp, self.T, self.dtau, tau, float(mean[q]), float(se[q])

    def rate_rows(self):
        for label in self.labels:
            tpr, tnr = self.rates.get(label, (float("nan"), None))
            yield label, self.dgp, self.T, self.dtau, tpr, tnr, self.n_failed[label]

    def write_csv(self, rmise_path, rates_path) -> None:
        write_table(rmise_path, ["estimator", "dgp", "T", "dtau", "tau", "rmise", "std_err"],
                    self.rmise_rows())
        write_table(rates_path, ["estimator", "dgp", "T", "dtau", "tpr", "tnr", "n_failed"],
                    self.rate_rows())


def _call(args):
    return _replicate(*args)


def run_experiment(spec: DgpSpec | str, T: int, grid: TauGrid, estimators: Sequence[EstimatorSpec],
                   n_reps: int = 500, seed: int = 0, folds: int = 10, n_eval: int = 1000,
                   jobs: int = 1) -> ExperimentResult:
    """Simulate ``n_reps`` datasets and score every estimator on each.

    Each replication is drawn, min-max scaled, tuned by shuffled k-fold CV
    where the estimator has a hyperparameter, and fitted. Fits are scored
    against the true conditional quantiles at ``n_eval`` fresh points and
    their scaled-covariate slope differences against the known sparsity
    pattern. Failed replications are dropped and counted per estimator.
    """
    if isinstance(spec, str):
        spec = dgp(spec)
    rep_seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(n_reps)]
    tasks = [(spec, T, grid, list(estimators), s, folds, n_eval) for s in rep_seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_call, tasks, chunksize=max(1, n_reps // (4 * jobs))))
    else:
        results = [_call(t) for t in tasks]

    truth_mask = selection_truth(spec, grid)
    labels = tuple(e.label for e in estimators)
    table, rates, failed, chosen = {}, {}, {}, {}
    for i, label in enumerate(labels):
        ok = [(r[0][i], r[1]) for r in results if "error" not in r[0][i]]
        failed[label] = len(results) - len(ok)
        chosen[label] = [o["value"] for o, _ in ok]
        if len(ok) >= 2:
            table[label] = rmise(np.stack([o["pred"] for o, _ in ok]), np.stack([t for _, t in ok]))
        if ok and grid.Q > 1:
            rates[label] = tpr_tnr([o["diff"] for o, _ in ok], truth_mask, DETECTION_TOL)
    return ExperimentResult(spec.name, T, grid, labels, table, rates, failed, chosen)
