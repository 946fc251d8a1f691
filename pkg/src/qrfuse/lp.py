"""Sparse linear programs over non-negative variables.

Problems have the form::

    minimise    c'z
    subject to  A_eq z == b_eq
                A_ub z <= b_ub
                z >= 0

Free variables are modelled by the caller as differences of two
non-negative columns. The default backend is the HiGHS dual simplex
(single-threaded, so results are reproducible); ``method="bland"`` runs a
dense two-phase tableau simplex with Bland's anti-cycling rule, meant for
small problems and for cross-checking.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import QrfuseError

FEAS_TOL = 1e-8
OPT_TOL = 1e-8


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


class MalformedProblem(QrfuseError, ValueError):
    pass


def _as_csr(A, n: int, name: str) -> sp.csr_matrix:
    if A is None:
        return sp.csr_matrix((0, n))
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    A.eliminate_zeros()
    if A.shape[1] != n:
        raise MalformedProblem(f"{name} has {A.shape[1]} columns, expected {n}")
    if not np.all(np.isfinite(A.data)):
        raise MalformedProblem(f"{name} has non-finite entries")
    return A


def _as_vec(b, m: int, name: str) -> np.ndarray:
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).ravel()
    if b.shape != (m,):
        raise MalformedProblem(f"{name} has length {b.shape[0]}, expected {m}")
    if not np.all(np.isfinite(b)):
        raise MalformedProblem(f"{name} has non-finite entries")
    return b


@dataclass(frozen=True, eq=False)
class LpProblem:
    c: np.ndarray
    A_eq: sp.csr_matrix | None = None
    b_eq: np.ndarray | None = None
    A_ub: sp.csr_matrix | None = None
    b_ub: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        if not np.all(np.isfinite(c)):
            raise MalformedProblem("objective has non-finite entries")
        n = c.shape[0]
        A_eq = _as_csr(self.A_eq, n, "A_eq")
        A_ub = _as_csr(self.A_ub, n, "A_ub")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A_eq", A_eq)
        object.__setattr__(self, "A_ub", A_ub)
        object.__setattr__(self, "b_eq", _as_vec(self.b_eq, A_eq.shape[0], "b_eq"))
        object.__setattr__(self, "b_ub", _as_vec(self.b_ub, A_ub.shape[0], "b_ub"))

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        return self.A_eq.shape[0] + self.A_ub.shape[0]

    def residuals(self, z: np.ndarray) -> tuple[float, float, float]:
        """Largest equality residual, inequality excess and negativity of ``z``."""
        eq = float(np.max(np.abs(self.A_eq @ z - self.b_eq), initial=0.0))
        ub = float(np.max(self.A_ub @ z - self.b_ub, initial=0.0))
        neg = float(max(0.0, -np.min(z, initial=0.0)))
        return eq, max(ub, 0.0), neg


@dataclass(frozen=True, eq=False)
class LpSolution:
    z: np.ndarray
    objective: float
    status: Status
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


def default_max_iter(p: LpProblem) -> int:
    return 50 * (p.n + p.n_rows)


def stack_problems(problems: Sequence[LpProblem]) -> LpProblem:
    """Block-diagonal concatenation: variables and rows are offset in order."""
    if not problems:
        raise MalformedProblem("need at least one problem to stack")
    if len(problems) == 1:
        return problems[0]
    return LpProblem(
        np.concatenate([p.c for p in problems]),
        sp.block_diag([p.A_eq for p in problems], format="csr"),
        np.concatenate([p.b_eq for p in problems]),
        sp.block_diag([p.A_ub for p in problems], format="csr"),
        np.concatenate([p.b_ub for p in problems]),
    )


def solve(p: LpProblem, tol: float = FEAS_TOL, max_iter: int | None = None, method: str = "highs") -> LpSolution:
    if not isinstance(p, LpProblem):
        raise MalformedProblem("solve expects an LpProblem")
    if max_iter is None:
        max_iter = default_max_iter(p)
    if method == "highs":
        return LpSession(p, tol=tol, max_iter=max_iter).solve()
    if method == "bland":
        from ._simplex import bland_simplex

        return bland_simplex(p, tol=tol, max_iter=max_iter)
    raise ValueError(f"unknown LP method {method!r}")


class LpSession:
    """A HiGHS model kept alive between solves.

    Changing objective or inequality coefficients and re-solving starts
    from the previous optimal basis, which is much faster when sweeping
    a hyperparameter. The sequence of solves is deterministic.
    """

    def __init__(self, p: LpProblem, tol: float = FEAS_TOL, max_iter: int | None = None):
        import highspy

        self._hs = highspy
        self.problem = p
        self.tol = tol
        self.max_iter = default_max_iter(p) if max_iter is None else max_iter
        self._c = p.c.copy()
        self._n_eq = p.A_eq.shape[0]
        h = highspy.Highs()
        for key, val in (
            ("output_flag", False),
            ("solver", "simplex"),
            ("simplex_strategy", 1),
            ("random_seed", 0),
            ("primal_feasibility_tolerance", tol),
            ("dual_feasibility_tolerance", OPT_TOL),
            ("simplex_iteration_limit", int(self.max_iter)),
        ):
            h.setOptionValue(key, val)
        A = sp.vstack([p.A_eq, p.A_ub], format="csc")
        A.sort_indices()
        lp = highspy.HighsLp()
        lp.num_col_ = p.n
        lp.num_row_ = A.shape[0]
        lp.col_cost_ = p.c
        lp.col_lower_ = np.zeros(p.n)
        lp.col_upper_ = np.full(p.n, np.inf)
        lp.row_lower_ = np.concatenate([p.b_eq, np.full(p.A_ub.shape[0], -np.inf)])
        lp.row_upper_ = np.concatenate([p.b_eq, p.b_ub])
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        h.passModel(lp)
        self._h = h

    def set_ub_coefficients(self, rows, cols, values) -> None:
        """Overwrite entries of ``A_ub`` (row indices local to ``A_ub``)."""
        for i, j, v in zip(np.atleast_1d(rows), np.atleast_1d(cols), np.atleast_1d(values)):
            self._h.changeCoeff(int(i) + self._n_eq, int(j), float(v))

    def set_costs(self, cols, values) -> None:
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int32))
        values = np.atleast_1d(np.asarray(values, dtype=float))
        self._c[cols] = values
        self._h.changeColsCost(len(cols), cols, values)

    def solve(self) -> LpSolution:
        h, hs = self._h, self._hs
        h.run()
        status = h.getModelStatus()
        if status == hs.HighsModelStatus.kUnboundedOrInfeasible:
            h.setOptionValue("presolve", "off")
            h.clearSolver()
            h.run()
            status = h.getModelStatus()
            h.setOptionValue("presolve", "choose")
        info = h.getInfo()
        iterations = int(info.simplex_iteration_count)
        if status == hs.HighsModelStatus.kOptimal:
            z = np.asarray(h.getSolution().col_value, dtype=float)
            z = np.where((z < 0) & (z >= -self.tol), 0.0, z)
            return LpSolution(z, float(self._c @ z), Status.OPTIMAL, iterations)
        mapped = {
            hs.HighsModelStatus.kInfeasible: Status.INFEASIBLE,
            hs.HighsModelStatus.kUnbounded: Status.UNBOUNDED,
        }.get(status, Status.ITERATION_LIMIT)
        # a failed solve leaves no trustworthy basis to warm-start from
        h.clearSolver()
        return LpSolution(np.full(self.problem.n, np.nan), float("nan"), mapped, iterations)


def write_problem(p: LpProblem, path) -> None:
    """Dump ``p`` as plain text for inspection.

    Format, one record per line::

        NVARS <n>
        C <j> <c_j>                  (non-zero objective entries)
        EQ <i> <b_i> <j>:<a_ij> ...  (equality rows)
        UB <i> <b_i> <j>:<a_ij> ...  (<= rows)

    Values use ``repr`` so the dump round-trips exactly.
    """
    lines = [f"NVARS {p.n}"]
    lines += [f"C {j} {float(p.c[j])!r}" for j in np.flatnonzero(p.c)]
    for tag, A, b in (("EQ", p.A_eq, p.b_eq), ("UB", p.A_ub, p.b_ub)):
        for i in range(A.shape[0]):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            terms = " ".join(f"{j}:{float(v)!r}" for j, v in zip(A.indices[lo:hi], A.data[lo:hi]))
            lines.append(f"{tag} {i} {float(b[i])!r} {terms}".rstrip())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_problem(path) -> LpProblem:
    n = 0
    c = None
    rows = {"EQ": [], "UB": []}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "NVARS":
            n = int(parts[1])
            c = np.zeros(n)
        elif parts[0] == "C":
            c[int(parts[1])] = float(parts[2])
        else:
            terms = [t.split(":") for t in parts[3:]]
            rows[parts[0]].append((float(parts[2]), [(int(j), float(v)) for j, v in terms]))

    def assemble(entries):
        A = sp.lil_matrix((len(entries), n))
        for i, (_, terms) in enumerate(entries):
            for j, v in terms:
                A[i, j] = v
        return A.tocsr(), np.array([b for b, _ in entries])

    A_eq, b_eq = assemble(rows["EQ"])
    A_ub, b_ub = assemble(rows["UB"])
    return LpProblem(c, A_eq, b_eq, A_ub, b_ub)
