"""Dense two-phase tableau simplex with Bland's rule.

Only suitable for small problems; used as an independent check on the
HiGHS backend.
"""

import numpy as np

from .lp import LpProblem, LpSolution, Status


def _pivot(tab: np.ndarray, r: int, k: int) -> None:
    tab[r] /= tab[r, k]
    col = tab[:, k].copy()
    col[r] = 0.0
    tab -= np.outer(col, tab[r])


def _run(tab, basis, cost_row, allowed, tol, budget):
    """Minimise with the reduced costs stored in ``tab[cost_row]``."""
    m = len(basis)
    it = 0
    while True:
        red = tab[cost_row, :-1]
        entering = next((j for j in np.flatnonzero(allowed) if red[j] < -tol), None)
        if entering is None:
            return "optimal", it
        if it >= budget:
            return "limit", it
        col = tab[:m, entering]
        cand = np.flatnonzero(col > tol)
        if cand.size == 0:
            return "unbounded", it
        ratios = tab[cand, -1] / col[cand]
        best = ratios.min()
        ties = cand[ratios <= best + tol * max(1.0, abs(best))]
        r = min(ties, key=lambda i: basis[i])
        _pivot(tab, r, entering)
        basis[r] = entering
        it += 1


def bland_simplex(p: LpProblem, tol: float = 1e-9, max_iter: int = 10_000) -> LpSolution:
    n = p.n
    A_eq = p.A_eq.toarray()
    A_ub = p.A_ub.toarray()
    m_eq, m_ub = A_eq.shape[0], A_ub.shape[0]
    m = m_eq + m_ub
    # columns: original n, slacks m_ub, artificials m
    A = np.zeros((m, n + m_ub))
    A[:m_eq, :n] = A_eq
    A[m_eq:, :n] = A_ub
    A[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([p.b_eq, p.b_ub])
    neg = b < 0
    A[neg] *= -1
    b = np.where(neg, -b, b)
    n_real = n + m_ub
    tab = np.zeros((m + 2, n_real + m + 1))
    tab[:m, :n_real] = A
    tab[:m, n_real:n_real + m] = np.eye(m)
    tab[:m, -1] = b
    tab[m, :n] = p.c
    tab[m + 1, :n_real] = -A.sum(axis=0)
    tab[m + 1, -1] = -b.sum()
    basis = list(range(n_real, n_real + m))

    allowed = np.ones(n_real + m, dtype=bool)
    state, it1 = _run(tab, basis, m + 1, allowed, tol, max_iter)
    if state == "limit":
        return LpSolution(np.full(n, np.nan), float("nan"), Status.ITERATION_LIMIT, it1)
    if -tab[m + 1, -1] > max(tol, 1e-7) * max(1.0, b.sum()):
        return LpSolution(np.full(n, np.nan), float("nan"), Status.INFEASIBLE, it1)

    # drive remaining artificials out of the basis
    keep = []
    for r in range(m):
        if basis[r] >= n_real:
            nz = np.flatnonzero(np.abs(tab[r, :n_real]) > tol)
            if nz.size:
                _pivot(tab, r, nz[0])
                basis[r] = nz[0]
                keep.append(r)
        else:
            keep.append(r)
    rows = keep + [m]
    tab = tab[rows][:, list(range(n_real)) + [tab.shape[1] - 1]]
    basis = [basis[r] for r in keep]
    allowed = np.ones(n_real, dtype=bool)
    state, it2 = _run(tab, basis, len(basis), allowed, tol, max_iter - it1)
    iters = it1 + it2
    if state == "unbounded":
        return LpSolution(np.full(n, np.nan), float("nan"), Status.UNBOUNDED, iters)
    if state == "limit":
        return LpSolution(np.full(n, np.nan), float("nan"), Status.ITERATION_LIMIT, iters)
    x = np.zeros(n_real)
    for r, j in enumerate(basis):
        x[j] = tab[r, -1]
    z = np.where(np.abs(x[:n]) < tol, 0.0, x[:n])
    return LpSolution(z, float(p.c @ z), Status.OPTIMAL, iters)
