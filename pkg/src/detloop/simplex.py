"""Feasibility of {w >= 0 : A w = b} by a dense phase-one simplex with Bland's rule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError

PIVOT_TOL = 1e-11
FEASIBILITY_TOL = 1e-9


@dataclass
class LPResult:
    feasible: bool
    x: np.ndarray | None
    residual: float
    iterations: int = 0


def phase_one(A, b, max_iterations: int = 200_000) -> LPResult:
    """Minimize the sum of artificial variables from the all-artificial basis.

    Entering column: lowest index with negative reduced cost. Leaving row:
    minimum ratio, ties broken by lowest basic-variable index. Bland's rule
    guarantees termination on degenerate problems.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1

    # tableau columns: originals, artificials, rhs
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = np.arange(n, n + m)

    iterations = 0
    while True:
        reduced = T[m, : n + m]
        candidates = np.flatnonzero(reduced < -PIVOT_TOL)
        if candidates.size == 0:
            break
        if iterations >= max_iterations:
            raise SolverError(f"simplex did not finish in {max_iterations} pivots", residual=float(-T[m, -1]))
        col = candidates[0]
        column = T[:m, col]
        rows = np.flatnonzero(column > PIVOT_TOL)
        if rows.size == 0:
            raise SolverError("phase-one objective unbounded; tableau is corrupt")
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        row = tied[np.argmin(basis[tied])]
        T[row] /= T[row, col]
        factors = T[:, col].copy()
        factors[row] = 0.0
        T -= np.outer(factors, T[row])
        basis[row] = col
        iterations += 1

    infeasibility = max(0.0, -float(T[m, -1]))
    if infeasibility > FEASIBILITY_TOL:
        return LPResult(False, None, infeasibility, iterations)

    x = np.zeros(n)
    original = basis < n
    x[basis[original]] = np.maximum(T[:m, -1][original], 0.0)
    x = _polish(A, b, x)
    residual = float(np.max(np.abs(A @ x - b))) if m else 0.0
    return LPResult(True, x, residual, iterations)


def _polish(A, b, x):
    """Re-solve on the support by least squares; keep it only if it helps and stays nonnegative."""
    support = np.flatnonzero(x > 0)
    if support.size == 0:
        return x
    sol, *_ = np.linalg.lstsq(A[:, support], b, rcond=None)
    if np.all(sol >= 0):
        refined = np.zeros_like(x)
        refined[support] = sol
        if np.max(np.abs(A @ refined - b)) <= np.max(np.abs(A @ x - b)):
            return refined
    return x


def highs_feasibility(A, b) -> LPResult:
    """Same contract, backed by scipy's HiGHS solver."""
    from scipy.optimize import linprog

    A = np.asarray(A, dtype=float)
    res = linprog(np.zeros(A.shape[1]), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status == 2:
        return LPResult(False, None, float("nan"))
    if res.status != 0:
        raise SolverError(f"HiGHS failed: {res.message}")
    x = np.maximum(res.x, 0.0)
    return LPResult(True, x, float(np.max(np.abs(A @ x - b))))


SOLVERS = {"simplex": phase_one, "highs": highs_feasibility}


def solve_feasibility(A, b, solver="simplex") -> LPResult:
    """Dispatch to a named solver or any callable with the ``phase_one`` signature."""
    fn = SOLVERS[solver] if isinstance(solver, str) else solver
    return fn(A, b)
