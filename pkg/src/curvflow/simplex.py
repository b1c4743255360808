"""Dense two-phase simplex for small linear programs.

Solves ``min c @ x  s.t.  A @ x = b, x >= 0`` on a dense tableau with
Bland's anti-cycling rule (entering: smallest eligible variable index;
leaving: minimum ratio, ties broken by smallest basic variable index).
Problem sizes here are tiny (transport polytopes on one-step balls and
Kantorovich duals on support unions), so a dense tableau beats anything
fancier and keeps the solver fully self-contained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, SolverError, UnboundedError

__all__ = ["LPResult", "solve_standard_lp", "solve_from_basis", "require_optimal"]

FEAS_TOL = 1e-9
# entering threshold: reduced costs beyond this are treated as optimal.
# kept far below the feasibility tolerance so optimal values are stable
# to ~1e-12 across basis paths (the flow's monotone diagnostics need it)
ENTER_TOL = 1e-12


@dataclass
class LPResult:
    x: np.ndarray
    value: float
    basis: np.ndarray
    status: str  # "optimal" | "infeasible" | "unbounded"
    n_pivots: int


def require_optimal(res: LPResult, context: str = "LP") -> LPResult:
    if res.status == "infeasible":
        raise InfeasibleError(f"{context}: constraint system is infeasible")
    if res.status == "unbounded":
        raise UnboundedError(f"{context}: objective is unbounded")
    if res.status != "optimal":
        raise SolverError(f"{context}: solver returned status {res.status!r}")
    return res


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    """Eliminate column `col` against data row `row` (rows are 1-based)."""
    T[row] /= T[row, col]
    colvals = T[:, col].copy()
    colvals[row] = 0.0
    T -= np.outer(colvals, T[row])
    T[:, col] = 0.0
    T[row, col] = 1.0
    basis[row - 1] = col


def _bland_iterate(T: np.ndarray, basis: np.ndarray, ncols: int, tol: float,
                   max_pivots: int) -> tuple[str, int]:
    """Run Bland-rule pivots to optimality on an initialized tableau."""
    pivots = 0
    enter_tol = min(tol, ENTER_TOL)
    while True:
        reduced = T[0, :ncols]
        candidates = np.flatnonzero(reduced < -enter_tol)
        if candidates.size == 0:
            return "optimal", pivots
        j = int(candidates[0])
        col = T[1:, j]
        rows = np.flatnonzero(col > tol)
        if rows.size == 0:
            return "unbounded", pivots
        ratios = T[1:, -1][rows] / col[rows]
        rmin = ratios.min()
        ties = rows[ratios <= rmin + tol * (1.0 + abs(rmin))]
        leave = int(ties[np.argmin(basis[ties])])
        _pivot(T, basis, leave + 1, j)
        pivots += 1
        if pivots > max_pivots:
            raise SolverError(f"simplex exceeded {max_pivots} pivots")


def _build_tableau(c: np.ndarray, A: np.ndarray, b: np.ndarray,
                   basis: np.ndarray) -> np.ndarray:
    """Tableau [reduced costs | -value; B^-1 A | B^-1 b] for a given basis."""
    m, n = A.shape
    B = A[:, basis]
    try:
        body = np.linalg.solve(B, np.column_stack([A, b]))
    except np.linalg.LinAlgError as exc:
        raise SolverError("starting basis is singular") from exc
    T = np.empty((m + 1, n + 1))
    T[1:] = body
    cb = c[basis]
    T[0, :n] = c - cb @ body[:, :n]
    T[0, n] = -cb @ body[:, n]
    return T


def _extract(c: np.ndarray, A: np.ndarray, b: np.ndarray, basis: np.ndarray,
             T: np.ndarray, n: int, pivots: int, status: str) -> LPResult:
    x = np.zeros(n)
    if status == "optimal":
        # re-solve on the final basis to shed pivoting roundoff
        try:
            xb = np.linalg.solve(A[:, basis], b)
        except np.linalg.LinAlgError:
            xb = T[1:, -1]
        x[basis] = np.where(np.abs(xb) < FEAS_TOL, np.maximum(xb, 0.0), xb)
    return LPResult(x=x, value=float(c @ x), basis=basis.copy(),
                    status=status, n_pivots=pivots)


def solve_from_basis(c: np.ndarray, A: np.ndarray, b: np.ndarray,
                     basis: np.ndarray, *, tol: float = FEAS_TOL,
                     max_pivots: int = 10_000) -> LPResult:
    """Phase-2 simplex from a known primal-feasible basis."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    basis = np.asarray(basis, dtype=int).copy()
    m, n = A.shape
    if basis.shape != (m,):
        raise SolverError(f"basis must have {m} entries, got {basis.shape}")
    T = _build_tableau(c, A, b, basis)
    if np.any(T[1:, -1] < -tol):
        raise SolverError("starting basis is not primal feasible")
    status, pivots = _bland_iterate(T, basis, n, tol, max_pivots)
    return _extract(c, A, b, basis, T, n, pivots, status)


def solve_standard_lp(c: np.ndarray, A: np.ndarray, b: np.ndarray, *,
                      tol: float = FEAS_TOL,
                      max_pivots: int = 10_000) -> LPResult:
    """Two-phase simplex for ``min c @ x, A @ x = b, x >= 0``."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).copy()
    b = np.asarray(b, dtype=float).copy()
    m, n = A.shape

    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # phase 1: minimize the sum of artificial variables
    A1 = np.column_stack([A, np.eye(m)])
    basis = np.arange(n, n + m)
    T = np.empty((m + 1, n + m + 1))
    T[1:, :-1] = A1
    T[1:, -1] = b
    T[0, :n] = -A.sum(axis=0)
    T[0, n:n + m] = 0.0
    T[0, -1] = -b.sum()
    status, pivots1 = _bland_iterate(T, basis, n + m, tol, max_pivots)
    if status != "optimal" or -T[0, -1] > tol * (1.0 + abs(b).sum()):
        return LPResult(x=np.zeros(n), value=np.nan, basis=basis,
                        status="infeasible", n_pivots=pivots1)

    # drive leftover artificials out of the basis; drop redundant rows
    keep_rows = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] < n:
            continue
        row = T[i + 1, :n]
        nz = np.flatnonzero(np.abs(row) > tol)
        if nz.size:
            _pivot(T, basis, i + 1, int(nz[0]))
        else:
            keep_rows[i] = False
    if not keep_rows.all():
        T = np.vstack([T[:1], T[1:][keep_rows]])
        basis = basis[keep_rows]
        A = A[keep_rows]
        b = b[keep_rows]
        m = A.shape[0]

    # phase 2 on the original costs, artificial columns removed
    T2 = np.empty((m + 1, n + 1))
    T2[1:, :n] = T[1:, :n]
    T2[1:, -1] = T[1:, -1]
    cb = c[basis]
    T2[0, :n] = c - cb @ T2[1:, :n]
    T2[0, -1] = -cb @ T2[1:, -1]
    status, pivots2 = _bland_iterate(T2, basis, n, tol, max_pivots)
    return _extract(c, A, b, basis, T2, n, pivots1 + pivots2, status)
