"""Dense tableau simplex for ``max c.x  s.t.  A x <= b, x >= 0`` with ``b >= 0``.

The origin is feasible for every problem this package builds (packing LPs), so
a single phase started from the slack basis is enough.  Pivoting uses
Dantzig's rule and falls back to Bland's rule after a run of degenerate
pivots, which rules out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LpError(RuntimeError):
    def __init__(self, message: str, residuals: dict | None = None):
        self.residuals = residuals or {}
        super().__init__(f"{message} {self.residuals}" if residuals else message)


@dataclass
class LpResult:
    x: np.ndarray
    objective: float
    iterations: int
    primal_residual: float


def solve_packing_lp(c, A, b, tol: float = 1e-9, max_iter: int | None = None) -> LpResult:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("shape mismatch between c, A and b")
    if (b < -tol).any():
        raise ValueError("right-hand side must be nonnegative")
    if n == 0:
        return LpResult(np.zeros(0), 0.0, 0, 0.0)

    # columns: n structural, m slack, rhs
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = np.maximum(b, 0.0)
    T[m, :n] = -c
    basis = np.arange(n, n + m)
    scale = max(1.0, float(np.abs(c).max(initial=0.0)))
    eps = tol * scale

    max_iter = max_iter or 50 * (m + n) + 1000
    degenerate_run = 0
    bland = False
    it = 0
    while True:
        row = T[m, :-1]
        if bland:
            cand = np.flatnonzero(row < -eps)
            if cand.size == 0:
                break
            col = int(cand[0])
        else:
            col = int(np.argmin(row))
            if row[col] >= -eps:
                break
        column = T[:m, col]
        pos = column > tol
        if not pos.any():
            raise LpError("problem is unbounded", {"column": col})
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / column[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol)
        r = int(ties[np.argmin(basis[ties])])
        if best <= tol:
            degenerate_run += 1
            if degenerate_run > 50:
                bland = True
        else:
            degenerate_run = 0
        piv = T[r, col]
        T[r] /= piv
        others = T[:, col].copy()
        others[r] = 0.0
        T -= np.outer(others, T[r])
        basis[r] = col
        it += 1
        if it >= max_iter:
            x = _extract(T, basis, n, m)
            raise LpError("simplex did not converge", {
                "iterations": it,
                "primal": float(np.maximum(A @ x - b, 0).max(initial=0.0)),
                "reduced_cost": float(-T[m, :-1].min()),
            })

    x = _extract(T, basis, n, m)
    x = np.maximum(x, 0.0)
    resid = float(np.maximum(A @ x - b, 0).max(initial=0.0))
    if resid > 1e-6 * max(1.0, float(np.abs(b).max(initial=0.0))):
        raise LpError("solution violates constraints", {"primal": resid})
    return LpResult(x=x, objective=float(c @ x), iterations=it, primal_residual=resid)


def _extract(T, basis, n, m) -> np.ndarray:
    x = np.zeros(n + m)
    x[basis] = T[:m, -1]
    return x[:n]
