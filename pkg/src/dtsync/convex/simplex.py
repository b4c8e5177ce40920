"""Dense two-phase tableau simplex with Bland's anti-cycling rule."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .status import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, SolveStatus

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9
COST_TOL = 1e-9
MAX_PIVOTS = 50_000


@dataclass(eq=False)
class LinearProgram:
    """minimize ``c @ v`` subject to ``A @ v <= b`` and ``lower <= v <= upper``."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.b = np.asarray(self.b, dtype=float).ravel()
        A = np.asarray(self.A, dtype=float)
        if A.size != self.b.size * n:
            raise ValueError("A and b disagree on the number of rows")
        self.A = A.reshape(self.b.size, n)
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).copy()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).copy()
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bound vectors must match the number of variables")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("LP data must be finite")

    @property
    def n(self) -> int:
        return self.c.size

    def inequality_form(self):
        """All constraints, bounds included, as ``G v <= h``."""
        n = self.n
        rows, rhs = [self.A], [self.b]
        eye = np.eye(n)
        lo = np.isfinite(self.lower)
        hi = np.isfinite(self.upper)
        rows += [-eye[lo], eye[hi]]
        rhs += [-self.lower[lo], self.upper[hi]]
        return np.vstack(rows), np.concatenate(rhs)


def _pivot(T, row, col):
    T[row] /= T[row, col]
    colv = T[:, col].copy()
    colv[row] = 0.0
    T -= np.outer(colv, T[row])


def _run(T, basis, allowed, max_pivots):
    """Bland-rule pivoting on tableau ``T`` whose last row holds reduced costs."""
    m = T.shape[0] - 1
    pivots = 0
    while True:
        costs = T[-1, :-1]
        candidates = np.flatnonzero((costs < -COST_TOL) & allowed)
        if candidates.size == 0:
            return OPTIMAL, pivots
        if pivots >= max_pivots:
            return ITERATION_LIMIT, pivots
        col = candidates[0]
        column = T[:m, col]
        pos = np.flatnonzero(column > PIVOT_TOL)
        if pos.size == 0:
            return UNBOUNDED, pivots
        ratios = np.maximum(T[pos, -1], 0.0) / column[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, best)]
        row = ties[np.argmin(basis[ties])]
        _pivot(T, row, col)
        basis[row] = col
        pivots += 1


def simplex_solve(lp: LinearProgram, max_pivots: int = MAX_PIVOTS):
    """Solve ``lp``; returns ``(v, objective, SolveStatus)``.

    Infeasible and unbounded problems are reported through the status with
    ``v`` set to ``None`` and the objective to ``nan``.
    """
    n = lp.n
    # substitute v = offset + M w with w >= 0
    cols, offset = [], np.zeros(n)
    ub_rows = []
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                ub_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nw = len(cols)
    M = np.zeros((n, nw))
    for w, (j, sgn) in enumerate(cols):
        M[j, w] = sgn
    G = lp.A @ M
    h = lp.b - lp.A @ offset
    if ub_rows:
        U = np.zeros((len(ub_rows), nw))
        for i, (w, cap) in enumerate(ub_rows):
            U[i, w] = 1.0
        G = np.vstack([G, U])
        h = np.concatenate([h, [cap for _, cap in ub_rows]])
    cost = lp.c @ M
    m = G.shape[0]

    neg = h < 0
    n_art = int(neg.sum())
    ncols = nw + m + n_art
    T = np.zeros((m + 1, ncols + 1))
    T[:m, :nw] = G
    T[:m, nw:nw + m] = np.eye(m)
    T[:m, -1] = h
    T[:m][neg] *= -1.0
    basis = np.arange(nw, nw + m)
    art_rows = np.flatnonzero(neg)
    for a, i in enumerate(art_rows):
        T[i, nw + m + a] = 1.0
        basis[i] = nw + m + a
    is_art = np.zeros(ncols, dtype=bool)
    is_art[nw + m:] = True
    total = 0

    if n_art:
        # phase I: minimise the sum of artificials
        T[-1, :] = 0.0
        T[-1, nw + m:ncols] = 1.0
        for i in art_rows:
            T[-1] -= T[i]
        outcome, piv = _run(T, basis, np.ones(ncols, dtype=bool), max_pivots)
        total += piv
        if outcome == ITERATION_LIMIT:
            return None, float("nan"), SolveStatus(ITERATION_LIMIT, total, message="phase I pivot cap")
        infeas = -T[-1, -1]
        if infeas > FEAS_TOL * max(1.0, np.abs(h).max(initial=0.0)):
            return None, float("nan"), SolveStatus(INFEASIBLE, total, residual=float(infeas))
        # drive remaining artificials out of the basis
        keep = np.ones(m + 1, dtype=bool)
        for i in range(m):
            if is_art[basis[i]]:
                cand = np.flatnonzero((np.abs(T[i, :nw + m]) > PIVOT_TOL))
                if cand.size:
                    _pivot(T, i, cand[0])
                    basis[i] = cand[0]
                else:
                    keep[i] = False
        if not keep.all():
            T = T[keep]
            basis = basis[keep[:-1]]
            m = T.shape[0] - 1

    # phase II
    full_cost = np.zeros(ncols)
    full_cost[:nw] = cost
    T[-1, :-1] = full_cost
    T[-1, -1] = 0.0
    for i in range(m):
        cb = full_cost[basis[i]]
        if cb != 0.0:
            T[-1] -= cb * T[i]
    outcome, piv = _run(T, basis, ~is_art, max_pivots)
    total += piv
    if outcome == UNBOUNDED:
        return None, float("-inf"), SolveStatus(UNBOUNDED, total)
    w = np.zeros(ncols)
    w[basis] = np.maximum(T[:m, -1], 0.0)
    v = offset + M @ w[:nw]
    reduced = T[-1, :-1][~is_art]
    certificate = float(min(reduced.min(initial=0.0), 0.0))
    status = SolveStatus(outcome, total, residual=-certificate)
    if outcome == OPTIMAL:
        Gv, hv = lp.inequality_form()
        status.message = f"max primal violation {max(0.0, float((Gv @ v - hv).max(initial=0.0))):.2e}"
    return v, float(lp.c @ v), status
