"""Log-barrier interior-point method for smooth convex programs.

Constraints come in vector-valued blocks so the callers can evaluate many
similar inequalities at once.  A block without a Hessian contributes only
its Gauss-Newton part ``J^T diag(1/g^2) J`` to the barrier Hessian.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .status import ITERATION_LIMIT, OPTIMAL, SolveStatus

GAP_TOL = 1e-8
KKT_TOL = 1e-6
WEIGHT_GROWTH = 10.0
ARMIJO = 1e-4
SHRINK = 0.5
MAX_NEWTON = 200
DECREMENT_TOL = 1e-12


@dataclass
class ConstraintBlock:
    """Inequalities ``g(v) <= 0`` evaluated together.

    ``fun(v)`` returns ``(values, jacobian)``; ``hess(v, weights)`` returns
    ``sum_i weights[i] * hessian(g_i)(v)``.
    """

    fun: Callable
    size: int
    hess: Callable | None = None
    name: str = ""


def linear_block(A, b, name: str = "linear") -> ConstraintBlock:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    n = A.shape[1]
    return ConstraintBlock(
        fun=lambda v: (A @ v - b, A),
        size=A.shape[0],
        hess=lambda v, w: np.zeros((n, n)),
        name=name,
    )


@dataclass
class SmoothConvexProgram:
    """minimize ``f(v)`` subject to constraint blocks and box bounds."""

    dim: int
    objective: Callable
    constraints: list = field(default_factory=list)
    objective_hess: Callable | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.lower = np.full(self.dim, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(self.dim, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    def constraint_values(self, v) -> np.ndarray:
        vals = [np.atleast_1d(blk.fun(v)[0]) for blk in self.constraints]
        return np.concatenate(vals) if vals else np.zeros(0)

    def strictly_feasible(self, v) -> bool:
        if np.any(v <= self.lower) or np.any(v >= self.upper):
            return False
        g = self.constraint_values(v)
        return bool(np.all(np.isfinite(g)) and np.all(g < 0))

    @property
    def n_inequalities(self) -> int:
        return sum(b.size for b in self.constraints) + int(np.isfinite(self.lower).sum() + np.isfinite(self.upper).sum())


def _barrier_terms(prog: SmoothConvexProgram, v, want_hess=True):
    """Barrier value, gradient, Hessian (or None), and the raw constraint data."""
    n = prog.dim
    phi = 0.0
    grad = np.zeros(n)
    H = np.zeros((n, n)) if want_hess else None
    lo, hi = prog.lower, prog.upper
    fl, fh = np.isfinite(lo), np.isfinite(hi)
    sl = v[fl] - lo[fl]
    sh = hi[fh] - v[fh]
    if np.any(sl <= 0) or np.any(sh <= 0):
        return np.inf, None, None, None
    phi -= np.log(sl).sum() + np.log(sh).sum()
    grad[fl] -= 1.0 / sl
    grad[fh] += 1.0 / sh
    if want_hess:
        diag = np.zeros(n)
        diag[fl] += 1.0 / sl**2
        diag[fh] += 1.0 / sh**2
        H[np.diag_indices(n)] += diag
    data = []
    for blk in prog.constraints:
        g, J = blk.fun(v)
        g = np.atleast_1d(np.asarray(g, dtype=float))
        if not np.all(np.isfinite(g)) or np.any(g >= 0):
            return np.inf, None, None, None
        J = np.atleast_2d(J)
        inv = -1.0 / g
        phi -= np.log(-g).sum()
        grad += J.T @ inv
        if want_hess:
            Jw = J * inv[:, None]
            H += Jw.T @ Jw
            if blk.hess is not None:
                H += blk.hess(v, inv)
        data.append((g, J))
    return phi, grad, H, data


def _merit(prog, weight, v):
    f = prog.objective(v)[0]
    phi = _barrier_terms(prog, v, want_hess=False)[0]
    return weight * f + phi


def barrier_solve(
    prog: SmoothConvexProgram,
    start,
    gap_tol: float = GAP_TOL,
    max_newton: int = MAX_NEWTON,
    stop_below: float | None = None,
    initial_weight: float | None = None,
):
    """Minimise ``prog`` from a strictly feasible ``start``.

    Returns ``(v, objective, SolveStatus)``.  ``stop_below`` ends the solve
    as soon as an accepted iterate has objective below that value (used by
    the phase-I search).
    """
    v = np.asarray(start, dtype=float).copy()
    if v.shape != (prog.dim,):
        raise ValueError("start has the wrong dimension")
    if not prog.strictly_feasible(v):
        raise ValueError("barrier_solve needs a strictly feasible start")
    m = max(prog.n_inequalities, 1)
    f0 = prog.objective(v)[0]
    phi0 = _barrier_terms(prog, v, want_hess=False)[0]
    if initial_weight is None:
        initial_weight = np.clip(max(abs(phi0), 1.0) / max(abs(f0), 1e-3), 1e-2, 1e6)
    weight = float(initial_weight)
    status = SolveStatus(OPTIMAL)
    total = 0
    stage_obj = []
    while True:
        converged = False
        for _ in range(max_newton):
            f, gf = prog.objective(v)
            phi, gphi, Hphi, _ = _barrier_terms(prog, v)
            Hf = prog.objective_hess(v) if prog.objective_hess is not None else 0.0
            grad = weight * gf + gphi
            H = weight * Hf + Hphi
            step = _newton_direction(H, grad)
            dec = -grad @ step
            if dec <= 0:
                step = -grad
                dec = grad @ grad
            F = weight * f + phi
            # below this the merit change is lost to rounding in F
            if dec / 2.0 <= DECREMENT_TOL * max(1.0, abs(F)):
                converged = True
                break
            s = 1.0
            while s > 1e-20 and not prog.strictly_feasible(v + s * step):
                s *= SHRINK
            while s > 1e-20 and _merit(prog, weight, v + s * step) > F - ARMIJO * s * dec:
                s *= SHRINK
            total += 1
            if s <= 1e-20:
                converged = True
                break
            v = v + s * step
            if stop_below is not None and prog.objective(v)[0] < stop_below:
                status.iterations = total
                status.stage_objectives = stage_obj + [float(prog.objective(v)[0])]
                return v, float(prog.objective(v)[0]), status
        stage_obj.append(float(prog.objective(v)[0]))
        if not converged:
            status.outcome = ITERATION_LIMIT
            status.message = "inner Newton iteration cap reached"
        if m / weight < gap_tol or not converged:
            break
        weight *= WEIGHT_GROWTH
    status.iterations = total
    status.stage_objectives = stage_obj
    status.residual = kkt_residual(prog, v, weight)
    if status.outcome == OPTIMAL and status.residual > KKT_TOL:
        status.message = f"KKT residual {status.residual:.2e} above tolerance"
    return v, float(prog.objective(v)[0]), status


def _newton_direction(H, grad):
    n = grad.size
    scale = max(np.abs(np.diag(H)).max(initial=0.0), 1e-300)
    reg = 0.0
    for _ in range(8):
        try:
            L = np.linalg.cholesky(H + reg * scale * np.eye(n))
        except np.linalg.LinAlgError:
            reg = 1e-12 if reg == 0.0 else reg * 100.0
            continue
        y = np.linalg.solve(L, -grad)
        return np.linalg.solve(L.T, y)
    return -grad


def kkt_residual(prog: SmoothConvexProgram, v, weight: float) -> float:
    """Scaled stationarity residual plus the duality-gap bound ``m / weight``.

    Multipliers are the barrier estimates ``1 / (weight * slack)``.
    """
    gf = prog.objective(v)[1]
    _, gphi, _, _ = _barrier_terms(prog, v, want_hess=False)
    if gphi is None:
        return np.inf
    stat = np.abs(gf + gphi / weight).max(initial=0.0) / max(1.0, np.abs(gf).max(initial=0.0))
    return float(max(stat, prog.n_inequalities / weight))


def find_interior(prog: SmoothConvexProgram, start, margin: float = 1e-9, floor: float = -1.0):
    """Phase I: maximise the smallest constraint slack from a box-interior point.

    Solves ``min s  s.t.  g(v) <= s`` and returns ``(v, s)``; ``s < 0``
    certifies that ``v`` is strictly feasible.  Stops once ``s < -margin``.
    """
    n = prog.dim
    v0 = _push_inside(prog, np.asarray(start, dtype=float))
    g0 = prog.constraint_values(v0)
    if g0.size == 0:
        return v0, -np.inf
    if np.all(g0 < -margin):
        return v0, float(g0.max())

    def wrap(blk):
        def fun(z):
            g, J = blk.fun(z[:n])
            g = np.atleast_1d(np.asarray(g, dtype=float))
            J = np.atleast_2d(J)
            return g - z[n], np.hstack([J, -np.ones((g.size, 1))])

        hess = None
        if blk.hess is not None:
            def hess(z, w):
                out = np.zeros((n + 1, n + 1))
                out[:n, :n] = blk.hess(z[:n], w)
                return out
        return ConstraintBlock(fun=fun, size=blk.size, hess=hess, name=blk.name)

    e = np.zeros(n + 1)
    e[n] = 1.0
    aug = SmoothConvexProgram(
        dim=n + 1,
        objective=lambda z: (z[n], e),
        constraints=[wrap(b) for b in prog.constraints],
        lower=np.append(prog.lower, floor),
        upper=np.append(prog.upper, np.inf),
    )
    s0 = max(float(np.max(g0)), floor / 2.0) + 1.0
    z, s, _ = barrier_solve(aug, np.append(v0, s0), stop_below=-margin, gap_tol=1e-10)
    return z[:n], float(np.max(prog.constraint_values(z[:n])))


def _push_inside(prog, v, rel=1e-7):
    lo, hi = prog.lower, prog.upper
    width = np.where(np.isfinite(hi - lo), hi - lo, 1.0)
    pad = rel * np.maximum(width, 1e-12)
    low = np.where(np.isfinite(lo), lo + pad, -np.inf)
    high = np.where(np.isfinite(hi), hi - pad, np.inf)
    return np.clip(v, low, high)
