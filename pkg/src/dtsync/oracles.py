"""Slow, obviously-correct reference implementations.

Everything here depends only on :mod:`dtsync.model` formulas and numpy so
that the checks stay independent of the solver code paths they verify.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .model import ScenarioConfig, rate, success_probability


class OracleBudgetExceeded(ValueError):
    pass


@dataclass(frozen=True)
class OracleBudget:
    """Caps on oracle work; exceeding any of them raises instead of truncating."""

    max_states: int = 1 << 20
    max_resolution: int = 2000
    max_subsets: int = 2_000_000
    max_seconds: float = 60.0

    def clock(self):
        """Callable that raises once ``max_seconds`` have elapsed since creation."""
        deadline = time.perf_counter() + self.max_seconds

        def check():
            if time.perf_counter() > deadline:
                raise OracleBudgetExceeded(f"oracle exceeded its {self.max_seconds:g} s wall-time cap")

        return check


DEFAULT_BUDGET = OracleBudget()


def _window_ok(x, tau, need):
    N = x.shape[0]
    for n in range(N - tau):
        if np.any(x[n:n + tau + 1].sum(axis=0) < need):
            return False
    return True


def brute_force_scheduling(t, config: ScenarioConfig, budget: OracleBudget = DEFAULT_BUDGET):
    """Exhaustive minimum of ``sum_n max_k x t`` over feasible binary schedules."""
    t = np.asarray(t, dtype=float)
    N, K = t.shape
    size = N * K
    if size > 20 or (1 << size) > budget.max_states:
        raise OracleBudgetExceeded(f"{size} binary variables exceed the enumeration cap")
    need = np.ceil(np.asarray(config.beta) * config.tau - 1e-9).astype(int)
    codes = np.arange(1 << size, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(size)) & 1).reshape(-1, N, K)
    ok = np.all(bits.sum(axis=2) <= config.K0, axis=1)
    for n in range(N - config.tau):
        ok &= np.all(bits[:, n:n + config.tau + 1].sum(axis=1) >= need, axis=1)
    if not ok.any():
        return None, math.inf
    cand = bits[ok]
    obj = (cand * t).max(axis=2).sum(axis=1)
    i = int(np.argmin(obj))
    return cand[i].copy(), float(obj[i])


def brute_force_chain(source, edges, N: int, tau: int, budget: OracleBudget = DEFAULT_BUDGET):
    """Exhaustive single-device chain: every binary x meeting the windows.

    Cost of a chain = ``source[first] + sum edges[prev, next]``; an empty
    chain is allowed only when no window fits in the horizon.
    """
    if N > 16 or (1 << N) > budget.max_states:
        raise OracleBudgetExceeded("chain enumeration limited to N <= 16")
    tick = budget.clock()
    best, best_x = math.inf, None
    for code in range(1 << N):
        if code & 0xFF == 0:
            tick()
        x = np.array([(code >> i) & 1 for i in range(N)])
        if not _window_ok(x[:, None], tau, np.array([1])):
            continue
        on = np.flatnonzero(x)
        if on.size == 0:
            cost = 0.0
        else:
            cost = source[on[0]] + sum(edges[a, b] for a, b in zip(on[:-1], on[1:]))
        if cost < best:
            best, best_x = cost, x
    return best_x, best


def enumerate_basic_feasible(lp, max_vars: int = 10, budget: OracleBudget = DEFAULT_BUDGET):
    """Minimum objective over all basic feasible solutions of ``lp``.

    ``lp`` needs ``c, A, b, lower, upper`` attributes.  Returns ``inf`` if no
    vertex is feasible.  Assumes the LP is bounded.
    """
    c = np.asarray(lp.c, dtype=float)
    n = c.size
    if n > max_vars:
        raise OracleBudgetExceeded(f"{n} variables exceed the vertex enumeration cap")
    rows, rhs = [np.asarray(lp.A, dtype=float).reshape(-1, n)], [np.asarray(lp.b, dtype=float)]
    eye = np.eye(n)
    lo = np.asarray(lp.lower, dtype=float)
    hi = np.asarray(lp.upper, dtype=float)
    rows += [-eye[np.isfinite(lo)], eye[np.isfinite(hi)]]
    rhs += [-lo[np.isfinite(lo)], hi[np.isfinite(hi)]]
    G, h = np.vstack(rows), np.concatenate(rhs)
    m = G.shape[0]
    if math.comb(m, n) > budget.max_subsets:
        raise OracleBudgetExceeded(f"C({m},{n}) bases exceed the cap")
    scale = np.maximum(np.abs(G).max(axis=1), 1e-300)
    Gs, hs = G / scale[:, None], h / scale
    best = math.inf
    tick = budget.clock()
    subsets = itertools.combinations(range(m), n)
    while True:
        tick()
        chunk = np.array(list(itertools.islice(subsets, 4096)), dtype=int).reshape(-1, n)
        if chunk.size == 0:
            break
        M = Gs[chunk]
        ok = np.abs(np.linalg.det(M)) > 1e-10
        if not ok.any():
            continue
        V = np.linalg.solve(M[ok], hs[chunk[ok]][..., None])[..., 0]
        slack = V @ G.T - h
        feas = np.all(slack <= 1e-9 * np.maximum(1.0, np.abs(h)), axis=1)
        if feas.any():
            best = min(best, float((V[feas] @ c).min()))
    return best


def grid_search_single_hop(
    d,
    h: float,
    budget: float,
    config: ScenarioConfig,
    resolution: int = 400,
    P: float | None = None,
    required: float = 0.0,
    refine: int = 2,
    limits: OracleBudget = DEFAULT_BUDGET,
):
    """Smallest airtime t over a (p, t) grid for one transmission.

    Feasible grid points satisfy ``t r(p) >= d``, ``p t <= budget``,
    ``p <= P``, ``t <= T0`` and expected delivery ``d s(p) >= required``.
    With ``d=None`` the payload is the minimum ``required / s(p)``.  The grid
    is zoomed ``refine`` times around the best point found.
    """
    if resolution > limits.max_resolution:
        raise OracleBudgetExceeded("grid resolution above cap")
    P = float(config.P[0]) if P is None else float(P)
    if d is not None and d <= 0 and required <= 0:
        return 0.0
    p_lo, p_hi = P * 1e-6, P
    # t can never beat the full-power airtime of the minimum payload
    d_min = d if d is not None else required
    t_lo = d_min / float(rate(P, h, config)) * (1 - 1e-12)
    t_hi = config.T0
    if t_lo > t_hi:
        return math.inf
    best = math.inf
    best_pt = None
    tick = limits.clock()
    for _ in range(refine + 1):
        tick()
        ps = np.linspace(p_lo, p_hi, resolution)
        ts = np.linspace(t_lo, t_hi, resolution)
        r = rate(ps, h, config)
        s = success_probability(ps, h, config)
        payload = np.full_like(ps, float(d)) if d is not None else np.where(s > 0, required / np.maximum(s, 1e-300), np.inf)
        T, Pg = np.meshgrid(ts, ps)
        ok = (T * r[:, None] >= payload[:, None]) & (Pg * T <= budget) & (T <= config.T0)
        with np.errstate(invalid="ignore"):
            ok &= (payload * s >= required * (1 - 1e-12))[:, None]
        if ok.any():
            Tm = np.where(ok, T, np.inf)
            j = int(np.argmin(Tm.min(axis=0)))
            # among the powers reaching that airtime keep the largest, so the
            # zoomed grid is centred where the most slack is
            i = int(np.flatnonzero(ok[:, j])[-1])
            if T[i, j] < best:
                best, best_pt = float(T[i, j]), (ps[i], ts[j])
        if best_pt is None:
            break
        dp = (p_hi - p_lo) / (resolution - 1)
        dt = (t_hi - t_lo) / (resolution - 1)
        p_lo, p_hi = max(P * 1e-9, best_pt[0] - 50 * dp), min(P, best_pt[0] + 50 * dp)
        t_lo, t_hi = max(0.0, best_pt[1] - 2 * dt), min(config.T0, best_pt[1] + 2 * dt)
    return best


def finite_difference_gradient(fn, point, step: float = 1e-6):
    """Central differences; ``step`` is relative to each coordinate's magnitude."""
    x = np.asarray(point, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        hstep = step * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = hstep
        g[i] = (fn(x + e) - fn(x - e)) / (2 * hstep)
    return g
