"""Device scheduling by Lagrangian dual decomposition.

Minimises ``sum_n max_k x_nk t_nk`` over binary schedules subject to the
regularity windows and the resource-block cap.  The relaxation is solved
with projected subgradient steps on three multiplier families; every
distinct primal iterate is repaired to a feasible schedule and the best
one found is returned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InfeasibleError
from .model import ScenarioConfig, window_counts

MAX_ITER = 5000
DUAL_TOL = 1e-6
KAPPA0 = 1.0
CHUNK = 250
MAX_CANDIDATES = 200
MAX_DP_TAU = 16
RESTARTS = 20


@dataclass
class DualState:
    lambda1: np.ndarray  # (N, K) window multipliers, rows past the last window stay 0
    lambda2: np.ndarray  # (N,) resource-block multipliers
    lambda3: np.ndarray  # (N, K) slot-delay multipliers in [0, 1]
    iteration: int = 0
    kappa0: float = KAPPA0

    @classmethod
    def zeros(cls, config: ScenarioConfig, kappa0: float = KAPPA0) -> "DualState":
        N, K = config.N, config.K
        return cls(np.zeros((N, K)), np.zeros(N), np.zeros((N, K)), 0, kappa0)

    def max_change(self, other: "DualState") -> float:
        return float(max(
            np.abs(self.lambda1 - other.lambda1).max(initial=0.0),
            np.abs(self.lambda2 - other.lambda2).max(initial=0.0),
            np.abs(self.lambda3 - other.lambda3).max(initial=0.0),
        ))


def _covering_window_sum(lambda1, tau: int) -> np.ndarray:
    """``sum_{i=max(n-tau,0)}^{n} lambda1[i]`` for every slot n."""
    c = np.vstack([np.zeros((1, lambda1.shape[1])), np.cumsum(lambda1, axis=0)])
    N = lambda1.shape[0]
    hi = np.arange(N) + 1
    lo = np.maximum(np.arange(N) - tau, 0)
    return c[hi] - c[lo]


def lagrangian_coefficients(dual: DualState, t, config: ScenarioConfig, literal: bool = False):
    """Coefficient of x_nk in the Lagrangian.

    With ``literal=True`` the lambda3 term is not multiplied by t_nk
    (the closed form exactly as printed); the default keeps the factor that
    the Lagrangian itself carries.
    """
    l3 = dual.lambda3 if literal else dual.lambda3 * t
    return dual.lambda2[:, None] + l3 - _covering_window_sum(dual.lambda1, config.tau)


def closed_form_primal(dual: DualState, t, config: ScenarioConfig, literal: bool = False):
    """Closed-form minimiser of the Lagrangian: x on strictly negative coefficients."""
    t = np.asarray(t, dtype=float)
    x = (lagrangian_coefficients(dual, t, config, literal) < 0).astype(int)
    y = (x * t).max(axis=1)
    return x, y


def dual_step(dual: DualState, x, y, t, config: ScenarioConfig) -> DualState:
    """One projected subgradient step with stepsize ``kappa0 / sqrt(iteration)``."""
    it = dual.iteration + 1
    kappa = dual.kappa0 / math.sqrt(it)
    W = config.n_windows
    lambda1 = dual.lambda1.copy()
    if W:
        sub1 = config.beta[None, :] * config.tau - window_counts(x, config.tau)
        lambda1[:W] = np.maximum(lambda1[:W] + kappa * sub1, 0.0)
    lambda2 = np.maximum(dual.lambda2 + kappa * (np.asarray(x).sum(axis=1) - config.K0), 0.0)
    lambda3 = np.clip(dual.lambda3 + kappa * (np.asarray(x) * t - np.asarray(y)[:, None]), 0.0, 1.0)
    return DualState(lambda1, lambda2, lambda3, it, dual.kappa0)


def dual_value(dual: DualState, t, config: ScenarioConfig) -> float:
    """Lagrangian dual function of the relaxed problem with ``0 <= y_n <= max_k t_nk``.

    The upper bound on y is implied by the objective, and keeps the dual
    finite when the lambda3 rows sum above one.
    """
    t = np.asarray(t, dtype=float)
    W = config.n_windows
    coef = lagrangian_coefficients(dual, t, config)
    val = float((dual.lambda1[:W] * (config.beta[None, :] * config.tau)).sum())
    val -= float(dual.lambda2.sum() * config.K0)
    val += float(np.minimum(coef, 0.0).sum())
    ycoef = 1.0 - dual.lambda3.sum(axis=1)
    val += float((np.minimum(ycoef, 0.0) * t.max(axis=1)).sum())
    return val


def schedule_cost(x, t) -> float:
    return float((np.asarray(x) * np.asarray(t)).max(axis=1).sum())


def is_feasible_schedule(x, config: ScenarioConfig) -> bool:
    x = np.asarray(x)
    if np.any((x != 0) & (x != 1)) or np.any(x.sum(axis=1) > config.K0):
        return False
    counts = window_counts(x, config.tau)
    return bool(np.all(counts >= config.activations[None, :]))


class _Windows:
    """Per-device window counts with incremental updates."""

    def __init__(self, x, config: ScenarioConfig):
        self.tau = config.tau
        self.W = config.n_windows
        self.need = config.activations
        self.counts = window_counts(x, config.tau).astype(int) if self.W else np.zeros((0, x.shape[1]), int)

    def span(self, n):
        """Windows containing slot n, as a slice of ``counts``."""
        return slice(max(0, n - self.tau), min(n, self.W - 1) + 1)

    def removable(self, n, k) -> bool:
        col = self.counts[self.span(n), k]
        return col.size == 0 or int(col.min()) > self.need[k]

    def removable_row(self, n) -> np.ndarray:
        block = self.counts[self.span(n)]
        if block.shape[0] == 0:
            return np.ones(block.shape[1], dtype=bool)
        return block.min(axis=0) > self.need

    def toggle(self, n, k, delta):
        self.counts[self.span(n), k] += delta


def repair_schedule(x, t, config: ScenarioConfig, priority=None):
    """Turn any binary matrix into a feasible schedule, or return None.

    Over-full slots are trimmed first (largest cost, preferring entries no
    window needs); window deficits are then filled with the free slots of
    lowest ``priority`` (default: the cost itself), swapping out a
    redundant entry when a window has no spare block; finally redundant
    positive-cost entries are dropped, most expensive first.  If the greedy
    fill gets stuck, the schedule is rebuilt from scratch by least laxity
    with ``priority`` as the tie-break.  ``None`` means no schedule exists.
    """
    x = (np.asarray(x) > 0).astype(int)
    t = np.asarray(t, dtype=float)
    pr = t if priority is None else np.asarray(priority, dtype=float)
    N, K = x.shape
    K0 = config.K0
    win = _Windows(x, config)
    used = x.sum(axis=1)

    for n in range(N):
        while used[n] > K0:
            on = np.flatnonzero(x[n])
            spare = on[win.removable_row(n)[on]]
            pool = spare if spare.size else on
            k = max(pool, key=lambda j: (t[n, j], j))
            x[n, k] = 0
            used[n] -= 1
            win.toggle(n, k, -1)

    for w in range(win.W):
        for k in np.flatnonzero(win.counts[w] < win.need):
            while win.counts[w, k] < win.need[k]:
                slots = [n for n in range(w, w + config.tau + 1) if x[n, k] == 0]
                free = [n for n in slots if used[n] < K0]
                if free:
                    n = min(free, key=lambda s: (pr[s, k], -s))
                else:
                    n = None
                    for s in sorted(slots, key=lambda s: (pr[s, k], -s)):
                        out = np.flatnonzero((x[s] == 1) & win.removable_row(s))
                        if out.size:
                            j = max(out, key=lambda j: (t[s, j], j))
                            x[s, j] = 0
                            used[s] -= 1
                            win.toggle(s, j, -1)
                            n = s
                            break
                    if n is None:
                        return _rebuild(t, pr, config)
                x[n, k] = 1
                used[n] += 1
                win.toggle(n, k, +1)

    rows, cols = np.nonzero(x)
    # most expensive first; ties broken by larger slot, then larger device
    for i in np.lexsort((cols, rows, t[rows, cols]))[::-1]:
        n, k = rows[i], cols[i]
        if t[n, k] > 0 and win.removable(n, k):
            x[n, k] = 0
            win.toggle(n, k, -1)
    return x


def _rebuild(t, priority, config):
    try:
        x = edf_schedule(config, cost=priority)
    except InfeasibleError:
        return None
    return repair_schedule(x, t, config, priority)


def edf_schedule(config: ScenarioConfig, cost=None, fill: bool = False) -> np.ndarray:
    """Least-laxity-first construction meeting every window and the cap.

    With ``fill=True`` spare resource blocks are handed out by ascending
    cost so every slot uses ``K0`` blocks.
    """
    N, K, tau, K0 = config.N, config.K, config.tau, config.K0
    cost = np.zeros((N, K)) if cost is None else np.asarray(cost, dtype=float)
    need = config.activations
    W = config.n_windows
    x = np.zeros((N, K), dtype=int)
    for n in range(N):
        urgent = []
        for k in range(K):
            lax = None
            for w in range(max(0, n - tau), min(n, W - 1) + 1):
                deficit = need[k] - x[w:n, k].sum()
                if deficit > 0:
                    slack = (w + tau - n + 1) - deficit
                    lax = slack if lax is None else min(lax, slack)
            if lax is not None:
                urgent.append((lax, cost[n, k], k))
        urgent.sort()
        if sum(1 for u in urgent if u[0] <= 0) > K0 or any(u[0] < 0 for u in urgent):
            raise InfeasibleError("regularity windows cannot be met within the resource-block cap", slot=n)
        for _, _, k in urgent[:K0]:
            x[n, k] = 1
        if fill:
            rest = sorted((cost[n, k], k) for k in range(K) if x[n, k] == 0)
            for _, k in rest[: K0 - x[n].sum()]:
                x[n, k] = 1
    if not is_feasible_schedule(x, config):
        raise InfeasibleError("least-laxity construction failed to meet the windows")
    return x


@njit(cache=True)
def _column_dp(gain, blocked, need, tau):
    """Cheapest 0/1 column meeting every window; ``feasible`` flag first."""
    N = gain.size
    S = 1 << tau
    full = S - 1
    pop = np.zeros(S, dtype=np.int64)
    for m in range(S):
        v = m
        while v:
            pop[m] += v & 1
            v >>= 1
    cost = np.full(S, np.inf)
    cost[0] = 0.0
    back = np.zeros((N, S), dtype=np.int64)
    for n in range(N):
        new = np.full(S, np.inf)
        for m in range(S):
            if cost[m] == np.inf:
                continue
            for b in range(2):
                if b == 1 and blocked[n]:
                    continue
                if n >= tau and pop[m] + b < need:
                    continue
                nm = ((m << 1) | b) & full
                c = cost[m] + b * gain[n]
                if c < new[nm] - 1e-15:
                    new[nm] = c
                    back[n, nm] = (m << 1) | b
        cost = new
    col = np.zeros(N, dtype=np.int64)
    state = np.argmin(cost)
    if cost[state] == np.inf:
        return False, col
    for n in range(N - 1, -1, -1):
        code = back[n, state]
        col[n] = code & 1
        state = code >> 1
    return True, col


def best_device_response(x, k: int, t, config: ScenarioConfig):
    """Exact best schedule for device ``k`` with every other device fixed.

    Dynamic programme over the last ``tau`` decisions of device ``k``; slot
    costs are ``max(y_other, t_nk)``.  Returns ``None`` when no feasible
    column exists (or the state space is too large).
    """
    x = np.asarray(x)
    t = np.asarray(t, dtype=float)
    if config.tau > MAX_DP_TAU:
        return None
    others = np.delete(x, k, axis=1)
    base = (others * np.delete(t, k, axis=1)).max(axis=1, initial=0.0)
    blocked = others.sum(axis=1) >= config.K0
    gain = np.maximum(t[:, k] - base, 0.0)
    ok, col = _column_dp(gain, blocked, int(config.activations[k]), config.tau)
    if not ok:
        return None
    out = np.array(x, dtype=int)
    out[:, k] = col
    return out


def improve_schedule(x, t, config: ScenarioConfig, max_rounds: int = 20):
    """Block coordinate descent with exact per-device best responses."""
    x = np.array(x, dtype=int)
    t = np.asarray(t, dtype=float)
    cost = schedule_cost(x, t)
    for _ in range(max_rounds):
        improved = False
        for k in range(x.shape[1]):
            cand = best_device_response(x, k, t, config)
            if cand is None:
                continue
            new = schedule_cost(cand, t)
            if new < cost - 1e-12:
                x, cost, improved = cand, new, True
        if not improved:
            break
    return x


def perturb_and_polish(x, t, config: ScenarioConfig, restarts: int = RESTARTS, seed: int = 0):
    """Iterated local search: refill a few cleared device columns in random
    order and keep the polished result when it is cheaper."""
    rng = np.random.default_rng(seed)
    best = improve_schedule(x, t, config)
    best_obj = schedule_cost(best, t)
    K = best.shape[1]
    for _ in range(restarts):
        trial = best.copy()
        trial[:, rng.choice(K, size=min(2, K), replace=False)] = 0
        trial = repair_schedule(trial, t, config, priority=rng.uniform(size=t.shape))
        if trial is None:
            continue
        trial = improve_schedule(trial, t, config)
        obj = schedule_cost(trial, t)
        if obj < best_obj - 1e-12:
            best, best_obj = trial, obj
    return best


@dataclass
class ScheduleResult:
    x: np.ndarray
    objective: float
    dual: DualState
    iterations: int
    lower_bound: float
    candidates: int


@njit(cache=True)
def _dual_chunk(l1, l2, l3, tn, lam3_scale, need, K0, tau, W, it0, n_iter, kappa0, tol,
                best_obj, snap_x, snap_coef, prev_x, prev_rank):
    """``n_iter`` closed-form primal / subgradient iterations, updating the duals in place.

    Iterates whose support or coefficient ordering differ from the previous
    one are copied into the snapshot buffers.  Returns ``(iterations,
    snapshots, stop_code, best_dual_value)``; stop codes are 0 (budget), 1
    (dual change below ``tol``) and 2 (duality gap closed).
    """
    N, K = tn.shape
    coef = np.empty((N, K))
    x = np.empty((N, K))
    y = np.empty(N)
    tmax = np.empty(N)
    for n in range(N):
        tmax[n] = tn[n].max()
    nsnap = 0
    lower = -np.inf
    for j in range(n_iter):
        it = it0 + j + 1
        for n in range(N):
            for k in range(K):
                cover = 0.0
                for i in range(max(n - tau, 0), min(n, W - 1) + 1):
                    cover += l1[i, k]
                coef[n, k] = l2[n] + l3[n, k] * lam3_scale[n, k] - cover
        # dual function at the current multipliers
        val = 0.0
        for w in range(W):
            for k in range(K):
                val += l1[w, k] * need[k]
        for n in range(N):
            val -= K0 * l2[n]
            s3 = 0.0
            for k in range(K):
                s3 += l3[n, k]
                if coef[n, k] < 0.0:
                    val += coef[n, k]
            if s3 > 1.0:
                val += (1.0 - s3) * tmax[n]
        if val > lower:
            lower = val
        if best_obj - lower <= 1e-12:
            return j, nsnap, 2, lower

        changed = False
        for n in range(N):
            y[n] = 0.0
            for k in range(K):
                v = 1.0 if coef[n, k] < 0.0 else 0.0
                if v != prev_x[n, k]:
                    changed = True
                x[n, k] = v
                prev_x[n, k] = v
                if v * tn[n, k] > y[n]:
                    y[n] = v * tn[n, k]
        rank = np.argsort(coef.ravel(), kind="mergesort")
        for i in range(rank.size):
            if rank[i] != prev_rank[i]:
                changed = True
            prev_rank[i] = rank[i]
        if changed and nsnap < snap_x.shape[0]:
            snap_x[nsnap] = x
            snap_coef[nsnap] = coef
            nsnap += 1

        kappa = kappa0 / np.sqrt(it)
        change = 0.0
        for w in range(W):
            for k in range(K):
                cnt = 0.0
                for i in range(w, w + tau + 1):
                    cnt += x[i, k]
                v = max(l1[w, k] + kappa * (need[k] - cnt), 0.0)
                change = max(change, abs(v - l1[w, k]))
                l1[w, k] = v
        for n in range(N):
            used = 0.0
            for k in range(K):
                used += x[n, k]
                v = min(max(l3[n, k] + kappa * (x[n, k] * tn[n, k] - y[n]), 0.0), 1.0)
                change = max(change, abs(v - l3[n, k]))
                l3[n, k] = v
            v = max(l2[n] + kappa * (used - K0), 0.0)
            change = max(change, abs(v - l2[n]))
            l2[n] = v
        if change < tol:
            return j + 1, nsnap, 1, lower
    return n_iter, nsnap, 0, lower


def solve_scheduling(
    t,
    config: ScenarioConfig,
    max_iter: int = MAX_ITER,
    tol: float = DUAL_TOL,
    kappa0: float = KAPPA0,
    literal: bool = False,
    restarts: int = RESTARTS,
) -> ScheduleResult:
    """Dual subgradient scheduling with primal repair.

    Costs are rescaled to a unit maximum before the dual iterations (the
    argmin is scale invariant); the returned objective is in seconds.  Every
    iterate whose support or coefficient order changed is repaired twice,
    once by cost and once by its Lagrangian coefficients, and the best
    repaired schedule is kept.  The winner is then refined by
    :func:`perturb_and_polish` (``restarts=0`` skips this).
    """
    t = np.asarray(t, dtype=float)
    if t.shape != (config.N, config.K) or np.any(t < 0):
        raise ValueError("t must be a nonnegative (N, K) matrix")
    N, K = config.N, config.K
    scale = float(t.max(initial=0.0))
    tn = t / scale if scale > 0 else t.copy()

    best = repair_schedule(np.zeros_like(t, dtype=int), tn, config)
    if best is None:
        best = edf_schedule(config, tn)
    best_obj = schedule_cost(best, tn)

    l1, l2, l3 = np.zeros((N, K)), np.zeros(N), np.zeros((N, K))
    lam3_scale = np.ones_like(tn) if literal else tn
    need = np.asarray(config.beta, dtype=float) * config.tau
    snap_x = np.empty((CHUNK, N, K))
    snap_coef = np.empty((CHUNK, N, K))
    prev_x = np.zeros((N, K))
    prev_rank = np.arange(N * K)
    lower = -np.inf
    seen = set()
    it = 0
    while scale > 0 and it < max_iter:
        n_iter = min(CHUNK, max_iter - it)
        done, nsnap, stop, low = _dual_chunk(
            l1, l2, l3, tn, lam3_scale, need, float(config.K0), config.tau, config.n_windows,
            it, n_iter, float(kappa0), float(tol), best_obj, snap_x, snap_coef, prev_x, prev_rank,
        )
        it += done
        lower = max(lower, low)
        for i in range(nsnap):
            on = snap_x[i] > 0
            key = on.tobytes() + np.argsort(snap_coef[i], axis=None, kind="stable").tobytes()
            if key in seen or len(seen) >= MAX_CANDIDATES:
                continue
            seen.add(key)
            for pr in (None, snap_coef[i]):
                xr = repair_schedule(on, tn, config, priority=pr)
                if xr is not None:
                    obj = schedule_cost(xr, tn)
                    if obj < best_obj - 1e-15:
                        best, best_obj = xr, obj
        if stop or best_obj - lower <= 1e-12:
            break
    if restarts and best_obj > 0:
        best = perturb_and_polish(best, tn, config, restarts)
    return ScheduleResult(
        x=best,
        objective=schedule_cost(best, t),
        dual=DualState(l1, l2, l3, it, kappa0),
        iterations=it,
        lower_bound=lower * scale if np.isfinite(lower) else lower,
        candidates=len(seen),
    )
