"""Power control for a fixed schedule and fixed offloaded data.

Works in energy/duration coordinates ``q = p t``, where the rate constraint
``t B log2(1 + q h / (sigma2 t)) >= d`` is convex.  The expected-success
terms ``exp(-m sigma2 t / (q h))`` are linearised at the current point and
the resulting convex programs are solved in turn (successive convex
approximation).  Each round's answer is checked against the exact
constraints and pulled back toward the previous point until it passes.

Internally durations are scaled by ``T0`` and energies by ``P_k T0`` so every
variable lives in ``[0, 1]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .convex import (
    ConstraintBlock,
    SmoothConvexProgram,
    barrier_solve,
    find_interior,
    linear_block,
)
from .errors import InfeasibleError
from .model import ChannelRealization, ScenarioConfig, rate, success_probability

MAX_ROUNDS = 30
REL_TOL = 1e-6
TRUE_TOL = 1e-9
MIN_DURATION = 1e-9
SEED_ENERGY_FRACTION = 1e-6
MAX_BACKTRACK = 40
LN2 = math.log(2.0)


@dataclass
class ScaIterate:
    q: np.ndarray  # (N, K) energy, joules
    t: np.ndarray  # (N, K) airtime, seconds
    z: np.ndarray  # (N,) slot delay slacks
    trace: list = field(default_factory=list)

    @classmethod
    def from_power(cls, p, d, config: ScenarioConfig, channels: ChannelRealization) -> "ScaIterate":
        p = np.asarray(p, dtype=float)
        d = np.asarray(d, dtype=float)
        r = rate(p, channels.h, config)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(d > 0, d / r, 0.0)
        t = np.where(np.isfinite(t), t, np.inf)
        return cls(q=p * t, t=t, z=t.max(axis=1, initial=0.0))

    @property
    def power(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.t > 0, self.q / self.t, 0.0)


def taylor_expected_success(q, t, q0, t0, h, config: ScenarioConfig):
    """First-order expansion of ``exp(-m sigma2 t / (q h))`` around ``(q0, t0)``."""
    q0 = np.asarray(q0, dtype=float)
    if np.any(q0 <= 0):
        raise ValueError("expansion energy q0 must be strictly positive")
    t0 = np.asarray(t0, dtype=float)
    h = np.asarray(h, dtype=float)
    c = config.m * config.sigma2 / h
    e0 = np.exp(-c * t0 / q0)
    return e0 * (1.0 - (c / q0) * (np.asarray(t) - t0) + (c * t0 / q0**2) * (np.asarray(q) - q0))


@dataclass
class ScaLayout:
    """Variable layout: ``[tau_j, u_j, zeta_s]`` for active pairs j and busy slots s."""

    pairs: np.ndarray  # (J, 2) slot/device of every pair with data
    slots: np.ndarray  # busy slots, ordered
    slot_of_pair: np.ndarray  # index into ``slots`` per pair
    T0: float
    P: np.ndarray  # per pair power cap

    @property
    def J(self) -> int:
        return len(self.pairs)

    @property
    def dim(self) -> int:
        return 2 * self.J + len(self.slots)

    def pack(self, q, t, z=None) -> np.ndarray:
        n, k = self.pairs[:, 0], self.pairs[:, 1]
        tau = t[n, k] / self.T0
        u = q[n, k] / (self.P * self.T0)
        if z is None:
            zeta = np.array([tau[self.slot_of_pair == s].max() for s in range(len(self.slots))])
        else:
            zeta = np.asarray(z)[self.slots] / self.T0
        return np.concatenate([tau, u, zeta])

    def unpack(self, v, shape):
        J = self.J
        q = np.zeros(shape)
        t = np.zeros(shape)
        n, k = self.pairs[:, 0], self.pairs[:, 1]
        t[n, k] = v[:J] * self.T0
        q[n, k] = v[J:2 * J] * self.P * self.T0
        z = np.zeros(shape[0])
        z[self.slots] = v[2 * J:] * self.T0
        return q, t, z


@dataclass(eq=False)
class ScaProgram(SmoothConvexProgram):
    layout: ScaLayout | None = None


def _layout(x, d, config: ScenarioConfig) -> ScaLayout:
    active = (np.asarray(x) == 1) & (np.asarray(d) > 0)
    pairs = np.argwhere(active)
    slots = np.flatnonzero(active.any(axis=1))
    slot_index = -np.ones(config.N, dtype=int)
    slot_index[slots] = np.arange(slots.size)
    return ScaLayout(
        pairs=pairs,
        slots=slots,
        slot_of_pair=slot_index[pairs[:, 0]] if len(pairs) else np.zeros(0, dtype=int),
        T0=config.T0,
        P=config.P[pairs[:, 1]] if len(pairs) else np.zeros(0),
    )


def build_sca_subproblem(
    x,
    d,
    iterate: ScaIterate,
    config: ScenarioConfig,
    channels: ChannelRealization,
    shift: float = 0.0,
) -> ScaProgram:
    """Convex program at the expansion point ``iterate``.

    ``shift`` loosens every linearised row by that
    much (in their normalised units); it is only used when the expansion
    point has no strict interior.
    """
    d = np.asarray(d, dtype=float)
    lay = _layout(x, d, config)
    J, S = lay.J, len(lay.slots)
    dim = lay.dim
    n_idx, k_idx = lay.pairs[:, 0], lay.pairs[:, 1]
    dj = d[n_idx, k_idx]
    h = channels.h[n_idx, k_idx]
    gamma = lay.P * h / config.sigma2
    kappa = config.m / gamma
    rate_coef = config.T0 * config.B / dj

    q0 = iterate.q[n_idx, k_idx]
    t0 = iterate.t[n_idx, k_idx]
    if np.any(t0 <= 0):
        raise ValueError("expansion point must have positive airtime on every pair with data")
    u0 = np.maximum(q0, SEED_ENERGY_FRACTION * config.Q[k_idx]) / (lay.P * config.T0)
    tau0 = t0 / config.T0
    e0 = np.exp(-kappa * tau0 / u0)
    # lin_j = e0 (1 - a (tau - tau0) + b (u - u0))
    a = e0 * kappa / u0
    b = e0 * kappa * tau0 / u0**2
    const = e0 + a * tau0 - b * u0

    def rate_fun(v):
        tau, u = v[:J], v[J:2 * J]
        w = gamma * u / tau
        lg = np.log1p(w) / LN2
        g = 1.0 - rate_coef * tau * lg
        jac = np.zeros((J, dim))
        idx = np.arange(J)
        jac[idx, idx] = -rate_coef * (lg - w / ((1.0 + w) * LN2))
        jac[idx, J + idx] = -rate_coef * gamma / ((1.0 + w) * LN2)
        return g, jac

    def rate_hess(v, weights):
        tau, u = v[:J], v[J:2 * J]
        s = u / tau
        # second derivative of log2(1 + gamma s)
        phi2 = -gamma**2 / ((1.0 + gamma * s) ** 2 * LN2)
        c = -weights * rate_coef * phi2 / tau  # >= 0
        H = np.zeros((dim, dim))
        idx = np.arange(J)
        H[J + idx, J + idx] = c
        H[idx, J + idx] = -c * s
        H[J + idx, idx] = -c * s
        H[idx, idx] = c * s**2
        return H

    blocks = [ConstraintBlock(rate_fun, J, rate_hess, "rate")]

    rows, rhs = [], []
    bit_scale = max(float(config.D.max()), 1.0)
    demand = config.accuracy_demand
    cum_mask = np.zeros(J, dtype=bool)
    for n in range(config.N):
        cum_mask |= n_idx == n
        if demand[n] <= 0:
            continue
        row = np.zeros(dim)
        row[:J][cum_mask] = dj[cum_mask] * a[cum_mask]
        row[J:2 * J][cum_mask] = -dj[cum_mask] * b[cum_mask]
        rows.append(row / bit_scale)
        rhs.append((float((dj * const)[cum_mask].sum()) - demand[n]) / bit_scale)
    cap = config.cum_arrivals
    for k in np.unique(k_idx):
        mine = k_idx == k
        for n in range(int(n_idx[mine].min()), config.N):
            sel = mine & (n_idx <= n)
            row = np.zeros(dim)
            row[:J][sel] = -dj[sel] * a[sel]
            row[J:2 * J][sel] = dj[sel] * b[sel]
            rows.append(row / bit_scale)
            rhs.append((cap[n, k] - float((dj * const)[sel].sum())) / bit_scale)
        row = np.zeros(dim)
        row[J:2 * J][mine] = lay.P[mine] * config.T0 / config.Q[k]
        rows.append(row)
        rhs.append(1.0)
    if rows:
        blocks.append(linear_block(np.array(rows), np.array(rhs) + shift, "linearised"))

    # power cap u <= tau and slot slacks tau_j <= zeta_s
    G = np.zeros((2 * J, dim))
    idx = np.arange(J)
    G[idx, J + idx] = 1.0
    G[idx, idx] = -1.0
    G[J + idx, idx] = 1.0
    G[J + idx, 2 * J + lay.slot_of_pair] = -1.0
    blocks.append(linear_block(G, np.zeros(2 * J), "structure"))

    lower = np.concatenate([np.full(J, MIN_DURATION / config.T0), np.zeros(J), np.zeros(S)])
    upper = np.concatenate([np.ones(J), np.ones(J), np.ones(S)])
    cobj = np.concatenate([np.zeros(2 * J), np.ones(S)])
    return ScaProgram(
        dim=dim,
        objective=lambda v: (float(cobj @ v), cobj),
        constraints=blocks,
        lower=lower,
        upper=upper,
        layout=lay,
    )


def true_violation(q, t, x, d, config: ScenarioConfig, channels: ChannelRealization) -> float:
    """Largest normalised violation of the exact (non-linearised) constraints."""
    q = np.asarray(q, dtype=float)
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    h = channels.h
    active = d > 0
    bit_scale = max(float(config.D.max()), 1.0)
    worst = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(t > 0, q / t, 0.0)
        cap_rate = t * rate(p, h, config)
        short = np.where(active, (d - cap_rate) / np.where(active, d, 1.0), 0.0)
    worst = max(worst, float(short.max(initial=0.0)))
    s = success_probability(p, h, config)
    rx = np.cumsum(np.where(active, d * s, 0.0), axis=0)
    worst = max(worst, float(np.max(config.accuracy_demand - rx.sum(axis=1), initial=0.0)) / bit_scale)
    worst = max(worst, float(np.max(rx - config.cum_arrivals, initial=0.0)) / bit_scale)
    worst = max(worst, float(np.max((q.sum(axis=0) - config.Q) / config.Q, initial=0.0)))
    worst = max(worst, float(np.max((p - config.P[None, :]) / config.P[None, :], initial=0.0)))
    worst = max(worst, float(np.max(t - config.T0, initial=0.0)) / config.T0)
    worst = max(worst, float(np.max(np.where(np.asarray(x) == 1, 0.0, d), initial=0.0)) / bit_scale)
    return worst


def _tighten(p, d, config, channels):
    """Shortest airtime supporting ``d`` at powers ``p``."""
    r = rate(p, channels.h, config)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(d > 0, d / r, 0.0)
    return t


@dataclass
class PowerControlResult:
    p: np.ndarray
    t: np.ndarray
    objective: float
    trace: list
    rounds: int
    shortcut: bool = False


def solve_power_control(
    x,
    d,
    config: ScenarioConfig,
    channels: ChannelRealization,
    init=None,
    max_rounds: int = MAX_ROUNDS,
    rel_tol: float = REL_TOL,
) -> PowerControlResult:
    """SCA power control for fixed ``(x, d)``.

    ``init`` is an optional power matrix to start from.  Full power on every
    pair with data is tried first: airtime is then at its lower bound
    everywhere, so when that point satisfies every constraint it is optimal
    and no convex program is needed.
    """
    x = np.asarray(x)
    d = np.asarray(d, dtype=float)
    N, K = config.N, config.K
    if x.shape != (N, K) or d.shape != (N, K):
        raise ValueError("x and d must have shape (N, K)")
    active = (x == 1) & (d > 0)
    if np.any((d > 0) & (x != 1)):
        raise ValueError("data offloaded on an unscheduled pair")
    if not active.any():
        if np.any(config.accuracy_demand > 0):
            raise InfeasibleError("no data offloaded but accuracy is required",
                                  slot=int(np.argmax(config.accuracy_demand > 0)))
        zero = np.zeros((N, K))
        return PowerControlResult(zero, zero.copy(), 0.0, [0.0], 0, shortcut=True)

    full = np.where(active, config.P[None, :], 0.0)
    t_full = _tighten(full, d, config, channels)
    if true_violation(full * t_full, t_full, x, d, config, channels) <= TRUE_TOL:
        obj = float(t_full.max(axis=1).sum())
        return PowerControlResult(full, t_full, obj, [obj], 0, shortcut=True)

    candidates = []
    if init is not None:
        candidates.append(np.where(active, np.asarray(init, dtype=float), 0.0))
    candidates.append(full)
    candidates.append(_energy_scaled_power(active, d, config, channels))
    start = None
    for p0 in candidates:
        if np.any(p0[active] <= 0):
            continue
        t0 = _tighten(p0, d, config, channels)
        if np.all(np.isfinite(t0)) and true_violation(p0 * t0, t0, x, d, config, channels) <= TRUE_TOL:
            start = (p0, t0)
            break
    if start is None:
        v = _slot_violation(full, t_full, d, config, channels)
        raise InfeasibleError("no feasible starting point for power control", slot=v)

    p_cur, t_cur = start
    it = ScaIterate(q=p_cur * t_cur, t=t_cur, z=t_cur.max(axis=1))
    obj = float(it.z.sum())
    it.trace.append(obj)
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        new = _sca_round(x, d, it, config, channels)
        if new is None:
            break
        p_new, t_new = new
        new_obj = float(t_new.max(axis=1).sum())
        if new_obj > obj:
            break
        improvement = obj - new_obj
        it = ScaIterate(q=p_new * t_new, t=t_new, z=t_new.max(axis=1), trace=it.trace + [new_obj])
        obj = new_obj
        if improvement <= rel_tol * max(obj, 1e-12):
            break
    p = it.power
    return PowerControlResult(p, it.t, obj, it.trace, rounds)


def _energy_scaled_power(active, d, config, channels, steps: int = 60):
    """Per-device uniform power ``theta_k P_k``, largest theta within the budget.

    A device's energy ``sum p d / r(p)`` grows with p, so bisection on
    theta finds the strongest uniform power that fits its budget.
    """
    p = np.zeros(active.shape)
    for k in range(config.K):
        on = active[:, k]
        if not on.any():
            continue
        h, dk = channels.h[on, k], d[on, k]

        def energy(theta):
            pw = theta * config.P[k]
            return float((pw * dk / rate(pw, h, config)).sum())

        lo, hi = 0.0, 1.0
        if energy(hi) > config.Q[k]:
            for _ in range(steps):
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if energy(mid) <= config.Q[k] else (lo, mid)
            hi = lo
        p[on, k] = hi * config.P[k]
    return p


def _slot_violation(p, t, d, config, channels):
    s = success_probability(p, channels.h, config)
    rx = np.cumsum((d * s).sum(axis=1))
    short = np.flatnonzero(rx < config.accuracy_demand * (1 - 1e-12))
    return int(short[0]) if short.size else None


def _sca_round(x, d, it: ScaIterate, config, channels):
    """One convexify-solve-verify round; ``None`` when no progress is possible."""
    prog = build_sca_subproblem(x, d, it, config, channels)
    lay = prog.layout
    v_prev = lay.pack(it.q, it.t)
    v_start, smax = find_interior(prog, v_prev)
    if smax >= 0:
        prog = build_sca_subproblem(x, d, it, config, channels, shift=smax + 1e-9)
        if not prog.strictly_feasible(v_start):
            return None
    v, _, _ = barrier_solve(prog, v_start)
    shape = (config.N, config.K)
    v_ok = None
    step = 1.0
    for _ in range(MAX_BACKTRACK):
        trial = v_prev + step * (v - v_prev)
        q, t, _ = lay.unpack(trial, shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(t > 0, np.minimum(q / t, config.P[None, :]), 0.0)
        t_tight = _tighten(p, d, config, channels)
        if np.all(np.isfinite(t_tight)) and true_violation(p * t_tight, t_tight, x, d, config, channels) <= TRUE_TOL:
            v_ok = (p, t_tight)
            break
        step *= 0.5
    return v_ok


def equal_power_levels(x, config: ScenarioConfig) -> np.ndarray:
    """Budget spread evenly over a device's scheduled slots at full duration.

    ``p_nk = min(P_k, Q_k / (S_k T0))`` on scheduled pairs, ``S_k`` being
    the number of slots device k is scheduled in.
    """
    x = np.asarray(x)
    S = x.sum(axis=0)
    with np.errstate(divide="ignore"):
        even = np.where(S > 0, config.Q / (np.maximum(S, 1) * config.T0), np.inf)
    return np.where(x == 1, np.minimum(config.P, even)[None, :], 0.0)
