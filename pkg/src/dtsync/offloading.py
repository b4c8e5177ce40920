"""Data offloading for a fixed schedule and fixed powers, as a linear program.

With ``x`` and ``p`` fixed, airtime ``d / r`` is linear in ``d`` and the
expected delivered bits ``d * s`` are linear too, so the delay problem
becomes an LP in ``d`` plus one max-delay slack ``y_n`` per slot.  Columns
are scaled (bits by the largest arrival, seconds by ``T0``) and every row is
normalised to unit infinity norm before the simplex runs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convex import INFEASIBLE, OPTIMAL, LinearProgram, SolveStatus, simplex_solve
from .errors import InfeasibleError
from .model import ChannelRealization, ScenarioConfig, rate, success_probability

CHECK_TOL = 1e-8


@dataclass
class OffloadingLpMap:
    """Column bookkeeping for the offloading LP.

    ``d_col[n, k]`` is the LP column of ``d_nk`` (-1 when fixed at 0) and
    ``y_col[n]`` the column of the slot slack (-1 when the slot is empty).
    """

    d_col: np.ndarray
    y_col: np.ndarray
    r: np.ndarray
    s: np.ndarray
    bit_scale: float
    time_scale: float

    @property
    def n_cols(self) -> int:
        return int((self.d_col >= 0).sum() + (self.y_col >= 0).sum())

    def pairs(self):
        return [tuple(ix) for ix in np.argwhere(self.d_col >= 0)]

    def unpack(self, v):
        """LP solution to ``(d, y)`` in bits and seconds."""
        v = np.asarray(v, dtype=float)
        d = np.zeros(self.d_col.shape)
        on = self.d_col >= 0
        d[on] = np.maximum(v[self.d_col[on]], 0.0) * self.bit_scale
        y = np.zeros(self.y_col.shape)
        yon = self.y_col >= 0
        y[yon] = v[self.y_col[yon]] * self.time_scale
        return d, y


def _normalise(rows, rhs):
    A = np.asarray(rows, dtype=float).reshape(len(rhs), -1)
    b = np.asarray(rhs, dtype=float)
    norm = np.abs(A).max(axis=1, initial=0.0)
    norm[norm == 0] = 1.0
    return A / norm[:, None], b / norm


def build_offloading_lp(
    x,
    p,
    config: ScenarioConfig,
    channels: ChannelRealization,
    upto: int | None = None,
):
    """Assemble the LP; ``upto`` keeps only the accuracy rows of slots ``<= upto``."""
    x = np.asarray(x)
    p = np.asarray(p, dtype=float)
    N, K = config.N, config.K
    if x.shape != (N, K) or p.shape != (N, K):
        raise ValueError("x and p must have shape (N, K)")
    if np.any(p < 0) or np.any(p > config.P[None, :] * (1 + 1e-9)):
        raise ValueError("powers must lie in [0, P_k]")
    h = channels.h
    r = rate(p, h, config)
    s = success_probability(p, h, config)
    usable = (x == 1) & (r > 0) & (s > 0)

    d_col = -np.ones((N, K), dtype=int)
    d_col[usable] = np.arange(int(usable.sum()))
    y_col = -np.ones(N, dtype=int)
    busy = usable.any(axis=1)
    y_col[busy] = int(usable.sum()) + np.arange(int(busy.sum()))
    n_cols = int(usable.sum() + busy.sum())

    bit_scale = max(float(config.D.max()), 1.0)
    time_scale = float(config.T0)
    lp_map = OffloadingLpMap(d_col, y_col, r, s, bit_scale, time_scale)

    rows, rhs = [], []

    def row():
        return np.zeros(n_cols)

    # y_n >= d_nk / r_nk
    for n, k in np.argwhere(usable):
        a = row()
        a[d_col[n, k]] = bit_scale / (r[n, k] * time_scale)
        a[y_col[n]] = -1.0
        rows.append(a)
        rhs.append(0.0)
    # cumulative accuracy: sum_{i<=n,k} s d >= demand_n
    demand = config.accuracy_demand / bit_scale
    last = N - 1 if upto is None else int(upto)
    a = row()
    for n in range(last + 1):
        for k in np.flatnonzero(usable[n]):
            a[d_col[n, k]] = -s[n, k]
        if demand[n] > 0:
            rows.append(a.copy())
            rhs.append(-demand[n])
    # energy per device
    for k in range(K):
        on = np.flatnonzero(usable[:, k])
        if on.size:
            a = row()
            a[d_col[on, k]] = p[on, k] * bit_scale / r[on, k]
            rows.append(a)
            rhs.append(float(config.Q[k]))
    # cumulative data caps per device
    cap = config.cum_arrivals / bit_scale
    for k in range(K):
        a = row()
        seen = False
        for n in range(N):
            if usable[n, k]:
                a[d_col[n, k]] = s[n, k]
                seen = True
            if seen:
                rows.append(a.copy())
                rhs.append(cap[n, k])

    c = np.zeros(n_cols)
    c[y_col[busy]] = 1.0
    upper = np.full(n_cols, np.inf)
    upper[d_col[usable]] = r[usable] * time_scale / bit_scale
    if rows:
        A, b = _normalise(rows, rhs)
    else:
        A, b = np.zeros((0, n_cols)), np.zeros(0)
    return LinearProgram(c=c, A=A, b=b, upper=upper), lp_map


def _first_infeasible_slot(x, p, config, channels):
    for n in range(config.N):
        lp, _ = build_offloading_lp(x, p, config, channels, upto=n)
        _, _, st = simplex_solve(lp)
        if st.outcome == INFEASIBLE:
            return n
    return None


def offloading_violation(d, x, p, config: ScenarioConfig, channels: ChannelRealization) -> float:
    """Largest relative violation of the offloading constraints at ``d``."""
    d = np.asarray(d, dtype=float)
    r = rate(p, channels.h, config)
    s = success_probability(p, channels.h, config)
    scale = max(float(config.D.max()), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(d > 0, d / r, 0.0)
    rx = np.cumsum(d * s, axis=0)
    worst = [
        float(np.max(config.accuracy_demand - rx.sum(axis=1), initial=0.0)) / scale,
        float(np.max((t * p).sum(axis=0) - config.Q, initial=0.0) / config.Q.max()),
        float(np.max(rx - config.cum_arrivals, initial=0.0)) / scale,
        float(np.max(t - config.T0, initial=0.0)) / config.T0,
        float(np.max(-d, initial=0.0)) / scale,
        float(np.max(np.where(np.asarray(x) == 1, 0.0, d), initial=0.0)) / scale,
    ]
    return max(worst)


def solve_offloading(x, p, config: ScenarioConfig, channels: ChannelRealization):
    """Optimal ``d`` for fixed ``(x, p)``; returns ``(d, objective_seconds, status)``.

    Raises :class:`InfeasibleError` naming the first slot whose accuracy
    target cannot be met.
    """
    x = np.asarray(x)
    p = np.asarray(p, dtype=float)
    lp, lp_map = build_offloading_lp(x, p, config, channels)
    if lp.n == 0:
        if np.any(config.accuracy_demand > 0):
            raise InfeasibleError("no usable transmissions but accuracy is required",
                                  slot=int(np.argmax(config.accuracy_demand > 0)))
        return np.zeros((config.N, config.K)), 0.0, SolveStatus(OPTIMAL)
    v, _, status = simplex_solve(lp)
    if v is None:
        if status.outcome == INFEASIBLE:
            slot = _first_infeasible_slot(x, p, config, channels)
            raise InfeasibleError("accuracy targets unreachable with this schedule and power", slot=slot)
        raise RuntimeError(f"offloading LP failed: {status.outcome} {status.message}")
    d, _ = lp_map.unpack(v)
    # clip tiny overshoots of the airtime bound
    d = np.minimum(d, lp_map.r * config.T0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(d > 0, d / lp_map.r, 0.0)
    objective = float(t.max(axis=1).sum())
    status.residual = max(status.residual, 0.0)
    return d, objective, status
