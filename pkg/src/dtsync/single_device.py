"""The one-device case: transmission-slot chains and closed-form hop delays.

With a single device that must transmit once in every window of ``tau + 1``
slots, a schedule is a chain of transmission slots whose consecutive gaps are
at most ``tau + 1``.  Given the payload of each slot, the best airtime of a
hop depends only on the previous and the current slot, so the cheapest chain
is a shortest path in a DAG.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .alternating import AlternatingTrace
from .errors import InfeasibleError
from .model import (
    Allocation,
    ChannelRealization,
    ScenarioConfig,
    check_feasibility,
    rate,
    total_delay,
)
from .offloading import solve_offloading
from .power_control import solve_power_control

SOURCE = -1
PBAR_RTOL = 1e-10
MAX_ROUNDS = 20
REL_TOL = 1e-4


def _require_single(config: ScenarioConfig):
    if config.K != 1:
        raise ValueError("the single-device pipeline needs K = 1")
    if int(config.activations[0]) != 1:
        raise ValueError("the single-device pipeline assumes one transmission per window; "
                         "use the general solver instead")


def initial_slot(config: ScenarioConfig, channels: ChannelRealization) -> int:
    """Slot among the first ``tau + 1`` with the strongest channel (0-based)."""
    _require_single(config)
    last = min(config.tau + 1, config.N)
    return int(np.argmax(channels.h[:last, 0]))


def _energy_per_bitrate(p, d, h, config):
    """Energy ``d p / r(p)`` to send ``d`` bits at power ``p``."""
    return d * p * math.log(2.0) / (config.B * math.log1p(p * h / config.sigma2))


def pbar_solve(d_q: float, h_q: float, rhs: float, config: ScenarioConfig) -> float:
    """Power at which sending ``d_q`` bits costs exactly ``rhs`` joules.

    The energy ``d p / r(p)`` grows strictly with p from the limit
    ``d sigma2 ln2 / (B h)`` at p -> 0, so the root is unique; a budget at
    or below that limit is infeasible.
    """
    if d_q <= 0 or rhs <= 0:
        raise ValueError("pbar_solve needs positive payload and budget")
    floor = d_q * config.sigma2 * math.log(2.0) / (config.B * h_q)
    if rhs <= floor * (1 + 1e-12):
        raise InfeasibleError(f"energy budget {rhs:.3e} J is below the zero-power limit {floor:.3e} J")
    hi = config.sigma2 / h_q
    while _energy_per_bitrate(hi, d_q, h_q, config) <= rhs:
        hi *= 2.0
    lo = hi * 1e-12
    while _energy_per_bitrate(lo, d_q, h_q, config) >= rhs:
        lo *= 1e-3

    def gap(p):
        return _energy_per_bitrate(p, d_q, h_q, config) / rhs - 1.0

    root = brentq(gap, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(gap(root)) > PBAR_RTOL:
        raise RuntimeError(f"root residual {gap(root):.2e} above tolerance")
    return float(root)


def hop_budget(m: int, config: ScenarioConfig) -> float:
    """Energy share ``(tau + 1) Q / (N - m)`` of a hop whose previous slot is ``m``.

    ``m`` is 0-based with ``SOURCE`` for the first transmission, so the
    1-based count of slots already used is ``m + 1``.
    """
    return (config.tau + 1) * float(config.Q[0]) / (config.N - (m + 1))


def edge_delay(m: int, q: int, d_q: float, config: ScenarioConfig, channels: ChannelRealization) -> float:
    """Shortest airtime for the hop ``m -> q`` carrying ``d_q`` bits.

    Either the power cap or the hop's energy share binds; the result is
    ``d_q / r(min(P, pbar))``.  Raises :class:`InfeasibleError` when the
    energy share cannot carry the payload at any power.
    """
    if q - m > config.tau + 1 or q <= m:
        raise ValueError(f"hop {m} -> {q} violates the window spacing")
    if d_q <= 0:
        return 0.0
    h = float(channels.h[q, 0])
    P = float(config.P[0])
    t_cap = d_q / float(rate(P, h, config))
    budget = hop_budget(m, config)
    if _energy_per_bitrate(P, d_q, h, config) <= budget:
        return t_cap
    pbar = pbar_solve(d_q, h, budget, config)
    return max(t_cap, budget / pbar)


@dataclass
class ChainEdgeCosts:
    """Hop delays: ``source[q]`` for a first transmission at q, ``T[m, q]`` otherwise.

    Entries that are not admissible hops, or whose hop is infeasible, are
    ``inf``.
    """

    source: np.ndarray
    T: np.ndarray
    tau: int

    @property
    def N(self) -> int:
        return self.source.size


def build_edge_costs(d, config: ScenarioConfig, channels: ChannelRealization) -> ChainEdgeCosts:
    d = np.asarray(d, dtype=float).reshape(config.N, -1)[:, 0]
    N, tau = config.N, config.tau

    def cost(m, q):
        try:
            t = edge_delay(m, q, float(d[q]), config, channels)
        except InfeasibleError:
            return math.inf
        return t if t <= config.T0 else math.inf

    source = np.full(N, math.inf)
    for q in range(min(tau + 1, N)):
        source[q] = cost(SOURCE, q)
    T = np.full((N, N), math.inf)
    for m in range(N):
        for q in range(m + 1, min(N, m + tau + 2)):
            T[m, q] = cost(m, q)
    return ChainEdgeCosts(source=source, T=T, tau=tau)


def chain_schedule(edges: ChainEdgeCosts, config: ScenarioConfig):
    """Cheapest transmission chain; returns ``(x, cost)``.

    Shortest path from a virtual source (first hop into slots ``0..tau``)
    to a virtual sink (reachable from slots ``N-1-tau..N-1``).  Ties go to
    the chain with fewer hops, then to later slots.
    """
    N, tau = edges.N, edges.tau
    if N <= tau:
        return np.zeros(N, dtype=int), 0.0
    best = np.full(N, math.inf)
    hops = np.full(N, np.iinfo(np.int64).max)
    prev = np.full(N, SOURCE)
    for q in range(N):
        if q <= tau and edges.source[q] < math.inf:
            best[q], hops[q] = edges.source[q], 1
        for m in range(max(0, q - tau - 1), q):
            c = best[m] + edges.T[m, q]
            if c < best[q] or (c == best[q] and hops[m] + 1 < hops[q]):
                best[q], hops[q], prev[q] = c, hops[m] + 1, m
    tail = range(N - 1 - tau, N)
    end = min(tail, key=lambda q: (best[q], hops[q], -q))
    if not math.isfinite(best[end]):
        raise InfeasibleError("no admissible transmission chain")
    x = np.zeros(N, dtype=int)
    q = end
    while q != SOURCE:
        x[q] = 1
        q = prev[q]
    return x, float(best[end])


def _offload_and_power(x, config, channels):
    """Offloading LP at full power followed by power control, for a fixed chain."""
    X = np.asarray(x).reshape(config.N, 1)
    p = X * config.P[None, :]
    d, _, _ = solve_offloading(X, p, config, channels)
    alloc = Allocation.build(X, p, d, config, channels)
    if (alloc.d > 0).any():
        pc = solve_power_control(X, alloc.d, config, channels, init=p)
        cand = Allocation.build(X, pc.p, alloc.d, config, channels)
        if check_feasibility(cand, config, channels).feasible and \
                total_delay(cand.x, cand.t) <= total_delay(alloc.x, alloc.t):
            alloc = cand
    return alloc


def solve_single_device(
    config: ScenarioConfig,
    channels: ChannelRealization,
    max_rounds: int = MAX_ROUNDS,
    rel_tol: float = REL_TOL,
):
    """Alternate chain scheduling and offloading; returns ``(allocation, trace)``.

    The all-slots schedule is offloaded first; its payloads define the hop
    costs of the first chain.  A new chain is kept only when it is feasible
    and no slower than the incumbent.
    """
    _require_single(config)
    alloc = _offload_and_power(np.ones(config.N, dtype=int), config, channels)
    trace = AlternatingTrace(objectives=[total_delay(alloc.x, alloc.t)])
    seen = set()
    for it in range(1, max_rounds + 1):
        tic = time.perf_counter()
        prev = trace.objectives[-1]
        edges = build_edge_costs(alloc.d, config, channels)
        status = "rejected"
        try:
            x, _ = chain_schedule(edges, config)
        except InfeasibleError:
            x, status = None, "infeasible"
        if x is not None and x.tobytes() not in seen:
            seen.add(x.tobytes())
            try:
                cand = _offload_and_power(x, config, channels)
            except InfeasibleError:
                cand, status = None, "infeasible"
            if cand is not None and check_feasibility(cand, config, channels).feasible:
                if total_delay(cand.x, cand.t) <= prev:
                    alloc, status = cand, "accepted"
        obj = total_delay(alloc.x, alloc.t)
        trace.objectives.append(obj)
        trace.statuses.append({"chain": status})
        trace.stage_times.append({"chain": time.perf_counter() - tic})
        trace.iterations = it
        if prev - obj <= rel_tol * max(prev, 1e-12):
            trace.converged = True
            break
    return alloc, trace
