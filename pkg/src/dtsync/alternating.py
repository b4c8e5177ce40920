"""Outer alternating loop: schedule, then power, then offloading, repeated.

Every stage proposes a new allocation and the proposal is kept only when it
is feasible and does not increase the total delay, so the objective trace
is nonincreasing by construction.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError
from .model import (
    Allocation,
    ChannelRealization,
    ScenarioConfig,
    check_feasibility,
    evaluate,
    rate,
    total_delay,
)
from .offloading import solve_offloading
from .power_control import equal_power_levels, solve_power_control
from .scheduling import MAX_ITER, RESTARTS, edf_schedule, solve_scheduling

MAX_OUTER = 50
REL_TOL = 1e-4

ACCEPTED = "accepted"
REJECTED = "rejected"
FAILED = "infeasible"


@dataclass
class SolveOptions:
    max_outer: int = MAX_OUTER
    rel_tol: float = REL_TOL
    schedule_iters: int = MAX_ITER
    schedule_restarts: int = RESTARTS
    literal_coefficients: bool = False
    sca_rounds: int = 30
    power: str = "sca"  # "sca" or "equal"
    fixed_schedule: np.ndarray | None = None
    fill_blocks: bool = True

    def __post_init__(self):
        if self.power not in ("sca", "equal"):
            raise ValueError(f"unknown power rule {self.power!r}")
        if self.max_outer < 0:
            raise ValueError("max_outer must be nonnegative")


@dataclass
class AlternatingTrace:
    objectives: list = field(default_factory=list)
    statuses: list = field(default_factory=list)
    stage_times: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    def is_monotone(self, slack: float = 1e-9) -> bool:
        obj = np.asarray(self.objectives)
        return bool(np.all(np.diff(obj) <= slack))


@dataclass
class ExperimentResult:
    algorithm: str
    total_delay_s: float
    total_energy_j: float
    min_accuracy: float
    outer_iterations: int
    converged: bool
    status: str
    wall_ms: float
    feasible: bool = True
    violations: dict = field(default_factory=dict)


def full_power_airtime(config: ScenarioConfig, channels: ChannelRealization) -> np.ndarray:
    """Time to push a slot's whole arrival at full power, capped at ``T0``."""
    r = rate(config.P[None, :], channels.h, config)
    return np.minimum(config.D / r, config.T0)


def fill_blocks(x, cost, config: ScenarioConfig) -> np.ndarray:
    """Hand out unused resource blocks in each slot by ascending cost."""
    x = np.array(x, dtype=int)
    for n in range(config.N):
        spare = config.K0 - int(x[n].sum())
        if spare > 0:
            free = np.flatnonzero(x[n] == 0)
            pick = free[np.argsort(cost[n, free], kind="stable")[:spare]]
            x[n, pick] = 1
    return x


def _powers(x, p_prev, config: ScenarioConfig, rule: str) -> np.ndarray:
    """Transmit powers to offload with: previous level, or full power on idle pairs."""
    if rule == "equal":
        return equal_power_levels(x, config)
    base = np.where(p_prev > 0, p_prev, config.P[None, :])
    return np.where(np.asarray(x) == 1, base, 0.0)


def _offload(x, p, config, channels):
    try:
        d, _, _ = solve_offloading(x, p, config, channels)
    except InfeasibleError:
        return None
    return Allocation.build(x, p, d, config, channels)


def initialize_feasible(
    config: ScenarioConfig,
    channels: ChannelRealization,
    x=None,
    power: str = "sca",
) -> Allocation:
    """Least-laxity schedule filled to ``K0`` blocks, full power, LP offloading."""
    cost = full_power_airtime(config, channels)
    if x is None:
        x = edf_schedule(config, cost=cost, fill=True)
    p = _powers(x, np.zeros(np.shape(x)), config, power)
    try:
        d, _, _ = solve_offloading(x, p, config, channels)
    except InfeasibleError as err:
        raise InfeasibleError(
            f"initial schedule cannot meet the accuracy targets at full power: {err}", slot=err.slot
        ) from err
    alloc = Allocation.build(x, p, d, config, channels)
    report = check_feasibility(alloc, config, channels)
    if not report.feasible:
        raise InfeasibleError(f"initial allocation fails the checker: {report}")
    return alloc


def _accept(cand, current, config, channels):
    if cand is None:
        return False, FAILED
    if not check_feasibility(cand, config, channels).feasible:
        return False, FAILED
    if total_delay(cand.x, cand.t) <= total_delay(current.x, current.t):
        return True, ACCEPTED
    return False, REJECTED


def solve(
    config: ScenarioConfig,
    channels: ChannelRealization,
    options: SolveOptions | None = None,
    init: Allocation | None = None,
    algorithm: str = "proposed",
):
    """Run the alternating optimisation; returns ``(allocation, trace, result)``."""
    opts = options or SolveOptions()
    start = time.perf_counter()
    if init is not None:
        alloc = init.copy()
    else:
        alloc = initialize_feasible(config, channels, x=opts.fixed_schedule, power=opts.power)
    proxy = full_power_airtime(config, channels)
    trace = AlternatingTrace(objectives=[total_delay(alloc.x, alloc.t)])

    for it in range(1, opts.max_outer + 1):
        status, times = {}, {}
        prev = trace.objectives[-1]

        tic = time.perf_counter()
        if opts.fixed_schedule is None:
            cost = np.where(alloc.d > 0, alloc.t, proxy)
            res = solve_scheduling(
                cost, config, max_iter=opts.schedule_iters,
                literal=opts.literal_coefficients, restarts=opts.schedule_restarts,
            )
            x_new = fill_blocks(res.x, cost, config) if opts.fill_blocks else res.x
            cand = _offload(x_new, _powers(x_new, alloc.p, config, opts.power), config, channels)
            ok, status["schedule"] = _accept(cand, alloc, config, channels)
            if ok:
                alloc = cand
        times["schedule"] = time.perf_counter() - tic

        tic = time.perf_counter()
        if opts.power == "sca":
            try:
                pc = solve_power_control(alloc.x, alloc.d, config, channels, init=alloc.p,
                                         max_rounds=opts.sca_rounds)
                cand = Allocation.build(alloc.x, pc.p, alloc.d, config, channels)
            except InfeasibleError:
                cand = None
            ok, status["power"] = _accept(cand, alloc, config, channels)
            if ok:
                alloc = cand
        times["power"] = time.perf_counter() - tic

        tic = time.perf_counter()
        cand = _offload(alloc.x, _powers(alloc.x, alloc.p, config, opts.power), config, channels)
        ok, status["offload"] = _accept(cand, alloc, config, channels)
        if ok:
            alloc = cand
        times["offload"] = time.perf_counter() - tic

        obj = total_delay(alloc.x, alloc.t)
        trace.objectives.append(obj)
        trace.statuses.append(status)
        trace.stage_times.append(times)
        trace.iterations = it
        if prev - obj <= opts.rel_tol * max(prev, 1e-12):
            trace.converged = True
            break

    ev = evaluate(alloc, config, channels)
    result = ExperimentResult(
        algorithm=algorithm,
        total_delay_s=ev.total_delay,
        total_energy_j=float(ev.energies.sum()),
        min_accuracy=float(ev.accuracies.min()),
        outer_iterations=trace.iterations,
        converged=trace.converged,
        status="ok" if ev.report.feasible else "infeasible",
        wall_ms=(time.perf_counter() - start) * 1e3,
        feasible=ev.report.feasible,
        violations=dict(ev.report.violations),
    )
    return alloc, trace, result
