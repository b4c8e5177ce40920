"""Comparison schemes: random device selection and equal power allocation."""
from __future__ import annotations

import numpy as np

from ..alternating import SolveOptions, solve
from ..errors import InfeasibleError
from ..model import Allocation, ChannelRealization, ScenarioConfig
from ..scheduling import edf_schedule, is_feasible_schedule

REJECTION_TRIES = 1000
REDRAWS = 50


def random_schedule(config: ScenarioConfig, rng: np.random.Generator, tries: int = REJECTION_TRIES):
    """Uniform draw over feasible schedules by rejection, else a shuffled least-laxity fill."""
    shape = (config.N, config.K)
    for _ in range(tries):
        x = rng.integers(0, 2, size=shape)
        if is_feasible_schedule(x, config):
            return x
    return edf_schedule(config, cost=rng.uniform(size=shape), fill=True)


def baseline_random(config: ScenarioConfig, channels: ChannelRealization, seed: int,
                    options: SolveOptions | None = None):
    """Random schedule, then the proposed power control and offloading.

    Schedules whose accuracy targets cannot be met are redrawn (up to
    ``REDRAWS`` times).  Returns ``(allocation, trace, result)``.
    """
    rng = np.random.default_rng([int(seed), 0x5EED])
    base = options or SolveOptions()
    last = None
    for _ in range(REDRAWS):
        x = random_schedule(config, rng)
        opts = SolveOptions(**{**base.__dict__, "fixed_schedule": x})
        try:
            return solve(config, channels, opts, algorithm="random")
        except InfeasibleError as err:
            last = err
    raise InfeasibleError(f"no random schedule met the accuracy targets: {last}")


def baseline_equal_power(config: ScenarioConfig, channels: ChannelRealization,
                         options: SolveOptions | None = None):
    """Proposed scheduling and offloading with the budget spread evenly over slots."""
    base = options or SolveOptions()
    opts = SolveOptions(**{**base.__dict__, "power": "equal"})
    return solve(config, channels, opts, algorithm="equal_power")


def allocation_only(result) -> Allocation:
    return result[0]
