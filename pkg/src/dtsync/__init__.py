"""Delay-minimising resource allocation for digital-twin synchronisation.

The joint problem schedules K devices over N slots, picks transmit powers
and decides how many bits each transmission offloads, so that the twin's
accuracy target holds in every slot at minimum total airtime.
"""
from .alternating import SolveOptions, solve
from .errors import InfeasibleError
from .model import (
    DEFAULTS,
    Allocation,
    ChannelRealization,
    ScenarioConfig,
    check_feasibility,
    evaluate,
    generate_channels,
    make_config,
)
from .single_device import solve_single_device

__version__ = "0.1.0"

__all__ = [
    "DEFAULTS",
    "Allocation",
    "ChannelRealization",
    "InfeasibleError",
    "ScenarioConfig",
    "SolveOptions",
    "check_feasibility",
    "evaluate",
    "generate_channels",
    "make_config",
    "solve",
    "solve_single_device",
]
