"""Scenario description, channel generation and the physical-layer formulas.

All arrays are indexed ``[slot, device]`` with 0-based indices.  Internally
everything is in SI units (watts, joules, seconds, bits); dBm inputs are
converted once in :func:`make_config`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError

FEAS_TOL = 1e-6
MIN_DISTANCE_M = 1.0

DEFAULTS = dict(
    K=10,
    N=10,
    T0=1.0,
    B=1e6,
    noise_dbm_per_hz=-174.0,
    m=1.0,
    alpha=0.4,
    Q=10e-3,
    P_dbm=1.0,
    D=300e3,
    A=0.6,
    tau=3,
    beta=1.0 / 3.0,
    K0=5,
    area_m=200.0,
    shadowing_db=8.0,
    pathloss_intercept_db=128.1,
    pathloss_slope=37.6,
)


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(watt):
    return 10.0 * np.log10(np.asarray(watt, dtype=float)) + 30.0


def noise_power(noise_dbm_per_hz: float, bandwidth_hz: float) -> float:
    return float(dbm_to_watt(noise_dbm_per_hz)) * bandwidth_hz


def required_activations(beta, tau: int) -> np.ndarray:
    """Minimum transmissions per window, ``ceil(beta * tau)``.

    The small offset keeps ``1/3 * 3`` from rounding up to 2.
    """
    return np.ceil(np.asarray(beta, dtype=float) * tau - 1e-9).astype(int)


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    K: int
    N: int
    T0: float
    B: float
    sigma2: float
    m: float
    alpha: float
    Q: np.ndarray
    P: np.ndarray
    D: np.ndarray
    A: np.ndarray
    tau: int
    beta: np.ndarray
    K0: int
    area_m: float = 200.0
    pathloss_intercept_db: float = 128.1
    pathloss_slope: float = 37.6
    shadowing_db: float = 8.0

    def __post_init__(self):
        K, N = self.K, self.N
        if int(K) != K or K < 1 or int(N) != N or N < 1:
            raise ValueError("K and N must be positive integers")
        for name in ("T0", "B", "sigma2", "m", "alpha", "area_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.shadowing_db < 0:
            raise ValueError("shadowing_db must be nonnegative")
        if int(self.tau) != self.tau or self.tau < 1:
            raise ValueError("tau must be a positive integer")
        if int(self.K0) != self.K0 or not 1 <= self.K0 <= K:
            raise ValueError("K0 must be an integer in [1, K]")
        shapes = {"Q": (K,), "P": (K,), "D": (N, K), "A": (N,), "beta": (K,)}
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.Q <= 0) or np.any(self.P <= 0):
            raise ValueError("energy budgets and power caps must be positive")
        if np.any(self.D < 0):
            raise ValueError("arrivals must be nonnegative")
        if np.any(self.A < 0) or np.any(self.A > 1):
            raise ValueError("accuracy targets must lie in [0, 1]")
        if np.any(self.beta <= 0) or np.any(self.beta > 1):
            raise ValueError("beta must lie in (0, 1]")
        if self.n_windows > 0:
            demand = int(self.activations.sum())
            capacity = self.K0 * (self.tau + 1)
            if demand > capacity:
                raise InfeasibleError(
                    f"regularity demand {demand} exceeds resource-block capacity "
                    f"{capacity} per window"
                )

    @property
    def activations(self) -> np.ndarray:
        return required_activations(self.beta, self.tau)

    @property
    def n_windows(self) -> int:
        """Number of regularity windows that fit inside the horizon."""
        return max(self.N - self.tau, 0)

    @property
    def cum_arrivals(self) -> np.ndarray:
        """Per-device cumulative arrivals, shape (N, K)."""
        return np.cumsum(self.D, axis=0)

    @property
    def accuracy_demand(self) -> np.ndarray:
        """Delivered bits needed by slot n: ``A_n^(1/alpha) * sum_{i<=n,k} D_ik``."""
        total = np.cumsum(self.D.sum(axis=1))
        return self.A ** (1.0 / self.alpha) * total

    def replace(self, **changes) -> "ScenarioConfig":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return ScenarioConfig(**values)


def make_config(**overrides) -> ScenarioConfig:
    """Build a config from the defaults, broadcasting scalars.

    Accepts ``P_dbm`` (or ``P`` in watts), ``noise_dbm_per_hz`` (or
    ``sigma2`` in watts) and scalar-or-array ``Q``, ``D``, ``A``, ``beta``.
    """
    unknown = set(overrides) - set(DEFAULTS) - {"P", "sigma2"}
    if unknown:
        raise TypeError(f"unknown config keys: {sorted(unknown)}")
    v = dict(DEFAULTS)
    v.update(overrides)
    K, N = int(v["K"]), int(v["N"])
    if "P" in overrides:
        P = np.broadcast_to(np.asarray(v["P"], dtype=float), (K,))
    else:
        P = np.broadcast_to(dbm_to_watt(v["P_dbm"]), (K,))
    if "sigma2" in overrides:
        sigma2 = float(v["sigma2"])
    else:
        sigma2 = noise_power(v["noise_dbm_per_hz"], v["B"])
    return ScenarioConfig(
        K=K,
        N=N,
        T0=float(v["T0"]),
        B=float(v["B"]),
        sigma2=sigma2,
        m=float(v["m"]),
        alpha=float(v["alpha"]),
        Q=np.broadcast_to(np.asarray(v["Q"], dtype=float), (K,)).copy(),
        P=P.copy(),
        D=np.broadcast_to(np.asarray(v["D"], dtype=float), (N, K)).copy(),
        A=np.broadcast_to(np.asarray(v["A"], dtype=float), (N,)).copy(),
        tau=int(v["tau"]),
        beta=np.broadcast_to(np.asarray(v["beta"], dtype=float), (K,)).copy(),
        K0=int(v["K0"]),
        area_m=float(v["area_m"]),
        pathloss_intercept_db=float(v["pathloss_intercept_db"]),
        pathloss_slope=float(v["pathloss_slope"]),
        shadowing_db=float(v["shadowing_db"]),
    )


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    h: np.ndarray
    seed: int
    positions: np.ndarray | None = None

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.ndim != 2 or not np.all(np.isfinite(h)) or np.any(h <= 0):
            raise ValueError("channel gains must be a finite, strictly positive matrix")
        object.__setattr__(self, "h", h)


def path_loss_db(distance_m, config: ScenarioConfig):
    d_km = np.maximum(np.asarray(distance_m, dtype=float), MIN_DISTANCE_M) / 1000.0
    return config.pathloss_intercept_db + config.pathloss_slope * np.log10(d_km)


def generate_channels(config: ScenarioConfig, seed: int) -> ChannelRealization:
    """Draw device positions and per-slot shadowed path-loss gains.

    The server sits at the centre of the square.  Each device has its own
    random stream keyed on ``(seed, k)``, so device k sees the same
    position and shadowing whatever K and N are (prefix-consistent sweeps).
    """
    K, N = config.K, config.N
    h = np.empty((N, K))
    positions = np.empty((K, 2))
    half = config.area_m / 2.0
    for k in range(K):
        rng = np.random.default_rng([int(seed), k])
        positions[k] = rng.uniform(-half, half, size=2)
        shadow = rng.standard_normal(N) * config.shadowing_db
        loss = path_loss_db(np.hypot(*positions[k]), config) + shadow
        h[:, k] = 10.0 ** (-loss / 10.0)
    return ChannelRealization(h=h, seed=int(seed), positions=positions)


def rate(p, h, config: ScenarioConfig):
    """Shannon rate ``B log2(1 + p h / sigma2)`` in bits/s."""
    snr = np.asarray(p, dtype=float) * np.asarray(h, dtype=float) / config.sigma2
    return config.B * np.log1p(snr) / math.log(2.0)


def success_probability(p, h, config: ScenarioConfig):
    """Probability a transmission is received, ``exp(-m sigma2 / (p h))``; 0 at p = 0."""
    p = np.asarray(p, dtype=float)
    h = np.asarray(h, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = -config.m * config.sigma2 / (p * h)
        out = np.where(p > 0, np.exp(expo), 0.0)
    return out[()] if out.ndim == 0 else out


def accuracy(received_cum, arrived_cum, alpha: float):
    """Twin accuracy ``(received / arrived)^alpha``; 1 when nothing has arrived."""
    received_cum = np.asarray(received_cum, dtype=float)
    arrived_cum = np.asarray(arrived_cum, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(arrived_cum > 0, received_cum / arrived_cum, 1.0)
    out = np.clip(ratio, 0.0, None) ** alpha
    return out[()] if out.ndim == 0 else out


def durations(p, d, config: ScenarioConfig, channels: ChannelRealization) -> np.ndarray:
    """Airtime ``d / r`` per pair; 0 where nothing is sent, inf if data has no rate."""
    p = np.asarray(p, dtype=float)
    d = np.asarray(d, dtype=float)
    r = rate(p, channels.h, config)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(d > 0, d / r, 0.0)
    return np.where((d > 0) & (r <= 0), np.inf, t)


@dataclass(eq=False)
class Allocation:
    x: np.ndarray
    p: np.ndarray
    d: np.ndarray
    t: np.ndarray

    @classmethod
    def build(cls, x, p, d, config: ScenarioConfig, channels: ChannelRealization) -> "Allocation":
        x = np.asarray(x).astype(int)
        p = np.asarray(p, dtype=float).copy()
        d = np.asarray(d, dtype=float).copy()
        if x.shape != (config.N, config.K) or p.shape != x.shape or d.shape != x.shape:
            raise ValueError("allocation shape does not match the scenario")
        return cls(x=x, p=p, d=d, t=durations(p, d, config, channels))

    @classmethod
    def empty(cls, config: ScenarioConfig) -> "Allocation":
        z = np.zeros((config.N, config.K))
        return cls(x=z.astype(int), p=z.copy(), d=z.copy(), t=z.copy())

    def copy(self) -> "Allocation":
        return Allocation(self.x.copy(), self.p.copy(), self.d.copy(), self.t.copy())


def slot_delays(x, t) -> np.ndarray:
    return (np.asarray(x) * np.asarray(t)).max(axis=1)


def total_delay(x, t) -> float:
    return float(slot_delays(x, t).sum())


CONSTRAINTS = (
    "accuracy",
    "energy",
    "data_cap",
    "regularity",
    "resource_blocks",
    "offload_nonneg",
    "binary_schedule",
    "power_bounds",
    "duration_bounds",
    "coupling",
)


@dataclass
class FeasibilityReport:
    """Worst relative violation per constraint family of the joint problem."""

    violations: dict = field(default_factory=dict)
    tol: float = FEAS_TOL

    @property
    def passed(self) -> dict:
        return {name: v <= self.tol for name, v in self.violations.items()}

    @property
    def feasible(self) -> bool:
        return all(self.passed.values())

    def failures(self) -> list:
        return [name for name, ok in self.passed.items() if not ok]

    def __str__(self):
        if self.feasible:
            return "feasible"
        return "infeasible: " + ", ".join(
            f"{n}={self.violations[n]:.3g}" for n in self.failures()
        )


def window_counts(x, tau: int) -> np.ndarray:
    """Transmissions per device in each window ``[n, n + tau]``, shape (N - tau, K)."""
    x = np.asarray(x)
    N = x.shape[0]
    if N <= tau:
        return np.zeros((0, x.shape[1]), dtype=int)
    c = np.vstack([np.zeros((1, x.shape[1]), dtype=int), np.cumsum(x, axis=0)])
    return c[tau + 1:] - c[: N - tau]


def delivered(alloc: Allocation, config: ScenarioConfig, channels: ChannelRealization):
    """Expected delivered bits per pair, ``d * success_probability``."""
    return alloc.d * success_probability(alloc.p, channels.h, config)


def check_feasibility(
    alloc: Allocation,
    config: ScenarioConfig,
    channels: ChannelRealization,
    received: np.ndarray | None = None,
    tol: float = FEAS_TOL,
) -> FeasibilityReport:
    """Check every constraint of the joint problem plus the x-d coupling.

    ``received`` overrides the expected delivered bits (Monte-Carlo mode).
    """
    x, p, d, t = alloc.x, alloc.p, alloc.d, alloc.t
    if received is None:
        received = delivered(alloc, config, channels)
    viol = {}
    cum_rx = np.cumsum(received, axis=0)
    acc = accuracy(cum_rx.sum(axis=1), np.cumsum(config.D.sum(axis=1)), config.alpha)
    viol["accuracy"] = float(np.max(np.clip(config.A - acc, 0, None), initial=0.0))
    finite_t = np.where(np.isfinite(t), t, 0.0)
    energy = (finite_t * p).sum(axis=0)
    bad_t = ~np.isfinite(t)
    viol["energy"] = float(
        np.inf if bad_t.any() else np.max(np.clip(energy - config.Q, 0, None) / config.Q)
    )
    cap = config.cum_arrivals
    scale = np.maximum(cap, max(float(config.D.max()), 1.0) * 1e-12)
    viol["data_cap"] = float(np.max(np.clip(cum_rx - cap, 0, None) / scale))
    counts = window_counts(x, config.tau)
    deficit = np.clip(config.activations[None, :] - counts, 0, None)
    viol["regularity"] = float(deficit.max(initial=0))
    viol["resource_blocks"] = float(np.clip(x.sum(axis=1) - config.K0, 0, None).max(initial=0))
    dscale = max(float(config.D.max()), 1.0)
    viol["offload_nonneg"] = float(np.max(np.clip(-d, 0, None)) / dscale)
    viol["binary_schedule"] = float(np.max(np.minimum(np.abs(x), np.abs(x - 1))))
    pv = np.maximum(np.clip(-p, 0, None), np.clip(p - config.P[None, :], 0, None))
    viol["power_bounds"] = float(np.max(pv / config.P[None, :]))
    tv = np.where(bad_t, np.inf, np.maximum(np.clip(-t, 0, None), np.clip(t - config.T0, 0, None)))
    viol["duration_bounds"] = float(np.max(tv) / config.T0)
    uncoupled = (d > 0) & ((x != 1) | (p <= 0))
    viol["coupling"] = float(np.max(np.where(uncoupled, d, 0.0)) / dscale)
    return FeasibilityReport(violations=viol, tol=tol)


@dataclass
class Evaluation:
    total_delay: float
    report: FeasibilityReport
    slot_delays: np.ndarray
    energies: np.ndarray
    accuracies: np.ndarray
    delivered_ratio: np.ndarray
    ratio_stderr: np.ndarray | None = None


def evaluate(
    alloc: Allocation,
    config: ScenarioConfig,
    channels: ChannelRealization,
    mode: str = "expected",
    seed: int = 0,
    trials: int = 1000,
) -> Evaluation:
    """Score an allocation against its scenario.

    In ``montecarlo`` mode every transmission succeeds with its success
    probability independently per trial; delivered bits are averaged over
    trials before the accuracy map is applied.
    """
    if alloc.x.shape != (config.N, config.K) or channels.h.shape != (config.N, config.K):
        raise ValueError("allocation or channel shape does not match the scenario")
    arrived = np.cumsum(config.D.sum(axis=1))
    s = success_probability(alloc.p, channels.h, config)
    stderr = None
    if mode == "expected":
        rx = alloc.d * s
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(arrived > 0, np.cumsum(rx.sum(axis=1)) / arrived, 1.0)
    elif mode == "montecarlo":
        rng = np.random.default_rng(seed)
        hits = rng.random((trials,) + s.shape) < s
        rx_trials = hits * alloc.d
        cum = np.cumsum(rx_trials.sum(axis=2), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(arrived > 0, cum / arrived, 1.0)
        ratio = ratios.mean(axis=0)
        stderr = ratios.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else None
        rx = rx_trials.mean(axis=0)
    else:
        raise ValueError(f"unknown evaluation mode {mode!r}")
    report = check_feasibility(alloc, config, channels, received=rx)
    finite_t = np.where(np.isfinite(alloc.t), alloc.t, 0.0)
    return Evaluation(
        total_delay=total_delay(alloc.x, alloc.t),
        report=report,
        slot_delays=slot_delays(alloc.x, alloc.t),
        energies=(finite_t * alloc.p).sum(axis=0),
        accuracies=np.clip(ratio, 0, None) ** config.alpha,
        delivered_ratio=ratio,
        ratio_stderr=stderr,
    )
