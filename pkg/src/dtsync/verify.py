"""Oracle and property checks shared by the ``verify`` CLI and the test suite.

Every check draws its instances from fixed seeds, compares a solver against
an independent reference from :mod:`dtsync.oracles` or :mod:`dtsync.model`,
and reports the raw measurements alongside a pass flag.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .alternating import solve
from .convex import OPTIMAL, simplex_solve
from .harness.baselines import baseline_equal_power, baseline_random
from .model import (
    Allocation,
    check_feasibility,
    evaluate,
    generate_channels,
    make_config,
    rate,
    success_probability,
)
from .offloading import build_offloading_lp, solve_offloading
from .oracles import (
    brute_force_chain,
    brute_force_scheduling,
    enumerate_basic_feasible,
    finite_difference_gradient,
    grid_search_single_hop,
)
from .power_control import solve_power_control, taylor_expected_success
from .scheduling import edf_schedule, is_feasible_schedule, solve_scheduling
from .single_device import (
    SOURCE,
    ChainEdgeCosts,
    _energy_per_bitrate,
    chain_schedule,
    edge_delay,
    hop_budget,
    initial_slot,
    pbar_solve,
)

FEAS_TOL = 1e-6


@dataclass
class CheckResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    seconds: float = 0.0
    records: list = field(default_factory=list)

    def line(self) -> str:
        shown = ", ".join(f"{k}={_short(v)}" for k, v in self.metrics.items())
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {shown} ({self.seconds:.1f} s)"

    def to_csv(self) -> str:
        """Everything but the timing, at full precision, for byte comparisons."""
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["check", self.name, "passed", self.passed])
        for k, v in self.metrics.items():
            out.writerow(["metric", k, repr(v)])
        out.writerow(["failures", repr(self.failures)])
        return buf.getvalue() + self.records_csv()

    def records_csv(self, limit: int | None = None) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        for rec in self.records[:limit]:
            out.writerow([repr(v) for v in rec])
        return buf.getvalue()


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _timed(fn):
    def wrapper(*args, **kwargs):
        tic = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - tic
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------- oracles


@_timed
def check_scheduling(count: int = 100, seed: int = 0, rel_gap: float = 0.05,
                     min_fraction: float = 0.95) -> CheckResult:
    """Dual scheduling vs exhaustive search on N=4, K=2, K0=1, tau=1."""
    config = make_config(N=4, K=2, K0=1, tau=1, beta=1.0)
    close, infeasible, gaps, fails = 0, 0, [], []
    for i in range(count):
        t = np.random.default_rng([seed, i]).uniform(0.01, 1.0, (config.N, config.K))
        res = solve_scheduling(t, config)
        _, ref = brute_force_scheduling(t, config)
        if not is_feasible_schedule(res.x, config):
            infeasible += 1
            fails.append(i)
            continue
        gap = (res.objective - ref) / ref
        gaps.append(gap)
        if gap <= rel_gap:
            close += 1
        else:
            fails.append(i)
    passed = infeasible == 0 and close >= math.ceil(min_fraction * count)
    return CheckResult("scheduling_vs_brute_force", passed,
                       {"within": close, "count": count, "infeasible": infeasible,
                        "worst_gap": max(gaps, default=0.0)}, fails)


def _tiny_offloading_lp(rng, index, max_vars=10, max_subsets=1_000_000):
    """Random offloading LP small enough for vertex enumeration, or None."""
    N, K = int(rng.integers(1, 4)), int(rng.integers(1, 3))
    config = make_config(N=N, K=K, K0=K, tau=1, beta=0.5, A=rng.uniform(0.05, 0.6),
                         Q=rng.uniform(1e-5, 1e-2), D=rng.uniform(1e4, 3e5))
    ch = generate_channels(config, index)
    x = rng.integers(0, 2, (N, K))
    p = x * config.P[None, :] * rng.uniform(0.05, 1.0, (N, K))
    lp, _ = build_offloading_lp(x, p, config, ch)
    m = lp.A.shape[0] + int(np.isfinite(lp.lower).sum() + np.isfinite(lp.upper).sum())
    if lp.n == 0 or lp.n > max_vars or math.comb(m, lp.n) > max_subsets:
        return None
    return lp


@_timed
def check_offloading_lp(count: int = 100, seed: int = 0, rel_tol: float = 1e-7) -> CheckResult:
    """Simplex vs enumeration of basic feasible solutions on tiny offloading LPs."""
    done, draw, worst, optimal, fails = 0, 0, 0.0, 0, []
    while done < count:
        draw += 1
        rng = np.random.default_rng([seed, draw])
        lp = _tiny_offloading_lp(rng, draw)
        if lp is None:
            continue
        done += 1
        _, obj, status = simplex_solve(lp)
        ref = enumerate_basic_feasible(lp)
        if status.outcome == OPTIMAL:
            optimal += 1
            err = abs(obj - ref) / max(abs(ref), 1e-12) if math.isfinite(ref) else math.inf
            worst = max(worst, err)
            if err > rel_tol:
                fails.append(draw)
        elif math.isfinite(ref):
            fails.append(draw)
    return CheckResult("offloading_lp_vs_vertices", not fails,
                       {"count": count, "optimal": optimal, "worst_rel_err": worst}, fails)


def _exact_violation(p, t, x, d, config, ch) -> float:
    """Worst normalised violation of the exact power-control constraints."""
    bits = max(float(config.D.max()), 1.0)
    on = d > 0
    r = rate(p, ch.h, config)
    s = success_probability(p, ch.h, config)
    rx = np.cumsum(np.where(on, d * s, 0.0), axis=0)
    parts = [
        np.max(np.where(on, (d - t * r) / np.where(on, d, 1.0), 0.0), initial=0.0),
        np.max(config.accuracy_demand - rx.sum(axis=1), initial=0.0) / bits,
        np.max(rx - config.cum_arrivals, initial=0.0) / bits,
        np.max(((p * t).sum(axis=0) - config.Q) / config.Q, initial=0.0),
        np.max((p - config.P[None, :]) / config.P[None, :], initial=0.0),
        np.max(t - config.T0, initial=0.0) / config.T0,
        np.max(-p, initial=0.0),
        np.max(np.where(np.asarray(x) == 1, 0.0, d), initial=0.0) / bits,
    ]
    return float(max(parts))


def energy_tight_instance(seed: int, fraction: float = 0.2, slack: float = 1.3):
    """Scenario whose budget is ``slack`` times the energy spent at ``fraction * P``."""
    config = make_config(K=4, N=4, K0=2, tau=2, beta=0.5)
    ch = generate_channels(config, seed)
    x = edf_schedule(config, fill=True)
    p0 = x * config.P[None, :] * fraction
    d, _, _ = solve_offloading(x, p0, config, ch)
    a0 = Allocation.build(x, p0, d, config, ch)
    energy = (a0.p * a0.t).sum(axis=0)
    tight = config.replace(Q=np.maximum(energy * slack, 1e-7))
    return tight, ch, x, d, p0


def single_pair_instance(seed: int, Q: float = 2e-5, margin: float = 1.05):
    """One device, one slot, a payload 5% above the full-power minimum."""
    config = make_config(K=1, N=1, K0=1, tau=1, Q=Q)
    ch = generate_channels(config, seed)
    s_full = float(success_probability(config.P[0], ch.h[0, 0], config))
    d = min(config.accuracy_demand[0] / s_full * margin, float(config.D[0, 0]))
    return config, ch, np.ones((1, 1), dtype=int), np.full((1, 1), d)


@_timed
def check_power_control(count: int = 30, pairs: int = 10, seed: int = 0, tol: float = 1e-5,
                        grid_rel: float = 0.02) -> CheckResult:
    """SCA points satisfy the exact constraints, traces descend, single pairs match a grid."""
    worst_viol, worst_grid, nonmono, fails = 0.0, 0.0, 0, []
    for i in range(count):
        config, ch, x, d, p0 = energy_tight_instance(seed * 1000 + i)
        res = solve_power_control(x, d, config, ch, init=p0)
        viol = _exact_violation(res.p, res.t, x, d, config, ch)
        worst_viol = max(worst_viol, viol)
        mono = bool(np.all(np.diff(res.trace) <= 1e-9))
        nonmono += not mono
        if viol > tol or not mono:
            fails.append(("multi", i))
    for i in range(pairs):
        config, ch, x, d = single_pair_instance(seed * 1000 + i)
        res = solve_power_control(x, d, config, ch)
        ref = grid_search_single_hop(float(d[0, 0]), float(ch.h[0, 0]), float(config.Q[0]), config,
                                     required=float(config.accuracy_demand[0]))
        gap = abs(res.objective - ref) / ref
        worst_grid = max(worst_grid, gap)
        if gap > grid_rel or _exact_violation(res.p, res.t, x, d, config, ch) > tol:
            fails.append(("pair", i))
    return CheckResult("power_control_sca", not fails,
                       {"count": count, "worst_violation": worst_viol, "nonmonotone": nonmono,
                        "pairs": pairs, "worst_grid_gap": worst_grid}, fails)


@_timed
def check_taylor(count: int = 100, seed: int = 0, grad_tol: float = 1e-4,
                 ratio_range=(3.5, 4.5)) -> CheckResult:
    """Linearised success term: exact gradient and second-order remainder."""
    config = make_config()
    worst_grad, ratios, fails = 0.0, [], []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        h = 10 ** rng.uniform(-13, -10)
        p0 = rng.uniform(0.05, 1.0) * float(config.P[0])
        t0 = rng.uniform(0.05, 1.0) * config.T0
        z0 = np.array([p0 * t0, t0])

        def exact(z):
            return math.exp(-config.m * config.sigma2 * z[1] / (z[0] * h))

        def linear(z):
            return float(taylor_expected_success(z[0], z[1], z0[0], z0[1], h, config))

        # differentiate in coordinates relative to z0 so one step size fits both axes
        g_exact = finite_difference_gradient(lambda w: exact(w * z0), np.ones(2), step=1e-5) / z0
        g_lin = finite_difference_gradient(lambda w: linear(w * z0), np.ones(2), step=1e-5) / z0
        err = float(np.max(np.abs(g_lin - g_exact) / np.maximum(np.abs(g_exact), 1e-300)))
        worst_grad = max(worst_grad, err)
        # keep the exponent change small so the quadratic remainder dominates
        expo = config.m * config.sigma2 * t0 / (p0 * t0 * h)
        direction = rng.standard_normal(2) * z0 * (0.01 / max(expo, 1.0))

        def remainder(scale):
            z = z0 + scale * direction
            return abs(exact(z) - linear(z))

        ratio = remainder(1.0) / remainder(0.5)
        ratios.append(ratio)
        if err > grad_tol or not ratio_range[0] <= ratio <= ratio_range[1] or abs(linear(z0) - exact(z0)) > 1e-15:
            fails.append(i)
    return CheckResult("taylor_linearisation", not fails,
                       {"count": count, "worst_grad_err": worst_grad,
                        "ratio_min": min(ratios), "ratio_max": max(ratios)}, fails)


def _random_chain(rng):
    N, tau = int(rng.integers(2, 13)), int(rng.integers(1, 4))
    source = rng.uniform(0.0, 1.0, N)
    source[tau + 1:] = np.inf
    T = np.full((N, N), np.inf)
    for m in range(N):
        for q in range(m + 1, min(N, m + tau + 2)):
            T[m, q] = rng.uniform(0.0, 1.0)
    return N, tau, ChainEdgeCosts(source, T, tau)


def _pbar_residual(d, h, budget, config):
    p = pbar_solve(d, h, budget, config)
    return abs(_energy_per_bitrate(p, d, h, config) / budget - 1.0)


@_timed
def check_single_device(count: int = 100, hops: int = 20, seed: int = 0,
                        pbar_tol: float = 1e-10, grid_rel: float = 0.02) -> CheckResult:
    """Chain DP vs enumeration, root residuals, hop delays vs a (p, t) grid."""
    fails, worst_res, worst_grid, chain_bad = [], 0.0, 0.0, 0
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        N, tau, edges = _random_chain(rng)
        config = make_config(K=1, K0=1, N=N, tau=tau, beta=1.0 / tau)
        _, cost = chain_schedule(edges, config)
        _, ref = brute_force_chain(edges.source, edges.T, N, tau)
        if abs(cost - ref) > 1e-12 * max(1.0, ref):
            chain_bad += 1
            fails.append(("chain", i))
    n_roots = 0
    for i in range(hops):
        rng = np.random.default_rng([seed, 10_000 + i])
        config = make_config(K=1, K0=1, N=10, tau=3, beta=1 / 3, Q=10 ** rng.uniform(-5, -2))
        ch = generate_channels(config, i)
        m = int(rng.integers(-1, 5))
        q = int(rng.integers(m + 1, m + config.tau + 2))
        d_q = float(rng.uniform(0.2, 1.0) * config.D[q, 0])
        h = float(ch.h[q, 0])
        budget = hop_budget(m, config)
        floor = d_q * config.sigma2 * math.log(2.0) / (config.B * h)
        if budget > floor:
            res = _pbar_residual(d_q, h, budget, config)
            n_roots += 1
            worst_res = max(worst_res, res)
            if res > pbar_tol:
                fails.append(("pbar", i))
        # residuals over a wide spread of budgets too
        for frac in (1.5, 10.0, 1e3):
            res = _pbar_residual(d_q, h, floor * frac, config)
            n_roots += 1
            worst_res = max(worst_res, res)
            if res > pbar_tol:
                fails.append(("pbar", i, frac))
        try:
            got = edge_delay(m if m >= 0 else SOURCE, q, d_q, config, ch)
        except Exception:
            got = math.inf
        ref = grid_search_single_hop(d_q, h, budget, config)
        if math.isinf(ref) and math.isinf(got):
            continue
        gap = abs(got - ref) / ref
        worst_grid = max(worst_grid, gap)
        if gap > grid_rel:
            fails.append(("edge", i))
    return CheckResult("single_device", not fails,
                       {"chains": count, "chain_mismatch": chain_bad, "roots": n_roots,
                        "worst_pbar_residual": worst_res, "hops": hops, "worst_edge_gap": worst_grid},
                       fails)


@_timed
def check_initial_slot(count: int = 50, seed: int = 0) -> CheckResult:
    """First transmission slot vs trying every placement in the first window."""
    config = make_config(K=1, K0=1, N=10, tau=3, beta=1 / 3)
    budget = hop_budget(SOURCE, config)
    fails = []
    for i in range(count):
        ch = generate_channels(config, seed * 1000 + i)
        d = float(config.D[0, 0])
        delays = [grid_search_single_hop(d, float(ch.h[q, 0]), budget, config)
                  for q in range(config.tau + 1)]
        if initial_slot(config, ch) != int(np.argmin(delays)):
            fails.append(i)
    return CheckResult("initial_slot", not fails, {"count": count, "mismatch": len(fails)}, fails)


def random_allocation(seed: int):
    """A feasible allocation for a small random scenario (random powers, LP offloading)."""
    rng = np.random.default_rng([seed, 77])
    config = make_config(K=int(rng.integers(2, 5)), N=int(rng.integers(3, 7)), K0=2, tau=2,
                         beta=0.5, A=rng.uniform(0.3, 0.7))
    ch = generate_channels(config, seed)
    x = edf_schedule(config, cost=rng.uniform(size=(config.N, config.K)), fill=True)
    p = x * config.P[None, :] * rng.uniform(0.3, 1.0, x.shape)
    d, _, _ = solve_offloading(x, p, config, ch)
    return config, ch, Allocation.build(x, p, d, config, ch)


@_timed
def check_monte_carlo(count: int = 10, trials: int = 10_000, seed: int = 0,
                      n_se: float = 3.0) -> CheckResult:
    """Expected-value accuracy vs Bernoulli sampling of every transmission."""
    worst, fails = 0.0, []
    for i in range(count):
        config, ch, alloc = random_allocation(seed * 1000 + i)
        ev = evaluate(alloc, config, ch)
        mc = evaluate(alloc, config, ch, mode="montecarlo", seed=seed * 1000 + i, trials=trials)
        # delta method for the accuracy map r -> r^alpha
        slope = config.alpha * np.clip(mc.delivered_ratio, 1e-300, None) ** (config.alpha - 1)
        se = slope * mc.ratio_stderr
        z = np.abs(ev.accuracies - mc.accuracies) / np.maximum(se, 1e-300)
        z = np.where(se > 0, z, 0.0)
        worst = max(worst, float(z.max()))
        if np.any(z > n_se):
            fails.append(i)
    return CheckResult("monte_carlo_accuracy", not fails,
                       {"count": count, "trials": trials, "worst_z": worst}, fails)


# ------------------------------------------------------------ experiments


def _feasible(alloc, config, ch):
    return check_feasibility(alloc, config, ch, tol=FEAS_TOL).feasible


@_timed
def check_convergence(seeds=range(50), max_outer: int = 50) -> CheckResult:
    """Outer loop at the defaults: monotone traces, bounded iterations, feasible output."""
    config = make_config()
    fails, iters, records = [], [], []
    for seed in seeds:
        ch = generate_channels(config, seed)
        alloc, trace, _ = solve(config, ch)
        iters.append(trace.iterations)
        records.append((seed, trace.iterations, *trace.objectives))
        if not trace.is_monotone(1e-9) or trace.iterations > max_outer or not _feasible(alloc, config, ch):
            fails.append(seed)
    return CheckResult("alternating_convergence", not fails,
                       {"runs": len(iters), "max_iterations": max(iters)}, fails, records=records)


@_timed
def check_ordering(seeds=range(50), min_fraction: float = 0.95) -> CheckResult:
    """Proposed vs equal power and random selection at the defaults."""
    config = make_config()
    seeds = list(seeds)
    beats_eq = beats_rand = 0
    infeasible, improvement, fails, records = 0, [], [], []
    for seed in seeds:
        ch = generate_channels(config, seed)
        a_p, _, r_p = solve(config, ch)
        a_e, _, r_e = baseline_equal_power(config, ch)
        a_r, _, r_r = baseline_random(config, ch, seed)
        for a in (a_p, a_e, a_r):
            infeasible += not _feasible(a, config, ch)
        slack = 1e-12 * r_p.total_delay_s
        beats_eq += r_p.total_delay_s <= r_e.total_delay_s + slack
        beats_rand += r_p.total_delay_s <= r_r.total_delay_s + slack
        if r_p.total_delay_s > r_e.total_delay_s + slack or r_p.total_delay_s > r_r.total_delay_s + slack:
            fails.append(seed)
        improvement.append(1.0 - r_p.total_delay_s / r_e.total_delay_s)
        records.append((seed, r_p.total_delay_s, r_e.total_delay_s, r_r.total_delay_s))
    need = math.ceil(min_fraction * len(seeds))
    passed = beats_eq >= need and beats_rand >= need and infeasible == 0
    return CheckResult("algorithm_ordering", passed,
                       {"seeds": len(seeds), "beats_equal_power": beats_eq, "beats_random": beats_rand,
                        "infeasible": infeasible,
                        "median_improvement_vs_equal_power": float(np.median(improvement)),
                        "max_improvement_vs_equal_power": float(np.max(improvement))}, fails,
                       records=records)


TREND_SWEEPS = {
    "max_power_dbm": (list(range(1, 9)), "nonincreasing"),
    "device_count": (list(range(4, 15)), "nondecreasing"),
    "resource_blocks": (list(range(2, 9)), "nonincreasing"),
}


def trend_means(rows, values):
    """Mean delay per swept value; any failed cell makes the mean infinite."""
    out = []
    for v in values:
        cell = [r for r in rows if r.value == v]
        if any(r.status != "ok" for r in cell):
            out.append(math.inf)
        else:
            out.append(float(np.mean([r.total_delay_s for r in cell])))
    return out


def is_monotone(means, direction, rel: float = 1e-9) -> bool:
    m = np.asarray(means, dtype=float)
    a, b = m[:-1], m[1:]
    if direction == "nonincreasing":
        return bool(np.all((b <= a) | (np.isfinite(a) & np.isfinite(b) & (b <= a * (1 + rel)))))
    return bool(np.all((b >= a) | (np.isfinite(a) & np.isfinite(b) & (b * (1 + rel) >= a))))


@_timed
def check_trends(seeds=range(20), params=tuple(TREND_SWEEPS), rows_out: dict | None = None) -> CheckResult:
    """Directional trends of the mean delay over power, device count and resource blocks."""
    from .harness.sweep import SweepSpec, run_sweep

    metrics, fails, records = {}, [], []
    for param in params:
        values, direction = TREND_SWEEPS[param]
        spec = SweepSpec(param=param, values=values, seeds=list(seeds), algorithms=["proposed"])
        rows = run_sweep(spec, deterministic=True)
        if rows_out is not None:
            rows_out[param] = rows
        records += [(r.param, r.value, r.seed, r.status, r.total_delay_s) for r in rows]
        means = trend_means(rows, values)
        metrics[param] = [round(m, 6) if math.isfinite(m) else m for m in means]
        bad = [r for r in rows if r.status not in ("ok",) and not r.status.startswith("infeasible: regularity demand")]
        if not is_monotone(means, direction) or bad:
            fails.append(param)
    return CheckResult("trends", not fails, metrics, fails, records=records)


ORACLE_SUITE = {
    "scheduling": check_scheduling,
    "offloading": check_offloading_lp,
    "power": check_power_control,
    "taylor": check_taylor,
    "single_device": check_single_device,
    "initial_slot": check_initial_slot,
    "montecarlo": check_monte_carlo,
}
EXPERIMENT_SUITE = {
    "convergence": check_convergence,
    "ordering": check_ordering,
    "trends": check_trends,
}
