import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtsync.alternating import solve
from dtsync.errors import InfeasibleError
from dtsync.model import ChannelRealization, check_feasibility, generate_channels, make_config, rate
from dtsync.oracles import brute_force_chain
from dtsync.single_device import (
    SOURCE,
    ChainEdgeCosts,
    _energy_per_bitrate,
    chain_schedule,
    edge_delay,
    hop_budget,
    initial_slot,
    pbar_solve,
    solve_single_device,
)

ONE = dict(K=1, K0=1, N=10, tau=3, beta=1 / 3)


def _channels(h):
    return ChannelRealization(h=np.asarray(h, dtype=float).reshape(-1, 1), seed=0)


def test_initial_slot_examples():
    c = make_config(**ONE)
    assert initial_slot(c, _channels(np.linspace(2e-11, 1e-11, 10))) == 0
    h = np.full(10, 1e-11)
    h[2] = 5e-11
    assert initial_slot(c, _channels(h)) == 2


def test_multi_device_rejected(defaults):
    with pytest.raises(ValueError):
        initial_slot(defaults, generate_channels(defaults, 0))
    with pytest.raises(ValueError):
        initial_slot(make_config(K=1, K0=1, tau=2, beta=1.0), _channels(np.ones(10) * 1e-11))


def test_pbar_unit_snr_residual():
    c = make_config(**ONE)
    h = 1e-11
    p_star = c.sigma2 / h  # p h / sigma2 = 1
    d = 1e5
    rhs = _energy_per_bitrate(p_star, d, h, c)
    p = pbar_solve(d, h, rhs, c)
    assert abs(_energy_per_bitrate(p, d, h, c) / rhs - 1) <= 1e-10
    assert p == pytest.approx(p_star, rel=1e-8)


@given(st.floats(1e3, 1e6), st.floats(-13.0, -9.0), st.floats(1.01, 1e4))
def test_pbar_monotone_in_budget(d, log_h, frac):
    c = make_config(**ONE)
    h = 10 ** log_h
    floor = d * c.sigma2 * math.log(2) / (c.B * h)
    p1 = pbar_solve(d, h, floor * frac, c)
    p2 = pbar_solve(d, h, floor * frac * 2, c)
    assert p2 > p1 > 0


def test_pbar_below_floor_infeasible():
    c = make_config(**ONE)
    d, h = 1e5, 1e-11
    floor = d * c.sigma2 * math.log(2) / (c.B * h)
    with pytest.raises(InfeasibleError):
        pbar_solve(d, h, floor * 0.5, c)


def test_edge_delay_limits():
    c = make_config(**ONE, Q=1e6)
    ch = generate_channels(c, 0)
    assert edge_delay(0, 2, 0.0, c, ch) == 0.0
    d = 2e5
    assert edge_delay(0, 2, d, c, ch) == d / float(rate(c.P[0], ch.h[2, 0], c))
    with pytest.raises(ValueError):
        edge_delay(0, 6, d, c, ch)


@given(st.integers(0, 50), st.floats(-5.0, -2.0), st.floats(0.1, 1.0))
def test_edge_delay_comparative(seed, log_q, frac):
    c = make_config(**ONE, Q=10 ** log_q)
    ch = generate_channels(c, seed)
    d = frac * 3e5
    try:
        base = edge_delay(1, 3, d, c, ch)
    except InfeasibleError:
        return
    rich = make_config(**ONE, Q=2 * 10 ** log_q)
    assert edge_delay(1, 3, d, rich, ch) <= base
    assert edge_delay(1, 3, d * 0.5, c, ch) <= base
    better = ChannelRealization(h=ch.h * 2, seed=0)
    assert edge_delay(1, 3, d, c, better) <= base


def test_hop_budget_counts_used_slots():
    c = make_config(**ONE, Q=1.0)
    assert hop_budget(SOURCE, c) == pytest.approx(4 / 10)
    assert hop_budget(4, c) == pytest.approx(4 / 5)


def test_uniform_edges_give_max_stride_chain():
    c = make_config(K=1, K0=1, N=9, tau=2, beta=0.5)
    N, tau = 9, 2
    src = np.full(N, np.inf)
    src[:tau + 1] = 1.0
    T = np.full((N, N), np.inf)
    for m in range(N):
        for q in range(m + 1, min(N, m + tau + 2)):
            T[m, q] = 1.0
    x, cost = chain_schedule(ChainEdgeCosts(src, T, tau), c)
    assert cost == x.sum() == 3
    gaps = np.diff(np.flatnonzero(x))
    assert np.all(gaps <= tau + 1)


def test_zero_cost_slot_is_used():
    c = make_config(K=1, K0=1, N=6, tau=2, beta=0.5)
    src = np.array([1.0, 1.0, 1.0, np.inf, np.inf, np.inf])
    T = np.full((6, 6), np.inf)
    for m in range(6):
        for q in range(m + 1, min(6, m + 4)):
            T[m, q] = 0.0 if q == 4 or m == 4 else 1.0
    x, _ = chain_schedule(ChainEdgeCosts(src, T, 2), c)
    assert x[4] == 1


@pytest.mark.parametrize("seed", range(30))
def test_chain_matches_enumeration(seed):
    g = np.random.default_rng(seed)
    tau = int(g.integers(1, 4))
    N = int(g.integers(tau + 1, 13))
    c = make_config(K=1, K0=1, N=N, tau=tau, beta=1 / tau)
    src = g.uniform(0, 1, N)
    src[tau + 1:] = np.inf
    T = np.full((N, N), np.inf)
    for m in range(N):
        for q in range(m + 1, min(N, m + tau + 2)):
            T[m, q] = g.uniform()
    x, cost = chain_schedule(ChainEdgeCosts(src, T, tau), c)
    _, ref = brute_force_chain(src, T, N, tau)
    assert cost == pytest.approx(ref, abs=1e-12)
    on = np.flatnonzero(x)
    assert on[0] <= tau and np.all(np.diff(on) <= tau + 1) and on[-1] >= N - 1 - tau


def test_no_windows_means_no_chain():
    c = make_config(K=1, K0=1, N=2, tau=3, beta=1 / 3)
    edges = ChainEdgeCosts(np.zeros(2), np.zeros((2, 2)), 3)
    x, cost = chain_schedule(edges, c)
    assert not x.any() and cost == 0.0


def test_no_demand_minimal_chain():
    c = make_config(K=1, K0=1, N=6, tau=2, beta=0.5, A=0.0)
    alloc, trace = solve_single_device(c, generate_channels(c, 0))
    assert trace.objectives[-1] == 0.0 and not alloc.d.any()
    assert alloc.x.sum() == 2


def test_agrees_with_general_solver():
    c = make_config(K=1, K0=1, N=6, tau=2, beta=0.5)
    wins = 0
    for seed in range(30):
        ch = generate_channels(c, seed)
        alloc, trace = solve_single_device(c, ch)
        assert check_feasibility(alloc, c, ch).feasible
        assert trace.is_monotone()
        general = solve(c, ch)[2].total_delay_s
        wins += trace.objectives[-1] <= general + 1e-6
    assert wins >= 27


@pytest.mark.parametrize("seed", range(5))
def test_more_energy_never_slower(seed):
    c = make_config(K=1, K0=1, N=6, tau=2, beta=0.5, Q=2e-5)
    ch = generate_channels(c, seed)
    try:
        base = solve_single_device(c, ch)[1].objectives[-1]
    except InfeasibleError:
        return
    richer = solve_single_device(c.replace(Q=c.Q * 2), ch)[1].objectives[-1]
    assert richer <= base + 1e-9
