import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtsync.convex import OPTIMAL, LinearProgram, simplex_solve
from dtsync.errors import InfeasibleError
from dtsync.model import (
    Allocation,
    ChannelRealization,
    check_feasibility,
    generate_channels,
    make_config,
    rate,
    success_probability,
)
from dtsync.offloading import CHECK_TOL, build_offloading_lp, offloading_violation, solve_offloading
from dtsync.oracles import enumerate_basic_feasible
from dtsync.scheduling import edf_schedule


def _setup(config, seed=0, frac=1.0):
    ch = generate_channels(config, seed)
    x = edf_schedule(config, fill=True)
    return ch, x, x * config.P[None, :] * frac


def test_zero_accuracy_gives_zero_offload(small):
    c = small.replace(A=np.zeros(small.N))
    ch, x, p = _setup(c)
    d, obj, st_ = solve_offloading(x, p, c, ch)
    assert obj == 0.0 and not d.any()


def test_single_pair_binding_accuracy():
    c = make_config(K=1, N=1, K0=1, tau=1, A=0.5)
    ch = ChannelRealization(h=np.array([[1e-11]]), seed=0)
    x, p = np.ones((1, 1), int), c.P.reshape(1, 1)
    s = float(success_probability(p, ch.h, c)[0, 0])
    d, obj, _ = solve_offloading(x, p, c, ch)
    assert d[0, 0] == pytest.approx(c.accuracy_demand[0] / s, rel=1e-9)
    assert obj == pytest.approx(d[0, 0] / float(rate(p, ch.h, c)[0, 0]), rel=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_two_by_two_matches_vertex_enumeration(seed):
    c = make_config(K=2, N=2, K0=2, tau=1, beta=0.5)
    ch = generate_channels(c, seed)
    x = np.ones((2, 2), int)
    p = x * c.P[None, :] * np.random.default_rng(seed).uniform(0.3, 1.0, (2, 2))
    lp, _ = build_offloading_lp(x, p, c, ch)
    _, obj, st_ = simplex_solve(lp)
    assert st_.outcome == OPTIMAL
    assert obj == pytest.approx(enumerate_basic_feasible(lp), rel=1e-7)


def test_solution_is_feasible_and_tight(small):
    ch, x, p = _setup(small, 3)
    d, obj, _ = solve_offloading(x, p, small, ch)
    assert offloading_violation(d, x, p, small, ch) <= CHECK_TOL
    a = Allocation.build(x, p, d, small, ch)
    assert check_feasibility(a, small, ch).feasible
    assert not d[x == 0].any()
    assert obj == pytest.approx((a.x * a.t).max(axis=1).sum(), rel=1e-8)


@given(st.integers(0, 200), st.floats(1.05, 1.6))
def test_more_demand_never_cheaper(seed, factor):
    base = make_config(K=3, N=4, K0=2, tau=2, beta=0.5, A=0.4)
    ch, x, p = _setup(base, seed)
    _, obj1, _ = solve_offloading(x, p, base, ch)
    # scale A so the delivered-bits demand grows by ``factor``
    harder = base.replace(A=np.minimum(base.A * factor ** base.alpha, 1.0))
    try:
        _, obj2, _ = solve_offloading(x, p, harder, ch)
    except InfeasibleError:
        return
    assert obj2 >= obj1 - 1e-12


def test_unreachable_accuracy_names_a_slot(small):
    c = small.replace(A=np.ones(small.N))
    ch, x, p = _setup(c)
    with pytest.raises(InfeasibleError) as err:
        solve_offloading(x, p, c, ch)
    assert err.value.slot == 0


def test_row_scaling_invariance(small):
    ch, x, p = _setup(small, 5)
    lp, _ = build_offloading_lp(x, p, small, ch)
    _, obj, _ = simplex_solve(lp)
    w = np.random.default_rng(0).uniform(0.1, 10.0, lp.A.shape[0])
    scaled = LinearProgram(c=lp.c, A=lp.A * w[:, None], b=lp.b * w, lower=lp.lower, upper=lp.upper)
    assert simplex_solve(scaled)[1] == pytest.approx(obj, rel=1e-7)


def test_map_is_bijective(small):
    ch, x, p = _setup(small)
    lp, m = build_offloading_lp(x, p, small, ch)
    cols = np.concatenate([m.d_col[m.d_col >= 0], m.y_col[m.y_col >= 0]])
    assert sorted(cols) == list(range(lp.n)) == list(range(m.n_cols))
    assert np.allclose(m.r, rate(p, ch.h, small))


def test_zero_rate_pair_excluded(small):
    ch, x, p = _setup(small)
    p = p.copy()
    n, k = np.argwhere(x == 1)[0]
    p[n, k] = 0.0
    _, m = build_offloading_lp(x, p, small, ch)
    assert m.d_col[n, k] == -1


def test_bad_inputs(small, small_channels):
    x = np.ones((small.N, small.K), int)
    with pytest.raises(ValueError):
        build_offloading_lp(x, x * small.P[None, :] * 2, small, small_channels)
    with pytest.raises(ValueError):
        build_offloading_lp(x[:1], x[:1] * 1.0, small, small_channels)
