import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtsync.convex import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    ConstraintBlock,
    LinearProgram,
    SmoothConvexProgram,
    barrier_solve,
    find_interior,
    linear_block,
    simplex_solve,
)
from dtsync.oracles import enumerate_basic_feasible, finite_difference_gradient


def test_simplex_single_bound():
    lp = LinearProgram(c=[1.0], A=np.zeros((0, 1)), b=[], lower=[3.0])
    v, obj, st_ = simplex_solve(lp)
    assert st_.outcome == OPTIMAL and obj == pytest.approx(3.0) and v[0] == pytest.approx(3.0)


def test_simplex_facet():
    lp = LinearProgram(c=[-1.0, -1.0], A=[[1.0, 1.0]], b=[1.0])
    v, obj, st_ = simplex_solve(lp)
    assert st_.outcome == OPTIMAL and obj == pytest.approx(-1.0) and v.sum() == pytest.approx(1.0)


def test_simplex_infeasible_and_unbounded():
    infeasible = LinearProgram(c=[1.0], A=[[1.0], [-1.0]], b=[1.0, -2.0])
    assert simplex_solve(infeasible)[2].outcome == INFEASIBLE
    unbounded = LinearProgram(c=[-1.0], A=np.zeros((0, 1)), b=[])
    assert simplex_solve(unbounded)[2].outcome == UNBOUNDED


def test_lp_shape_validation():
    with pytest.raises(ValueError):
        LinearProgram(c=[1.0, 1.0], A=[[1.0]], b=[1.0])
    with pytest.raises(ValueError):
        LinearProgram(c=[1.0], A=[[1.0]], b=[1.0], lower=[2.0], upper=[1.0])


def _random_lp(seed, n=6, m=8):
    g = np.random.default_rng(seed)
    A = g.normal(size=(m, n))
    x0 = g.uniform(0, 1, n)
    b = A @ x0 + g.uniform(0.1, 1.0, m)
    c = g.normal(size=n)
    return LinearProgram(c=c, A=A, b=b, lower=np.zeros(n), upper=np.full(n, 5.0))


@pytest.mark.parametrize("seed", range(20))
def test_simplex_matches_vertex_enumeration(seed):
    lp = _random_lp(seed)
    v, obj, st_ = simplex_solve(lp)
    assert st_.outcome == OPTIMAL
    ref = enumerate_basic_feasible(lp)
    assert obj == pytest.approx(ref, rel=1e-7, abs=1e-9)
    assert np.all(lp.A @ v <= lp.b + 1e-9)


@given(st.integers(0, 2**31), st.floats(0.1, 100.0))
def test_simplex_row_scaling_invariance(seed, scale):
    lp = _random_lp(seed, n=4, m=5)
    _, obj1, s1 = simplex_solve(lp)
    scaled = LinearProgram(c=lp.c, A=lp.A * scale, b=lp.b * scale, lower=lp.lower, upper=lp.upper)
    _, obj2, s2 = simplex_solve(scaled)
    assert s1.outcome == s2.outcome == OPTIMAL
    assert obj1 == pytest.approx(obj2, rel=1e-7, abs=1e-9)


def _quad(center, weight=1.0):
    center = np.asarray(center, dtype=float)

    def f(v):
        d = v - center
        return weight * float(d @ d), 2 * weight * d

    return f


def test_barrier_active_bound():
    prog = SmoothConvexProgram(dim=1, objective=_quad([0.0]),
                               objective_hess=lambda v: 2 * np.eye(1),
                               constraints=[linear_block([[-1.0]], [-1.0])])
    v, obj, st_ = barrier_solve(prog, np.array([2.0]))
    assert st_.outcome == OPTIMAL
    assert v[0] == pytest.approx(1.0, abs=1e-6)


def test_barrier_disc():
    def disc(v):
        return np.array([v @ v - 2.0]), 2 * v[None, :]

    blk = ConstraintBlock(fun=disc, size=1, hess=lambda v, w: 2 * w[0] * np.eye(2))
    prog = SmoothConvexProgram(dim=2, objective=lambda v: (float(v.sum()), np.ones(2)),
                               objective_hess=lambda v: np.zeros((2, 2)), constraints=[blk])
    v, _, st_ = barrier_solve(prog, np.zeros(2))
    assert st_.outcome == OPTIMAL
    assert np.allclose(v, [-1.0, -1.0], atol=1e-5)


def test_barrier_rejects_infeasible_start():
    prog = SmoothConvexProgram(dim=1, objective=_quad([0.0]), constraints=[linear_block([[-1.0]], [-1.0])])
    with pytest.raises(ValueError):
        barrier_solve(prog, np.array([0.0]))


def _projected_gradient_box(Q, c, lo, hi, iters=200_000):
    """Long-horizon projected gradient for a box-constrained QP (oracle)."""
    v = (lo + hi) / 2
    L = np.linalg.eigvalsh(Q).max()
    for _ in range(iters):
        v_new = np.clip(v - (Q @ v + c) / L, lo, hi)
        if np.abs(v_new - v).max() < 1e-15:
            break
        v = v_new
    return v


@pytest.mark.parametrize("seed", range(8))
def test_barrier_matches_projected_gradient_on_box_qp(seed):
    g = np.random.default_rng(seed)
    n = int(g.integers(2, 7))
    M = g.normal(size=(n, n))
    Q = M @ M.T + 0.5 * np.eye(n)
    c = g.normal(size=n) * 3
    lo, hi = -np.ones(n), np.ones(n)
    prog = SmoothConvexProgram(
        dim=n, objective=lambda v: (0.5 * v @ Q @ v + c @ v, Q @ v + c),
        objective_hess=lambda v: Q, lower=lo, upper=hi,
    )
    v, obj, st_ = barrier_solve(prog, np.zeros(n))
    ref = _projected_gradient_box(Q, c, lo, hi)
    ref_obj = 0.5 * ref @ Q @ ref + c @ ref
    assert st_.outcome == OPTIMAL
    assert obj == pytest.approx(ref_obj, rel=1e-5, abs=1e-5)


def test_barrier_stage_objectives_nonincreasing():
    g = np.random.default_rng(1)
    A = g.normal(size=(6, 3))
    b = np.abs(g.normal(size=6)) + 1
    prog = SmoothConvexProgram(dim=3, objective=_quad([3.0, -2.0, 1.0]),
                               objective_hess=lambda v: 2 * np.eye(3), constraints=[linear_block(A, b)])
    _, _, st_ = barrier_solve(prog, np.zeros(3))
    stages = np.asarray(st_.stage_objectives)
    assert np.all(np.diff(stages) <= 1e-10)


def test_find_interior_certifies_feasible_point():
    prog = SmoothConvexProgram(dim=2, objective=_quad([0, 0]),
                               constraints=[linear_block([[1.0, 1.0], [-1.0, 0.0]], [1.0, -0.2])])
    v, s = find_interior(prog, np.array([5.0, 5.0]))
    assert s < 0 and prog.strictly_feasible(v)


@given(st.integers(0, 2**31))
def test_finite_difference_gradient_checks_caller_gradients(seed):
    g = np.random.default_rng(seed)
    Q = g.normal(size=(3, 3))
    Q = Q @ Q.T
    v = g.normal(size=3)
    fd = finite_difference_gradient(lambda z: 0.5 * z @ Q @ z, v, step=1e-6)
    exact = Q @ v
    assert np.allclose(fd, exact, rtol=1e-4, atol=1e-6)
