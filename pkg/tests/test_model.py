import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtsync.errors import InfeasibleError
from dtsync.model import (
    DEFAULTS,
    Allocation,
    ChannelRealization,
    accuracy,
    check_feasibility,
    dbm_to_watt,
    durations,
    evaluate,
    generate_channels,
    make_config,
    path_loss_db,
    rate,
    success_probability,
    total_delay,
    window_counts,
)


def test_default_scenario_values(defaults):
    c = defaults
    assert (c.K, c.N, c.tau, c.K0) == (10, 10, 3, 5)
    assert np.allclose(c.A, 0.6) and np.allclose(c.D, 300e3)
    assert np.allclose(c.beta, 1 / 3)
    assert np.allclose(c.P, 10 ** (-2.9))  # 1 dBm
    assert c.B == 1e6
    assert math.isclose(c.sigma2, 10 ** (-20.4) * 1e6, rel_tol=1e-12)  # -174 dBm/Hz over 1 MHz
    assert c.alpha == DEFAULTS["alpha"]


def test_one_transmission_per_window_at_defaults(defaults):
    assert np.all(defaults.activations == 1)
    assert defaults.n_windows == 7


def test_window_infeasible_config_rejected():
    with pytest.raises(InfeasibleError):
        make_config(K=10, K0=1, beta=1.0, tau=1)


@pytest.mark.parametrize("bad", [dict(K0=11), dict(tau=0), dict(A=1.5), dict(beta=0.0), dict(Q=-1.0)])
def test_invalid_fields_rejected(bad):
    with pytest.raises(ValueError):
        make_config(**bad)


def test_unknown_override_rejected():
    with pytest.raises(TypeError):
        make_config(foo=1)


def test_path_loss_at_one_km():
    c = make_config(shadowing_db=0.0)
    assert path_loss_db(1000.0, c) == pytest.approx(128.1)
    # a device placed exactly 1 km away, no shadowing
    h = 10 ** (-path_loss_db(1000.0, c) / 10)
    assert h == pytest.approx(10 ** -12.81, rel=1e-12)


def test_channels_deterministic_and_seed_dependent(defaults):
    a = generate_channels(defaults, 3)
    b = generate_channels(defaults, 3)
    assert np.array_equal(a.h, b.h)
    for s in range(20):
        assert not np.array_equal(generate_channels(defaults, s).h, generate_channels(defaults, s + 100).h)


def test_channels_prefix_consistent_across_device_count():
    big = generate_channels(make_config(K=14, K0=5), 9)
    small = generate_channels(make_config(K=4, K0=4), 9)
    assert np.array_equal(big.h[:, :4], small.h)


def test_channel_validation():
    with pytest.raises(ValueError):
        ChannelRealization(h=np.array([[1.0, 0.0]]), seed=0)


def test_rate_examples():
    c = make_config()
    h = c.sigma2  # p h / sigma2 = p
    assert rate(1.0, h, c) == pytest.approx(c.B)
    assert rate(0.0, h, c) == 0.0
    assert rate(3.0, h, c) == pytest.approx(2e6)


def test_success_probability_examples():
    c = make_config(m=1.0)
    h = c.m * c.sigma2 / math.log(2.0)  # exponent ln 2 at p = 1
    assert success_probability(1.0, h, c) == pytest.approx(0.5)
    assert success_probability(0.0, h, c) == 0.0
    grid = np.linspace(1e-6, 10, 500)
    s = success_probability(grid, h, c)
    assert np.all(np.diff(s) > 0) and s[-1] < 1 and s[-1] > 0.9


@given(st.floats(1e-6, 1.0), st.floats(1e-15, 1e-9))
def test_rate_increasing_and_concave(p, h):
    c = make_config()
    dp = p * 1e-3
    r0, r1, r2 = rate(np.array([p - dp, p, p + dp]), h, c)
    assert r0 < r1 < r2
    assert r2 - r1 <= r1 - r0 + 1e-9 * r1


def test_accuracy_examples():
    assert accuracy(5.0, 5.0, 0.3) == 1.0
    assert accuracy(0.25, 1.0, 0.5) == pytest.approx(0.5)
    assert accuracy(0.6, 1.0, 1.0) == pytest.approx(0.6)
    assert accuracy(0.0, 0.0, 0.4) == 1.0


@given(st.floats(0, 1e6), st.floats(1, 1e6), st.floats(0.1, 2.0))
def test_accuracy_range_and_monotonicity(rx, extra, alpha):
    arrived = rx + extra
    a = accuracy(rx, arrived, alpha)
    assert 0.0 <= a <= 1.0
    assert accuracy(rx + extra / 2, arrived, alpha) >= a
    assert accuracy(rx, arrived * 2, alpha) <= a


@given(st.integers(1, 8), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31))
def test_window_counts_match_direct_sums(N, K, tau, seed):
    x = np.random.default_rng(seed).integers(0, 2, (N, K))
    got = window_counts(x, tau)
    expect = np.array([x[n:n + tau + 1].sum(axis=0) for n in range(max(N - tau, 0))]).reshape(-1, K)
    assert np.array_equal(got, expect)


def test_empty_allocation_is_free(small, small_channels):
    ev = evaluate(Allocation.empty(small), small.replace(A=np.zeros(small.N)), small_channels)
    assert ev.total_delay == 0.0 and np.all(ev.energies == 0.0)


def test_energy_is_power_times_time():
    c = make_config(K=1, N=1, K0=1, tau=1, A=0.0)
    ch = ChannelRealization(h=np.array([[1e-9]]), seed=0)
    a = Allocation(x=np.ones((1, 1), int), p=np.full((1, 1), 0.001), d=np.full((1, 1), 1.0),
                   t=np.full((1, 1), 2.0))
    ev = evaluate(a, c, ch)
    assert ev.energies[0] == pytest.approx(0.002)


def test_total_delay_is_sum_of_slot_maxima(small, small_channels):
    g = np.random.default_rng(0)
    x = g.integers(0, 2, (small.N, small.K))
    t = g.uniform(0, 1, x.shape)
    assert total_delay(x, t) == pytest.approx(sum(max(x[n] * t[n]) for n in range(small.N)))


def _feasible_alloc(c, ch):
    from dtsync.alternating import initialize_feasible

    return initialize_feasible(c, ch)


def test_checker_accepts_feasible_and_flags_each_violation(small, small_channels):
    a = _feasible_alloc(small, small_channels)
    assert check_feasibility(a, small, small_channels).feasible

    def broken(**kw):
        b = a.copy()
        for k, v in kw.items():
            setattr(b, k, v)
        b.t = durations(b.p, b.d, small, small_channels)
        return check_feasibility(b, small, small_channels)

    assert "accuracy" in broken(d=a.d * 0.5).failures()
    assert "resource_blocks" in broken(x=np.ones_like(a.x)).failures()
    x = a.x.copy()
    x[:, 0] = 0
    rep = broken(x=x)
    assert "regularity" in rep.failures() and "coupling" in rep.failures()
    assert "power_bounds" in broken(p=a.p * 2).failures()
    neg = a.d.copy()
    neg[a.x == 1] *= -1
    assert "offload_nonneg" in broken(d=neg).failures()
    assert "energy" in check_feasibility(a, small.replace(Q=np.full(small.K, 1e-12)), small_channels).failures()
    long = a.copy()
    long.t = a.t + 2 * small.T0
    assert "duration_bounds" in check_feasibility(long, small, small_channels).failures()
    frac = a.copy()
    frac.x = a.x * 0.5
    assert "binary_schedule" in check_feasibility(frac, small, small_channels).failures()


def test_checker_data_cap(small, small_channels):
    a = _feasible_alloc(small, small_channels)
    rx = np.zeros_like(a.d)
    rx[0, 0] = small.D[0, 0] * 2
    rep = check_feasibility(a, small, small_channels, received=rx)
    assert "data_cap" in rep.failures()


def test_monte_carlo_close_to_expected(small, small_channels):
    a = _feasible_alloc(small, small_channels)
    ev = evaluate(a, small, small_channels)
    mc = evaluate(a, small, small_channels, mode="montecarlo", seed=1, trials=10_000)
    se = np.maximum(mc.ratio_stderr, 1e-12)
    assert np.all(np.abs(ev.delivered_ratio - mc.delivered_ratio) <= 3 * se + 1e-12)


def test_evaluate_rejects_bad_mode_and_shape(small, small_channels):
    a = Allocation.empty(small)
    with pytest.raises(ValueError):
        evaluate(a, small, small_channels, mode="bogus")
    with pytest.raises(ValueError):
        evaluate(Allocation.empty(make_config(K=3, K0=3)), small, small_channels)


def test_dbm_conversion():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert dbm_to_watt(0.0) == pytest.approx(1e-3)
