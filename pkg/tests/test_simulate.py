import math

import numpy as np
import pytest
from scipy.linalg import expm

from metastable.capacity import solve_capacity
from metastable.chain import restrict
from metastable.errors import StepBudgetExceeded
from metastable.simulate import (
    FixedTime,
    Hit,
    Race,
    Thermalize,
    Transition,
    empirical_exit_law,
    empirical_potential,
    sample_many,
    sample_trajectory,
    stream,
)
from metastable.soft import build_soft_kernel, soft_qsd
from metastable.spectral import qsd


def _within(est, se, exact, k=4.0):
    return abs(est - exact) <= k * se


def test_streams_are_reproducible():
    a = stream(7, 3).random(5)
    b = stream(7, 3).random(5)
    c = stream(7, 4).random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_worker_count_does_not_change_output(path3):
    rule = Hit((2,))
    one = sample_many(path3, "a", rule, 50, seed=11, workers=1)
    two = sample_many(path3, "a", rule, 50, seed=11, workers=2)
    assert [s.hitting_time for s in one] == [s.hitting_time for s in two]
    assert [s.index for s in two] == list(range(50))


def test_two_state_hitting_mean(pair):
    # from a the chain leaves at rate 0.2, so E_a[tau_b] = 5
    s = sample_many(pair, "a", Hit((1,)), 20000, seed=1)
    t = np.array([x.hitting_time for x in s])
    assert _within(t.mean(), t.std(ddof=1) / math.sqrt(t.size), 5.0)
    assert all(x.end_state == 1 for x in s)


def test_hit_from_inside_target_is_zero(pair):
    s = sample_trajectory(pair, "b", Hit((1,)), stream(0, 0))
    assert s.hitting_time == 0.0 and s.moves == 0


def test_path_holding_times_sum_to_stop_time(path3):
    s = sample_trajectory(path3, "a", Hit((2,)), stream(3, 0), record_path=True)
    assert sum(h for _, h in s.path) == pytest.approx(s.hitting_time, rel=1e-12)
    assert s.path[0][0] == 0


def test_fixed_time_law_matches_matrix_exponential(path3):
    t = 1.7
    s = sample_many(path3, "a", FixedTime(t), 20000, seed=2)
    ends = np.array([x.end_state for x in s])
    law = expm(t * (path3.dense_kernel() - np.eye(3)))[0]
    for y in range(3):
        f = (ends == y).mean()
        assert _within(f, math.sqrt(law[y] * (1 - law[y]) / ends.size), law[y])


def test_race_matches_capacity_potential(path3):
    kappa, lam = 0.4, 0.7
    res = solve_capacity(path3, ["a"], ["c"], kappa, lam)
    p, se = empirical_potential(path3, ["a"], ["c"], kappa, lam, "b", 20000, seed=4)
    assert _within(p, se, res.potential[1])


def test_budget_and_zero_rate(path3):
    with pytest.raises(StepBudgetExceeded):
        sample_trajectory(path3, "a", Hit((2,)), stream(0, 0), budget=1)
    with pytest.raises(StepBudgetExceeded):
        sample_trajectory(path3, "a", Transition((0,), 0.0), stream(0, 0))


def test_transition_time_from_soft_qsd_is_exponential(well8):
    chain, R = well8
    lam = 0.3
    ctx = restrict(chain, R)
    sq = soft_qsd(build_soft_kernel(ctx, lam), ctx)
    nu = np.zeros(chain.n)
    nu[ctx.R] = sq.mu_star
    s = sample_many(chain, nu, Transition(tuple(int(i) for i in ctx.R), lam), 4000, seed=5)
    tt = np.array([x.transition_time for x in s]) * sq.phi_star
    assert _within(tt.mean(), tt.std(ddof=1) / math.sqrt(tt.size), 1.0)
    for x in s:
        # global time = local time inside R + the outside timer
        assert x.time == pytest.approx(x.local_R + x.sigma_lambda[0], rel=1e-12)
        assert x.local_C == x.sigma_lambda[0]
        assert x.end_state not in ctx.R


def test_thermalize_rule_bookkeeping(well8):
    chain, R = well8
    rule = Thermalize(tuple(range(4)), 0.5, 0.5, 1.0, 1.0)
    s = sample_many(chain, 0, rule, 200, seed=6)
    for x in s:
        assert x.i0 == len(x.sigma_kappa) == len(x.sigma_lambda)
        assert x.tau_delta == pytest.approx(x.local_R + x.local_C, rel=1e-12)


def test_race_with_pinned_rates_is_hitting_order(path3):
    s = sample_many(path3, "b", Race((0,), (2,), math.inf, math.inf), 5000, seed=8)
    won = np.mean([x.won for x in s])
    res = solve_capacity(path3, ["a"], ["c"])
    assert _within(won, math.sqrt(won * (1 - won) / 5000), res.potential[1])


def test_exit_law_from_qsd(well8):
    chain, R = well8
    ctx = restrict(chain, R)
    q = qsd(ctx)
    rep = empirical_exit_law(chain, R, q.mu_star, 3000, seed=9)
    assert rep.phi_star == q.phi_star
    assert _within(rep.mean_scaled, rep.se_mean, 1.0)
    assert rep.ks < 0.04


def test_sample_many_rejects_empty(pair):
    with pytest.raises(ValueError):
        sample_many(pair, "a", Hit((1,)), 0, seed=0)
