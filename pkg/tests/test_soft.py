import math

import numpy as np
import pytest
from scipy.linalg import eig

from metastable.chain import restrict
from metastable.errors import MonotonicityViolation
from metastable.generators import complete_uniform, random_reversible
from metastable.soft import _check_monotone, build_soft_kernel, lambda_sweep, soft_qsd
from metastable.spectral import qsd, uniformized_law

from conftest import random_cases


@pytest.mark.parametrize("lam", [0.0, 0.1, 1.0, 7.0])
def test_two_state_closed_form(pair, lam):
    ctx = restrict(pair, ["a"])
    sk = build_soft_kernel(ctx, lam)
    q, r = 0.2, 0.3
    assert sk.escape[0] == pytest.approx(q * lam / (lam + r), abs=1e-15)
    # return probability from b is r / (lam + r)
    assert sk.p_star.toarray()[0, 0] == pytest.approx(0.8 + q * r / (lam + r), abs=1e-15)
    sq = soft_qsd(sk, ctx)
    assert sq.phi_star == pytest.approx(q * lam / (lam + r), abs=1e-15)


def test_two_state_lambda_one(pair):
    sq = soft_qsd(build_soft_kernel(restrict(pair, ["a"]), 1.0), restrict(pair, ["a"]))
    assert sq.phi_star == pytest.approx(0.2 / 1.3, abs=1e-15)


def test_zero_rate_is_stochastic_and_restricted_ensemble():
    for chain, R in random_cases(10, 21):
        ctx = restrict(chain, R)
        sk = build_soft_kernel(ctx, 0.0)
        np.testing.assert_allclose(np.asarray(sk.p_star.sum(axis=1)).ravel(), 1.0, atol=1e-12)
        assert np.all(sk.escape == 0)
        sq = soft_qsd(sk, ctx)
        assert sq.phi_star == 0.0
        np.testing.assert_allclose(sq.mu_star, ctx.mu_R, atol=1e-10)


def test_large_rate_tends_to_killed_kernel():
    chain, R = random_cases(1, 22, n_min=10, n_max=10)[0]
    ctx = restrict(chain, R)
    sk = build_soft_kernel(ctx, 1e9)
    np.testing.assert_allclose(sk.p_star.toarray(), ctx.killed_kernel.toarray(), atol=1e-8)
    hard = build_soft_kernel(ctx, math.inf)
    assert (hard.p_star != ctx.killed_kernel).nnz == 0


def test_soft_kernel_invariants():
    for chain, R in random_cases(10, 23):
        ctx = restrict(chain, R)
        prev = None
        for lam in (0.0, 0.05, 0.5, 5.0, math.inf):
            sk = build_soft_kernel(ctx, lam)
            rows = np.asarray(sk.p_star.sum(axis=1)).ravel()
            np.testing.assert_allclose(1 - rows, sk.escape, atol=1e-12)
            flux = np.diag(ctx.mu_R) @ sk.p_soft.toarray()
            assert np.abs(flux - flux.T).max() <= 1e-10
            if prev is not None:
                assert np.all(sk.escape >= prev - 1e-15)
            prev = sk.escape
            sq = soft_qsd(sk, ctx)
            assert sq.mu_star @ sk.escape == pytest.approx(sq.phi_star, abs=1e-10)


def test_pf_vector_matches_dense_eigensolver():
    chain = random_reversible(4, np.random.default_rng(24), density=1.0)
    ctx = restrict(chain, [0, 1])
    sk = build_soft_kernel(ctx, 0.7)
    vals, vecs = eig(sk.p_star.toarray().T)
    i = int(np.argmax(vals.real))
    v = np.abs(vecs[:, i].real)
    sq = soft_qsd(sk, ctx)
    np.testing.assert_allclose(sq.mu_star, v / v.sum(), atol=1e-10)
    assert sq.phi_star == pytest.approx(1 - vals[i].real, abs=1e-12)


def test_uniform_escape_keeps_restricted_ensemble():
    chain = complete_uniform(6)
    ctx = restrict(chain, [0, 1, 2])
    for row in lambda_sweep(ctx, [0.0, 0.3, 3.0, math.inf]):
        np.testing.assert_allclose(row.qsd.mu_star, ctx.mu_R, atol=1e-12)


def test_sweep_endpoints_and_monotonicity(well8):
    chain, R = well8
    ctx = restrict(chain, R)
    grid = [0.0] + list(np.logspace(-4, 3, 20)) + [math.inf]
    rows = lambda_sweep(ctx, grid)
    assert rows[0].tv_to_mu_R == 0.0
    assert rows[-1].tv_to_qsd == 0.0
    hard = qsd(ctx)
    assert rows[-1].qsd.phi_star == hard.phi_star
    for a, b in zip(rows, rows[1:]):
        assert b.qsd.phi_star >= a.qsd.phi_star
        assert b.qsd.gamma_soft <= a.qsd.gamma_soft * (1 + 1e-12)


def test_sweep_rejects_unsorted_grid(well8):
    chain, R = well8
    with pytest.raises(ValueError):
        lambda_sweep(restrict(chain, R), [1.0, 0.5])


def test_monotonicity_violation_is_reported(well8):
    chain, R = well8
    ctx = restrict(chain, R)
    a = soft_qsd(build_soft_kernel(ctx, 1.0), ctx)
    b = soft_qsd(build_soft_kernel(ctx, 0.1), ctx)
    with pytest.raises(MonotonicityViolation):
        _check_monotone(a, b)


def test_orderings_against_hard_killing():
    for chain, R in random_cases(10, 25):
        ctx = restrict(chain, R)
        hard = qsd(ctx)
        for lam in (0.01, 0.3, 10.0):
            sq = soft_qsd(build_soft_kernel(ctx, lam), ctx)
            assert sq.phi_star <= hard.phi_star * (1 + 1e-12)
            if not math.isinf(hard.gamma_R):
                assert sq.gamma_soft >= hard.gamma_R * (1 - 1e-12)
                assert sq.eps_star <= hard.eps_star * (1 + 1e-12)


def test_soft_survival_from_soft_qsd_is_exponential(well8):
    chain, R = well8
    ctx = restrict(chain, R)
    sk = build_soft_kernel(ctx, 0.05)
    sq = soft_qsd(sk, ctx)
    times = np.array([0.5, 1.0, 2.0]) / sq.phi_star
    surv = uniformized_law(sk.p_star, sq.mu_star, times).sum(axis=1)
    np.testing.assert_allclose(surv, np.exp(-sq.phi_star * times), atol=1e-8)
