import math

import numpy as np
import pytest
from scipy.linalg import eig, expm

from metastable.chain import build_chain, mean_hitting_times, restrict
from metastable.errors import SurvivalUnderflow
from metastable.generators import complete_uniform, random_reversible, two_well
from metastable.spectral import (
    exit_survival,
    qsd,
    spectral_gap,
    spectral_transient,
    tv_distance,
    uniformized_law,
    yaglom_distribution,
)

from conftest import random_cases


def _left_pf(k):
    vals, vecs = eig(k.T)
    i = int(np.argmax(vals.real))
    v = np.abs(vecs[:, i].real)
    return 1.0 - vals[i].real, v / v.sum(), np.sort(vals.real)[::-1]


def test_two_state_gap(pair):
    assert spectral_gap(pair) == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("n", [2, 5, 12])
def test_complete_graph_gap(n):
    assert spectral_gap(complete_uniform(n)) == pytest.approx(1.0, abs=1e-12)


def test_singleton_qsd(pair):
    q = qsd(restrict(pair, ["a"]))
    assert q.phi_star == pytest.approx(0.2, abs=1e-15)
    assert q.mu_star.tolist() == [1.0]
    assert q.h_star.tolist() == [1.0]
    assert q.eps_star == 0.0
    assert math.isinf(q.gamma_R)


def test_two_states_inside_path(path3):
    ctx = restrict(path3, ["a", "b"])
    q = qsd(ctx)
    phi, mu_star, _ = _left_pf(ctx.killed_kernel.toarray())
    assert q.phi_star == pytest.approx(phi, abs=1e-12)
    np.testing.assert_allclose(q.mu_star, mu_star, atol=1e-10)


def test_qsd_invariants_on_random_chains():
    for chain, R in random_cases(25, 11):
        ctx = restrict(chain, R)
        q = qsd(ctx)
        k = ctx.killed_kernel.toarray()
        np.testing.assert_allclose(q.mu_star @ k, (1 - q.phi_star) * q.mu_star, atol=1e-10)
        assert np.all(q.mu_star > 0)
        assert q.mu_star.sum() == pytest.approx(1.0, abs=1e-12)
        assert q.mu_star @ ctx.escape == pytest.approx(q.phi_star, abs=1e-10)
        assert q.gamma_star > 0
        # h* is superharmonic and is smallest on the internal border
        lh = k @ q.h_star - q.h_star
        np.testing.assert_allclose(lh, -q.phi_star * q.h_star, atol=1e-10)
        border = np.isin(ctx.R, ctx.internal_border)
        assert q.h_star[border].min() <= q.h_star.min() + 1e-12


def test_symmetrized_spectrum_matches_asymmetric():
    for chain, R in random_cases(15, 12):
        ctx = restrict(chain, R)
        if ctx.R.size < 2:
            continue
        q = qsd(ctx)
        phi, _, vals = _left_pf(ctx.killed_kernel.toarray())
        assert q.phi_star == pytest.approx(phi, abs=1e-10)
        assert q.gamma_star == pytest.approx(vals[0] - vals[1], abs=1e-10)


def test_gap_matches_dense_eigensolve():
    rng = np.random.default_rng(13)
    for n in (4, 9, 20):
        chain = random_reversible(n, rng)
        vals = np.sort(np.linalg.eigvals(np.eye(n) - chain.dense_kernel()).real)
        assert spectral_gap(chain) == pytest.approx(vals[1], rel=1e-9)


def test_tiny_gap_keeps_relative_accuracy():
    chain, R = two_well(10, 30.0, 0.5)
    g = spectral_gap(chain)
    # relaxation of a birth-death chain: compare with the exact isoperimetric-order value
    ctx = restrict(chain, R)
    q = qsd(ctx)
    assert 0 < g < 1e-8
    assert q.phi_star <= g <= 10 * q.phi_star / ctx.mu_mass


def test_uniformization_matches_expm():
    chain = random_reversible(8, np.random.default_rng(14), density=1.0)
    ctx = restrict(chain, [0, 1, 2, 3])
    k = ctx.killed_kernel.toarray()
    nu = np.array([0.1, 0.2, 0.3, 0.4])
    times = [0.0, 0.5, 3.0, 40.0]
    got = uniformized_law(ctx.killed_kernel, nu, times)
    for row, t in zip(got, times):
        np.testing.assert_allclose(row, nu @ expm(t * (k - np.eye(4))), rtol=1e-12, atol=1e-16)


def test_spectral_transient_matches_uniformization():
    chain = random_reversible(8, np.random.default_rng(15), density=1.0)
    ctx = restrict(chain, [0, 1, 2, 3, 4])
    nu = np.full(5, 0.2)
    a = uniformized_law(ctx.killed_kernel, nu, [1.0, 10.0])
    b = spectral_transient(ctx.mu_R, ctx.killed_kernel, ctx.escape, nu, [1.0, 10.0])
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-15)


def test_yaglom_examples(well8):
    chain, R = well8
    ctx = restrict(chain, R)
    q = qsd(ctx)
    law, surv = yaglom_distribution(ctx, R[0], 0.0)
    assert surv == 1.0
    assert law[0] == 1.0
    law, _ = yaglom_distribution(ctx, R[0], 50.0 / q.gamma_star)
    assert tv_distance(law, q.mu_star) < 1e-8


def test_survival_from_qsd_is_exponential(well8):
    chain, R = well8
    ctx = restrict(chain, R)
    q = qsd(ctx)
    times = np.array([0.3, 1.0, 4.0]) / q.phi_star
    np.testing.assert_allclose(exit_survival(ctx, q.mu_star, times), np.exp(-q.phi_star * times), rtol=1e-10)


def test_survival_underflow(pair):
    ctx = restrict(pair, ["a"])
    with pytest.raises(SurvivalUnderflow):
        yaglom_distribution(ctx, "a", 5000.0)


def test_yaglom_decay_rate_matches_second_gap():
    chain = random_reversible(7, np.random.default_rng(16), density=1.0)
    ctx = restrict(chain, [0, 1, 2, 3])
    q = qsd(ctx)
    t0 = 3.0 / q.gamma_star
    ts = t0 + np.linspace(0, 6.0 / q.gamma_star, 7)
    tv = [tv_distance(yaglom_distribution(ctx, ctx.R[0], t)[0], q.mu_star) for t in ts]
    slope = -np.polyfit(ts, np.log(tv), 1)[0]
    assert slope == pytest.approx(q.gamma_star, rel=0.1)


def test_start_outside_R_rejected(pair):
    with pytest.raises(ValueError):
        yaglom_distribution(restrict(pair, ["a"]), "b", 1.0)


def test_gap_far_below_machine_epsilon():
    # three-state path with sticky ends; the nonzero eigenvalues of I - p
    # solve x^2 - T x + D = 0 and the small root is taken in stable form
    a, b, c, d = 1e-40, 0.3, 0.2, 3e-40
    p = [[1 - a, a, 0.0], [b, 1 - b - c, c], [0.0, d, 1 - d]]
    chain = build_chain(["x", "y", "z"], p)
    T, D = a + b + c + d, a * c + a * d + b * d
    small = 2 * D / (T + math.sqrt(T * T - 4 * D))
    assert small < 1e-39
    assert spectral_gap(chain) == pytest.approx(small, rel=1e-12)


def test_tiny_escape_rate_matches_mean_exit_time():
    from metastable.models import build_cw_mag

    chain, R = build_cw_mag(1500, 1.5, 0.05)
    ctx = restrict(chain, R)
    q = qsd(ctx)
    t = mean_hitting_times(chain, ctx.complement)[ctx.R]
    assert q.phi_star < 1e-40
    assert q.phi_star * float(q.mu_star @ t) == pytest.approx(1.0, rel=1e-10)
