"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

The verdict line is written with output capture disabled so that it shows
up in a plain ``pytest -v`` log.
"""
import math
import time

import numpy as np
import pytest

from metastable.bounds import exit_rate_bracket, relaxation_bracket
from metastable.capacity import exit_identities, solve_capacity, thomson_lower_bound
from metastable.chain import mean_hitting_times, restrict
from metastable.generators import two_well
from metastable.models import build_cw_full, build_cw_mag, build_wasp, cw_asymptotics, cw_exact, cw_spec
from metastable.models import wasp_radial_flow
from metastable.simulate import empirical_exit_law, thermalization_experiment
from metastable.soft import lambda_sweep
from metastable.spectral import exit_survival, qsd, spectral_gap

from conftest import random_cases


@pytest.fixture
def verdict(capsys):
    start = time.perf_counter()

    def report(number, title, ok, detail, limit):
        elapsed = time.perf_counter() - start
        ok = bool(ok) and elapsed < limit
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail} "
                  f"({elapsed:.2f} s, limit {limit:g} s)")
        assert ok, detail

    return report


@pytest.fixture(scope="module")
def hundred_chains():
    return random_cases(100, 2024, n_max=30)


def test_exact_exit_law_certificate(verdict):
    chain, R = two_well(8, 4.0, 0.5)
    ctx = restrict(chain, R)
    q = qsd(ctx)
    ts = np.array([1.0, 5.0, 10.0]) / q.phi_star
    surv = exit_survival(ctx, q.mu_star, ts)
    err = float(np.max(np.abs(surv - np.exp(-q.phi_star * ts))))
    verdict(1, "exit law from the QSD is exponential", err <= 1e-8, f"max |P(tau>t) - e^(-phi t)| = {err:.3e}", 1)


def test_exit_rate_sandwich(verdict, hundred_chains):
    worst = math.inf
    for chain, R in hundred_chains:
        ctx = restrict(chain, R)
        q = qsd(ctx)
        t = mean_hitting_times(chain, ctx.complement)
        rate = 1.0 / float(ctx.mu_R @ t[ctx.R])
        worst = min(worst, rate - q.phi_star, q.phi_R - rate)
    verdict(2, "phi* <= 1/E_muR[tau] <= phi_R", worst >= -1e-10, f"min slack {worst:.3e} over 100 chains", 10)


def test_capacity_exit_identities(verdict, hundred_chains):
    e_mean, e_exit, e_time = 0.0, 0.0, 0.0
    for chain, R in hundred_chains:
        for kappa in (0.01, 0.1, 1.0):
            d = exit_identities(chain, R, kappa)
            e_mean = max(e_mean, abs(d["mean_potential"] - d["mean_potential_formula"]))
            e_exit = max(e_exit, abs(d["scaled_exit"] / d["scaled_exit_formula"] - 1))
            e_time = max(e_time, abs(d["exit_time"] / d["exit_time_formula"] - 1))
    ok = e_mean <= 1e-10 and e_exit <= 1e-8 and e_time <= 1e-8
    verdict(3, "mean potential and harmonic-measure identities", ok,
            f"potential err {e_mean:.2e}, scaled exit rel err {e_exit:.2e}, exit time rel err {e_time:.2e}", 30)


def test_capacity_duality_and_monotonicity(verdict):
    grid = [0.01, 0.1, 1.0, 10.0, math.inf]
    gap, mono = 0.0, True
    for chain, R in random_cases(20, 77, n_max=30):
        ctx = restrict(chain, R)
        table = np.empty((5, 5))
        for i, k in enumerate(grid):
            for j, lam in enumerate(grid):
                res = solve_capacity(chain, ctx.R, ctx.complement, k, lam)
                gap = max(gap, abs(res.dirichlet_energy * res.thomson_energy - 1))
                table[i, j] = res.value
        slack = 1e-12 * table.max()
        mono &= bool(np.all(np.diff(table, axis=0) >= -slack) and np.all(np.diff(table, axis=1) >= -slack))
    verdict(4, "Dirichlet/Thomson duality and monotone capacities", gap <= 1e-9 and mono,
            f"max |D * E_flow - 1| = {gap:.2e}, monotone = {mono}", 30)


def test_capacity_brackets_tuned_rates(verdict):
    chain, R = two_well(12, 8.0, 0.5)
    ctx = restrict(chain, R)
    q = qsd(ctx)
    kappa = math.sqrt(2 * q.phi_star * q.gamma_R)
    exit_rec = exit_rate_bracket(ctx, q, [kappa])[0]
    gamma_c = spectral_gap(ctx.complement_context().reflected_chain)
    lam = math.sqrt(2 * q.phi_star * gamma_c)
    relax = relaxation_bracket(chain, R, [kappa], [lam])[0]
    ok = exit_rec.holds and relax.holds and exit_rec.ratio <= 1.10 and relax.ratio is not None and relax.ratio <= 1.25
    verdict(5, "tuned-rate brackets of phi* and 1/gamma", ok,
            f"exit bracket ratio {exit_rec.ratio:.4f} (<= 1.10), relaxation ratio {relax.ratio:.4f} (<= 1.25)", 5)


def test_soft_measure_interpolation(verdict):
    chain, R = two_well(8, 4.0, 0.5)
    ctx = restrict(chain, R)
    grid = [0.0] + list(np.logspace(-3, 3, 20)) + [math.inf]
    rows = lambda_sweep(ctx, grid)  # raises on a monotonicity violation
    ok = len(rows) == 22 and rows[0].tv_to_mu_R == 0.0 and rows[-1].tv_to_qsd == 0.0
    verdict(6, "soft-measure sweep endpoints and monotonicity", ok,
            f"TV(lam=0, mu_R) = {rows[0].tv_to_mu_R}, TV(lam=inf, mu*) = {rows[-1].tv_to_qsd}, "
            f"{len(rows)} monotone points", 5)


def test_monte_carlo_exit_law(verdict):
    chain, R = two_well(8, 3.0, 0.5)
    q = qsd(restrict(chain, R))
    rep = empirical_exit_law(chain, R, q.mu_star, 10_000, seed=12345)
    verdict(7, "Monte Carlo exit law from the QSD", rep.ks < 0.02,
            f"KS = {rep.ks:.4f} (< 0.02), mean phi* tau = {rep.mean_scaled:.4f} +- {rep.se_mean:.4f}", 60)


def test_curie_weiss_reproduction(verdict):
    spec = cw_spec(1000, 1.5, 0.05)
    exact, asym = cw_exact(spec), cw_asymptotics(spec)
    r_cap = exact.capacity_saddle / asym.capacity_saddle
    r_mass = exact.metastable_mass / asym.metastable_mass
    r_exit = exact.mean_exit / asym.mean_exit
    r_two = exact.relaxation / exact.mean_exit
    ok = abs(r_cap - 1) <= 0.02 and abs(r_mass - 1) <= 0.02 and abs(r_exit - 1) <= 0.05 and abs(r_two / 2 - 1) <= 0.05
    verdict(8, "Curie-Weiss N=1000 exact vs Laplace asymptotics", ok,
            f"capacity {r_cap:.4f}, metastable mass {r_mass:.4f}, mean exit {r_exit:.4f}, "
            f"relaxation/exit {r_two:.4f} (formula {asym.relaxation / asym.mean_exit:g})", 60)


def test_curie_weiss_lumping(verdict):
    full, rf = build_cw_full(10, 1.5, 0.05)
    mag, rm = build_cw_mag(10, 1.5, 0.05)
    g_f, g_m = spectral_gap(full), spectral_gap(mag)
    p_f, p_m = qsd(restrict(full, rf)).phi_star, qsd(restrict(mag, rm)).phi_star
    e_g, e_p = abs(g_f / g_m - 1), abs(p_f / p_m - 1)
    verdict(9, "full and magnetization Curie-Weiss chains agree", e_g <= 1e-8 and e_p <= 1e-8,
            f"gap rel err {e_g:.2e}, escape rate rel err {e_p:.2e}", 60)


def test_wasp_relaxation_scaling(verdict):
    ns, relax, inside = [4, 6, 8, 10], [], []
    ratios = []
    for n in ns:
        chain, spec = build_wasp(1, 1, 0, n)
        ctx = restrict(chain, spec.thorax)
        g_r = spectral_gap(ctx.reflected_chain)
        g_c = spectral_gap(ctx.complement_context().reflected_chain)
        c = solve_capacity(chain, ctx.R, ctx.complement).value
        phi = c / (ctx.mu_mass * (1 - ctx.mu_mass))
        gamma = spectral_gap(chain)
        rec = relaxation_bracket(chain, ctx.R, [math.sqrt(phi * g_r)], [math.sqrt(phi * g_c)], gamma=gamma)[0]
        inside.append(rec.holds and rec.lower is not None)
        ratios.append(rec.ratio)
        relax.append(1.0 / gamma)
    slope = float(np.polyfit(np.log(ns), np.log(relax), 1)[0])
    ok = all(inside) and 2.5 <= slope <= 3.5
    verdict(10, "wasp body relaxation time in bracket, order n^3", ok,
            f"inside = {inside}, bracket ratios {[round(r, 3) for r in ratios]}, slope {slope:.3f}", 600)


def test_radial_flow_budget(verdict):
    side, kappa, alpha = 8, 0.01, 1.0 / 6
    chain, flow = wasp_radial_flow(side, 2024, 20_000)
    lo = thomson_lower_bound(chain, [chain.states[0]], chain.states, math.inf, kappa, flow)
    exact = solve_capacity(chain, [chain.states[0]], chain.states, math.inf, kappa).value
    budget = 2161 * (1 + side) ** 3 / alpha + 6 / (kappa * math.pi)
    ok = lo <= exact * (1 + 1e-9) and 1.0 / lo <= budget
    verdict(11, "radial unit flow on the l=8 cube within the energy budget", ok,
            f"mu(R)/C from flow {1 / lo:.1f} (exact {1 / exact:.1f}) <= budget {budget:.4g}", 60)


def test_thermalization(verdict):
    chain, R = two_well(6, 2.0, 0.5)
    rep = thermalization_experiment(chain, R, 0.02, 0.02, 0.2, 100_000, seed=7)
    ok = rep.deviation_ok and rep.tail_ok and rep.xi < 1
    verdict(12, "thermalization landing law and tail envelope", ok,
            f"max(|dev| - 3 SE) = {rep.max_excess:.4f} (< 0.2), xi = {rep.xi:.4f}, tail ok = {rep.tail_ok}", 120)
