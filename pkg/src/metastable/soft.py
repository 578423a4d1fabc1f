"""Soft measures: the trace on ``R`` of the chain killed at rate ``lam`` outside ``R``.

From ``x`` in ``R`` the first ring is never killed.  Each ring spent in
the complement ``C`` is preceded by a holding time that survives an
independent rate-``lam`` timer with probability ``1 / (1 + lam)``, so the
return operator from ``C`` to ``R`` is

    K_lam = ((1 + lam) I - p_CC)^{-1} p_CR

and the killed trace kernel is ``p_RR + p_RC K_lam``.  The escape
probability is ``p_RC k_lam`` with ``k_lam = lam ((1 + lam) I - p_CC)^{-1} 1``,
computed directly rather than as one minus a row sum.

``lam = math.inf`` is the hard-killing limit and maps exactly to the killed
kernel of :class:`~metastable.chain.SubsetContext`.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .chain import build_chain
from .errors import MonotonicityViolation, SingularSystem
from .spectral import pf_data, spectral_gap, tv_distance, qsd as hard_qsd

INF = math.inf
SWEEP_SLACK = 1e-12

__all__ = ["INF", "SoftKernel", "SoftQsd", "build_soft_kernel", "soft_qsd", "lambda_sweep", "SweepRow"]


@dataclass(frozen=True)
class SoftKernel:
    """Killed trace kernel on ``R`` for killing rate ``lam``.

    Attributes
    ----------
    lam : float
        Killing rate (``math.inf`` allowed).
    p_star : csr_matrix
        Sub-stochastic kernel on ``R x R``.
    escape : ndarray
        Killing probability per step from each state of ``R``.
    p_soft : csr_matrix
        ``p_star`` with the escape folded into the diagonal.
    conductances : csr_matrix
        ``mu_R(x) p_soft(x, y)``, symmetrized.
    """

    lam: float
    p_star: sp.csr_matrix
    escape: np.ndarray
    p_soft: sp.csr_matrix
    conductances: sp.csr_matrix


def build_soft_kernel(ctx, lam):
    """Assemble the soft kernel of ``ctx`` at killing rate ``lam``.

    Examples
    --------
    >>> from metastable import build_chain, restrict
    >>> ch = build_chain(["a", "b"], [[0.8, 0.2], [0.3, 0.7]])
    >>> sk = build_soft_kernel(restrict(ch, ["a"]), 1.0)
    >>> round(float(sk.escape[0]), 12)
    0.153846153846
    """
    lam = float(lam)
    if not lam >= 0:
        raise ValueError("lam must be nonnegative")
    mu_R = ctx.mu_R
    if math.isinf(lam):
        p_star = sp.csr_matrix(ctx.killed_kernel)
        escape = ctx.escape.copy()
    else:
        p = ctx.chain.kernel
        R, C = ctx.R, ctx.complement
        p_cc = sp.csr_matrix(p[C][:, C])
        p_cr = p[C][:, R].toarray()
        p_rc = p[R][:, C]
        leave = np.asarray(p_cr.sum(axis=1)).ravel()
        off = p_cc.copy()
        off.setdiag(0.0)
        off.eliminate_zeros()
        q = np.asarray(off.sum(axis=1)).ravel() + leave
        a = sp.diags(lam + q) - off
        try:
            lu = splu(sp.csc_matrix(a))
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc
        k_ret = lu.solve(p_cr)
        p_star = ctx.killed_kernel.toarray() + p_rc @ k_ret
        if lam > 0:
            k_kill = lu.solve(np.full(C.size, lam))
            escape = np.asarray(p_rc @ k_kill).ravel()
        else:
            escape = np.zeros(R.size)
        p_star = sp.csr_matrix(p_star)
    p_soft = sp.csr_matrix(p_star + sp.diags(escape))
    cond = sp.diags(mu_R) @ p_soft
    cond = sp.csr_matrix(0.5 * (cond + cond.T))
    return SoftKernel(lam=lam, p_star=p_star, escape=escape, p_soft=p_soft, conductances=cond)


@dataclass(frozen=True)
class SoftQsd:
    """Perron-Frobenius data of a soft kernel.

    Attributes mirror :class:`~metastable.spectral.QsdData` with the extra
    killing index: ``gamma_soft`` is the gap of ``p_soft``, ``gamma_star``
    the gap between the two top eigenvalues of ``p_star``.
    """

    lam: float
    phi_star: float
    mu_star: np.ndarray
    h_star: np.ndarray
    gamma_soft: float
    gamma_star: float
    eps_star: float
    phi_soft: float
    zeta_star: float
    alpha: float
    var_h: float


def _soft_chain(ctx, sk):
    return build_chain(ctx.states_R, sk.p_soft, ctx.mu_R)


def soft_qsd(sk, ctx):
    """Quasi-stationary data of the soft kernel ``sk`` built on ``ctx``."""
    mu_R = ctx.mu_R
    if sk.lam == 0.0:
        phi, mu_star = 0.0, mu_R.copy()
        _, _, gstar = pf_data(mu_R, sk.p_star, sk.escape)
    else:
        phi, mu_star, gstar = pf_data(mu_R, sk.p_star, sk.escape)
    if math.isinf(sk.lam):
        gamma = spectral_gap(ctx.reflected_chain)
    else:
        gamma = spectral_gap(_soft_chain(ctx, sk))
    eps = 0.0 if math.isinf(gamma) else phi / gamma
    h = mu_star / mu_R
    return SoftQsd(
        lam=sk.lam,
        phi_star=phi,
        mu_star=mu_star,
        h_star=h,
        gamma_soft=gamma,
        gamma_star=gstar,
        eps_star=eps,
        phi_soft=float(mu_R @ sk.escape),
        zeta_star=float(np.min(mu_R * h * h)),
        alpha=float(sk.escape.max()),
        var_h=float(mu_R @ (h - 1.0) ** 2),
    )


@dataclass(frozen=True)
class SweepRow:
    """One grid point of a killing-rate sweep."""

    lam: float
    qsd: SoftQsd
    tv_to_mu_R: float
    tv_to_qsd: float
    continuity: float = field(default=math.nan)


def _davis_kahan(ctx, sk_a, sk_b, gap):
    """``sin(theta)`` bound between PF vectors of two soft kernels."""
    w = np.sqrt(ctx.mu_R)
    d = (sk_a.p_star - sk_b.p_star).toarray()
    d = w[:, None] * d / w[None, :]
    d = 0.5 * (d + d.T)
    if not math.isfinite(gap) or gap <= 0:
        return math.nan
    return float(np.linalg.norm(d, 2) / gap)


def lambda_sweep(ctx, grid):
    """Soft quasi-stationary data along an ascending grid of killing rates.

    The grid may contain ``0`` and ``math.inf``.  Escape rates and the
    escape-to-gap ratio must be nondecreasing and the soft gap
    nonincreasing in ``lam`` (up to 1e-12); a violation raises
    :class:`MonotonicityViolation`.  Each row also reports a Davis-Kahan
    ``sin(theta)`` bound between consecutive quasi-stationary vectors as a
    continuity diagnostic (not asserted).

    Returns
    -------
    list of SweepRow
    """
    grid = [float(g) for g in grid]
    if any(g < 0 for g in grid) or any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be ascending and nonnegative")
    hard = hard_qsd(ctx)
    rows = []
    prev = None
    for lam in grid:
        sk = build_soft_kernel(ctx, lam)
        sq = soft_qsd(sk, ctx)
        tv_r = tv_distance(sq.mu_star, ctx.mu_R)
        tv_q = tv_distance(sq.mu_star, hard.mu_star)
        cont = math.nan
        if prev is not None:
            cont = _davis_kahan(ctx, prev[0], sk, sq.gamma_star)
            _check_monotone(prev[1], sq)
        rows.append(SweepRow(lam, sq, tv_r, tv_q, cont))
        prev = (sk, sq)
    return rows


def _check_monotone(a, b):
    def up(name, x, y):
        if y < x - SWEEP_SLACK * max(1.0, abs(x)):
            raise MonotonicityViolation(f"{name} decreased from {x!r} to {y!r} between lam={a.lam} and {b.lam}")

    up("phi_star", a.phi_star, b.phi_star)
    up("eps_star", a.eps_star, b.eps_star)
    up("phi_soft", a.phi_soft, b.phi_soft)
    if not math.isinf(a.gamma_soft):
        if b.gamma_soft > a.gamma_soft + SWEEP_SLACK * max(1.0, abs(a.gamma_soft)):
            raise MonotonicityViolation(
                f"gamma_soft increased from {a.gamma_soft!r} to {b.gamma_soft!r} between lam={a.lam} and {b.lam}"
            )
