"""Spectral gaps, quasi-stationary distributions and conditioned laws.

All eigenproblems are solved on the symmetrized operator
``W^{1/2} (I - K) W^{-1/2}`` where ``K`` is reversible with respect to the
weights ``W``.  Dense LAPACK ``eigh`` is used up to a few thousand states
and shift-invert Lanczos above.  Small eigenvalues are then refined by
inverse iteration with subtraction-free elimination and reported as
Rayleigh quotients written without differences of nearly equal numbers,
so that escape rates and gaps far below machine epsilon keep their
relative accuracy.
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh
from scipy.stats import poisson

from .chain import dirichlet_form, solve_killed
from .errors import SurvivalUnderflow

DENSE_EIG_LIMIT = 3000
REFINE_BELOW = 1e-4

__all__ = [
    "QsdData",
    "spectral_gap",
    "qsd",
    "pf_data",
    "uniformized_law",
    "yaglom_distribution",
    "exit_survival",
    "spectral_transient",
    "tv_distance",
]


def tv_distance(a, b):
    """Total variation distance between two probability vectors."""
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


def _symmetrized(kernel, killing):
    """Sparse symmetric ``W^{1/2} (I - K) W^{-1/2}``.

    For a kernel reversible with respect to ``W`` the off-diagonal entries
    equal ``sqrt(K(x, y) K(y, x))``, which avoids the weights altogether
    (they may be subnormal for strongly metastable chains).  ``killing``
    is the missing row mass of ``K`` (zero for a stochastic kernel); the
    diagonal is built from it and the off-diagonal row sums.
    """
    k = sp.csr_matrix(kernel, copy=True)
    k.setdiag(0.0)
    k.eliminate_zeros()
    q = np.asarray(k.sum(axis=1)).ravel() + killing
    s = k.multiply(k.T).sqrt()
    return (sp.diags(q) - s).tocsr()


def _quadratic(w, kernel, killing, f):
    """``<f, (I - K) f>_W`` as a sum of nonnegative terms."""
    c = sp.coo_matrix(kernel)
    off = c.row != c.col
    d = f[c.row[off]] - f[c.col[off]]
    edge = 0.5 * np.sum(w[c.row[off]] * c.data[off] * d * d)
    return float(edge + np.sum(w * killing * f * f))


def _lowest(s, k):
    """The ``k`` smallest eigenpairs of a symmetric positive semidefinite matrix."""
    m = s.shape[0]
    if m <= DENSE_EIG_LIMIT:
        vals, vecs = eigh(s.toarray(), subset_by_index=[0, min(k, m) - 1])
        return vals, vecs
    shift = -1e-8 * abs(s.diagonal()).max()
    vals, vecs = eigsh(s.tocsc(), k=k, sigma=shift, which="LM")
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


@dataclass(frozen=True)
class QsdData:
    """Perron-Frobenius data of the killed kernel on ``R``.

    Attributes
    ----------
    phi_star : float
        Escape rate, one minus the top eigenvalue of the killed kernel.
    mu_star : ndarray
        Quasi-stationary distribution on ``R``.
    h_star : ndarray
        Density ``mu_star / mu_R``.
    gamma_star : float
        Gap between the two largest eigenvalues of the killed kernel
        (``inf`` when ``|R| = 1``).
    gamma_R : float
        Spectral gap of the reflected chain (``inf`` when ``|R| = 1``).
    eps_star : float
        ``phi_star / gamma_R`` (zero when ``|R| = 1``).
    phi_R : float
        ``mu_R(e_R)``.
    zeta_star, zeta_R : float
        ``min mu_R h_star^2`` and ``min mu_R``.
    alpha_R : float
        ``max e_R``.
    var_h : float
        Variance of ``h_star`` under ``mu_R``.
    """

    phi_star: float
    mu_star: np.ndarray
    h_star: np.ndarray
    gamma_star: float
    gamma_R: float
    eps_star: float
    phi_R: float
    zeta_star: float
    zeta_R: float
    alpha_R: float
    var_h: float


def spectral_gap(chain):
    """Smallest nonzero eigenvalue of ``I - p``.

    Returns ``inf`` for a one-state chain.

    Examples
    --------
    >>> from metastable import build_chain
    >>> ch = build_chain(["a", "b"], [[0.8, 0.2], [0.3, 0.7]])
    >>> round(spectral_gap(ch), 12)
    0.5
    """
    n = chain.n
    if n == 1:
        return math.inf
    mu = chain.mu
    s = _symmetrized(chain.kernel, np.zeros(n))
    vals, vecs = _lowest(s, 2)
    gap = float(vals[1])
    if gap >= REFINE_BELOW:
        return gap
    f = vecs[:, 1] / np.sqrt(mu)
    return _refine_gap(chain, f)


def _refine_gap(chain, f, iters=3):
    """Inverse iteration for the slowest mode.

    Each step solves the Poisson equation ``(I - p) w = f`` for a centred
    ``f`` by grounding the heaviest state and using subtraction-free
    elimination.  The gap is returned as ``<w, f>_mu / <w, w>_mu``, the
    Rayleigh quotient of ``w`` written without differences of nearly
    equal numbers, so it keeps relative accuracy far below machine
    epsilon.
    """
    mu = chain.mu
    g = int(np.argmax(mu))
    keep = np.setdiff1d(np.arange(chain.n), [g])
    k = chain.kernel.tocsr()
    block = k[keep][:, keep]
    out = k[keep][:, [g]].toarray().ravel()
    gap = math.nan
    for _ in range(iters):
        f = f - mu @ f
        f = f / math.sqrt(mu @ (f * f))
        w = np.zeros(chain.n)
        w[keep] = solve_killed(block, out, f[keep])
        w -= mu @ w
        gap = float(mu @ (w * f)) / float(mu @ (w * w))
        f = w
    return gap


def pf_data(w, kernel, killing, iters=2):
    """Perron-Frobenius eigenpair of a sub-stochastic reversible kernel.

    Parameters
    ----------
    w : ndarray
        Positive weights for which ``kernel`` is reversible.
    kernel : sparse matrix
        Sub-stochastic kernel.
    killing : ndarray
        Missing row mass, ``1 - kernel.sum(axis=1)``, supplied separately
        so that it keeps full relative accuracy.

    Returns
    -------
    phi : float
        One minus the top eigenvalue.
    mu_star : ndarray
        Normalized left eigenvector.
    gap : float
        Difference between the two smallest eigenvalues of ``I - kernel``
        (``inf`` for a single state).
    """
    m = w.size
    if m == 1:
        return float(killing[0]), np.ones(1), math.inf
    s = _symmetrized(kernel, killing)
    vals, vecs = _lowest(s, 2)
    with np.errstate(over="ignore"):
        f = np.abs(vecs[:, 0]) / np.sqrt(w)
    if killing.max() > 0:
        # inverse iteration on the density, (I - K) f = phi f; the estimate
        # <f_new, f_old>_w / <f_new, f_new>_w is the Rayleigh quotient of f_new
        f = np.where(np.isfinite(f), f, 1.0)
        for _ in range(iters + 1):
            old = f / f.max()
            f = solve_killed(kernel, killing, old)
        phi = float(w @ (f * old)) / float(w @ (f * f))
    else:
        phi = _quadratic(w, kernel, killing, f) / float(w @ (f * f))
    f /= f.max()
    mu_star = w * f
    mu_star /= mu_star.sum()
    return phi, mu_star, float(vals[1] - vals[0])


def qsd(ctx):
    """Quasi-stationary data of the subset held by ``ctx``.

    Returns
    -------
    QsdData

    Notes
    -----
    For a singleton ``R`` the reflected chain has no gap; ``gamma_R`` and
    ``gamma_star`` are reported as ``inf`` and ``eps_star`` as 0.
    """
    mu_R = ctx.mu_R
    phi, mu_star, gstar = pf_data(mu_R, ctx.killed_kernel, ctx.escape)
    gamma_R = spectral_gap(ctx.reflected_chain)
    eps = 0.0 if math.isinf(gamma_R) else phi / gamma_R
    h = mu_star / mu_R
    return QsdData(
        phi_star=phi,
        mu_star=mu_star,
        h_star=h,
        gamma_star=gstar,
        gamma_R=gamma_R,
        eps_star=eps,
        phi_R=float(mu_R @ ctx.escape),
        zeta_star=float(np.min(mu_R * h * h)),
        zeta_R=float(mu_R.min()),
        alpha_R=float(ctx.escape.max()),
        var_h=float(mu_R @ (h - 1.0) ** 2),
    )


def _terms(t):
    return max(20, math.ceil(t + 12.0 * math.sqrt(t)))


def uniformized_law(kernel, nu, times):
    """Sub-probability row vectors ``nu exp(t (K - I))`` for several ``t``.

    The Poisson mixture ``sum_k e^{-t} t^k / k! nu K^k`` is truncated after
    ``max(20, ceil(t + 12 sqrt(t)))`` terms, which leaves a relative tail
    below 1e-14.

    Parameters
    ----------
    kernel : sparse matrix or ndarray, shape (m, m)
    nu : ndarray, shape (m,)
        Initial (sub-)probability vector.
    times : float or sequence of float
        Nonnegative times.

    Returns
    -------
    ndarray, shape (len(times), m)
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    kt = sp.csr_matrix(kernel).T.tocsr()
    nmax = max(_terms(t) for t in times)
    ks = np.arange(nmax + 1)
    weights = np.array([poisson.pmf(ks, t) if t > 0 else (ks == 0).astype(float) for t in times])
    out = np.zeros((times.size, np.size(nu)))
    v = np.asarray(nu, dtype=float).copy()
    for k in range(nmax + 1):
        wk = weights[:, k]
        if wk.any():
            out += np.outer(wk, v)
        v = kt @ v
    return out


def _start(ctx, x):
    if isinstance(x, str):
        x = ctx.chain.index([x])[0]
    pos = np.searchsorted(ctx.R, int(x))
    if pos >= ctx.R.size or ctx.R[pos] != int(x):
        raise ValueError("starting state must lie in R")
    nu = np.zeros(ctx.R.size)
    nu[pos] = 1.0
    return nu


def exit_survival(ctx, nu, times):
    """``P_nu(tau > t)`` for the exit time of ``R``; ``nu`` is a vector on ``R``."""
    law = uniformized_law(ctx.killed_kernel, nu, times)
    return law.sum(axis=1)


def yaglom_distribution(ctx, x, t):
    """Law at time ``t`` of the chain started at ``x`` and conditioned to stay in ``R``.

    Parameters
    ----------
    ctx : SubsetContext
    x : int or str
        Starting state (index into the full chain, or identifier), in ``R``.
    t : float
        Time, nonnegative.

    Returns
    -------
    law : ndarray
        Conditional distribution on ``R``.
    survival : float
        ``P_x(tau > t)``.

    Raises
    ------
    SurvivalUnderflow
        If the survival probability is below 1e-300.
    """
    nu = _start(ctx, x)
    row = uniformized_law(ctx.killed_kernel, nu, [t])[0]
    surv = float(row.sum())
    if surv < 1e-300:
        raise SurvivalUnderflow(f"survival probability {surv:.3g} at t={t}")
    return row / surv, surv


def spectral_transient(w, kernel, killing, nu, times, phi=None):
    """``nu exp(-t (I - K))`` through the eigendecomposition of the symmetrized kernel.

    An alternative to :func:`uniformized_law` whose cost does not grow
    with ``t``, for kernels small enough for a dense eigensolve.

    Parameters
    ----------
    w, kernel, killing
        As in :func:`pf_data`.
    nu : ndarray, shape (m,) or (r, m)
        Initial vector(s).
    times : sequence of float
    phi : float, optional
        Refined bottom eigenvalue; substituted for the dense one so that
        long-time survival keeps relative accuracy.

    Returns
    -------
    ndarray, shape (len(times), m) or (len(times), r, m)
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    s = _symmetrized(kernel, killing).toarray()
    vals, vecs = eigh(s)
    if phi is not None:
        vals = vals.copy()
        vals[0] = phi
    nu = np.asarray(nu, dtype=float)
    sq = np.sqrt(w)
    coef = (nu / sq) @ vecs
    out = []
    for t in times:
        out.append(((coef * np.exp(-t * vals)) @ vecs.T) * sq)
    return np.array(out)
