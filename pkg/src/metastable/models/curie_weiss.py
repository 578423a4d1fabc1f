"""Curie-Weiss Glauber dynamics: full spin chain and magnetization chain.

Spins ``sigma in {-1, 1}^N`` carry the energy
``H(sigma) = -(1/2N) sum_ij sigma_i sigma_j - h sum_i sigma_i = N u(m)``
with ``m`` the mean magnetization and ``u(m) = -m^2/2 - h m``.  The
heat-bath dynamics picks a spin uniformly and resamples it; its image on
the grid ``{-1, -1 + 2/N, ..., 1}`` is a birth-death chain.

Free energies: ``s(m)`` is the binary entropy, ``f = u - s/beta`` its
continuum limit and ``f_N`` the exact finite-``N`` version in which the
entropy is ``log binom(N, N(1+m)/2) / N`` computed with log-gamma.
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.special import expit, gammaln, logsumexp

from ..chain import build_chain, mean_hitting_times
from ..errors import NoDoubleWell, TooLarge
from ..spectral import spectral_gap

FULL_LIMIT = 14
ROOT_TOL = 1e-15

__all__ = [
    "CurieWeissSpec",
    "CwAsymptotics",
    "CwExact",
    "cw_spec",
    "cw_critical_points",
    "build_cw_full",
    "build_cw_mag",
    "cw_log_weights",
    "cw_grid_index",
    "cw_capacity_1d",
    "cw_potential_1d",
    "cw_asymptotics",
    "cw_exact",
    "magnetization_of",
]


def _u(m, h):
    return -0.5 * m * m - h * m


def _s(m):
    m = np.asarray(m, dtype=float)
    a, b = (1 + m) / 2, (1 - m) / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = np.where(a > 0, a * np.log(np.where(a > 0, a, 1.0)), 0.0)
        tb = np.where(b > 0, b * np.log(np.where(b > 0, b, 1.0)), 0.0)
    return -(ta + tb)


def _window(beta):
    """Spinodal offset ``artanh(sqrt(1 - 1/beta)) / beta`` and ``sqrt(1 - 1/beta)``."""
    r = math.sqrt(1.0 - 1.0 / beta)
    return math.atanh(r) / beta, r


def cw_critical_points(beta, h):
    """Roots ``m- < m0 < m+`` of ``m = tanh(beta (m + h))``.

    ``g(m) = m - tanh(beta (m + h))`` has its local maximum at
    ``-h - a`` and local minimum at ``-h + a`` with
    ``a = artanh(sqrt(1 - 1/beta)) / beta``, so three roots exist exactly
    when ``g(-h - a) > 0 > g(-h + a)``.  Each root is then bracketed and
    solved by Brent's method to 1e-15.

    Raises
    ------
    NoDoubleWell
        If ``beta <= 1`` or ``|h|`` is at or beyond the spinodal field
        ``sqrt(1 - 1/beta) - a``.

    Examples
    --------
    >>> m = cw_critical_points(1.5, 0.0)
    >>> round(m[0] + m[2], 12), m[1]
    (0.0, 0.0)
    """
    beta, h = float(beta), float(h)
    if not beta > 1:
        raise NoDoubleWell(f"beta={beta} <= 1 has a single well")
    a, r = _window(beta)

    def g(m):
        return m - math.tanh(beta * (m + h))

    lo, hi = -h - a, -h + a
    if not (g(lo) > 0 > g(hi)) or lo <= -1 or hi >= 1:
        raise NoDoubleWell(f"h={h} outside the double-well window |h| < {r - a:.6g}")
    roots = []
    for x0, x1 in ((-1.0, lo), (lo, hi), (hi, 1.0)):
        if g(x0) == 0:
            roots.append(x0)
        elif g(x1) == 0:
            roots.append(x1)
        else:
            roots.append(brentq(g, x0, x1, xtol=ROOT_TOL, rtol=4 * np.finfo(float).eps))
    return tuple(roots)


@dataclass(frozen=True)
class CurieWeissSpec:
    """Parameters, critical points and free energies of a Curie-Weiss model.

    Attributes
    ----------
    N : int
        Number of spins.
    beta, h : float
        Inverse temperature (> 1) and field (>= 0, inside the double-well
        window).
    m_minus, m_zero, m_plus : float
        Metastable minimum, saddle and stable minimum of ``f``.
    """

    N: int
    beta: float
    h: float
    m_minus: float
    m_zero: float
    m_plus: float

    def u(self, m):
        return _u(np.asarray(m, dtype=float), self.h)

    def s(self, m):
        return _s(m)

    def f(self, m):
        """Continuum free energy ``u - s / beta``."""
        return self.u(m) - self.s(m) / self.beta

    def f2(self, m):
        """``f''(m) = -1 + 1 / (beta (1 - m^2))``."""
        m = np.asarray(m, dtype=float)
        return -1.0 + 1.0 / (self.beta * (1.0 - m * m))

    def f_N(self, m):
        """Exact finite-``N`` free energy on grid points."""
        m = np.asarray(m, dtype=float)
        k = np.rint(self.N * (1 + m) / 2)
        lb = gammaln(self.N + 1) - gammaln(k + 1) - gammaln(self.N - k + 1)
        return self.u(m) - lb / (self.beta * self.N)

    @property
    def barrier(self):
        """``f(m0) - f(m-)``."""
        return float(self.f(self.m_zero) - self.f(self.m_minus))

    @property
    def barrier_back(self):
        """``f(m0 + 2/N) - f(m+)``."""
        return float(self.f(self.m_zero + 2.0 / self.N) - self.f(self.m_plus))

    @property
    def grid(self):
        return (2.0 * np.arange(self.N + 1) - self.N) / self.N

    @property
    def saddle_index(self):
        """Largest grid index ``j`` with ``m_j <= m0``."""
        return cw_grid_index(self.N, self.m_zero, "floor")

    @property
    def metastable_indices(self):
        """Grid indices of ``{m <= m0}``."""
        return np.arange(self.saddle_index + 1)


def cw_spec(N, beta, h):
    """Build a :class:`CurieWeissSpec` and check the double-well invariants.

    Raises
    ------
    NoDoubleWell
        Outside the window, or when ``h < 0`` (the metastable well would
        then be on the right).
    """
    if h < 0:
        raise NoDoubleWell("negative field: mirror the model with h -> -h")
    mm, m0, mp = cw_critical_points(beta, h)
    spec = CurieWeissSpec(int(N), float(beta), float(h), mm, m0, mp)
    if not (spec.f2(mm) > 0 and spec.f2(mp) > 0 and spec.f2(m0) < 0):
        raise NoDoubleWell("second-derivative signs do not describe a double well")
    return spec


def cw_grid_index(N, m, mode="nearest"):
    """Grid index ``j`` of a magnetization, ``m_j = (2 j - N) / N``.

    ``mode`` is ``"nearest"`` or ``"floor"`` (largest ``m_j <= m``).
    """
    x = N * (1 + m) / 2
    j = math.floor(x + 1e-12) if mode == "floor" else int(round(x))
    return min(max(j, 0), N)


def _state_name(N, j):
    return str(2 * j - N)


def magnetization_of(chain, N=None):
    """Magnetization of each state of a Curie-Weiss chain.

    Full-chain states are ``+``/``-`` strings; magnetization-chain states
    are the total spin ``N m`` written as an integer.
    """
    out = []
    for s in chain.states:
        if set(s) <= {"+", "-"}:
            out.append((s.count("+") - s.count("-")) / len(s))
        else:
            out.append(int(s) / (N if N else chain.n - 1))
    return np.array(out)


def build_cw_full(N, beta, h):
    """Heat-bath Glauber chain on ``{-1, 1}^N``.

    ``p(sigma, sigma^i) = (1/N) e^{-beta H(sigma^i)} / (e^{-beta H(sigma)} + e^{-beta H(sigma^i)})``,
    reversible for the Gibbs measure.

    Returns
    -------
    chain : ReversibleChain
        States are strings of ``+`` and ``-``; bit ``i`` of the state index
        is spin ``i``.
    R : list of str
        ``{sigma : m(sigma) <= m0}`` when the model has a double well,
        otherwise ``{m(sigma) < 0}``.

    Raises
    ------
    TooLarge
        If ``N > 14``.
    """
    N = int(N)
    if N > FULL_LIMIT:
        raise TooLarge(f"N={N} gives 2^N states; the full chain is limited to N <= {FULL_LIMIT}")
    if N < 1:
        raise ValueError("N must be positive")
    n = 1 << N
    idx = np.arange(n)
    bits = (idx[:, None] >> np.arange(N)) & 1
    total = 2 * bits.sum(axis=1) - N
    m = total / N
    energy = N * _u(m, h)
    rows, cols, vals = [], [], []
    for i in range(N):
        tgt = idx ^ (1 << i)
        rows.append(idx)
        cols.append(tgt)
        vals.append(expit(-beta * (energy[tgt] - energy)) / N)
    p = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    off = np.asarray(p.sum(axis=1)).ravel()
    p = (p + sp.diags(1.0 - off)).tocsr()
    logw = -beta * energy
    mu = np.exp(logw - logsumexp(logw))
    names = ["".join("+" if b else "-" for b in row) for row in bits]
    chain = build_chain(names, p, mu)
    try:
        m0 = cw_critical_points(beta, h)[1]
        inR = m <= m0 + 1e-12
    except NoDoubleWell:
        inR = m < 0
    return chain, [names[k] for k in np.flatnonzero(inR)]


def cw_log_weights(N, beta, h):
    """``log binom(N, j) - beta N u(m_j)`` on the grid, i.e. ``-beta N f_N``."""
    j = np.arange(N + 1)
    m = (2.0 * j - N) / N
    return gammaln(N + 1) - gammaln(j + 1) - gammaln(N - j + 1) - beta * N * _u(m, h)


def build_cw_mag(N, beta, h):
    """Birth-death chain of the magnetization on ``{-1, -1 + 2/N, ..., 1}``.

    ``p(m, m + 2/N) = ((1 - m)/2) (1 + tanh(beta (m + h + 1/N)))/2`` and
    ``p(m, m - 2/N) = ((1 + m)/2) (1 + tanh(beta (-m - h + 1/N)))/2``.
    The stationary law is proportional to ``exp(-beta N f_N(m))`` with
    exact log-binomial entropy.

    Returns
    -------
    chain : ReversibleChain
        States are the total spins ``N m`` as strings (``"-N"`` .. ``"N"``).
    R : list of str
        ``{m <= m0}`` when the model has a double well, otherwise
        ``{m < 0}``.

    Raises
    ------
    TooLarge
        If some stationary weight underflows double precision (very large
        ``N``); use :func:`cw_log_weights` there.
    """
    N = int(N)
    if N < 4:
        raise ValueError("N must be at least 4")
    j = np.arange(N + 1)
    m = (2.0 * j - N) / N
    # (1 + tanh x)/2 = expit(2x)
    up = (1 - m) / 2 * expit(2 * beta * (m + h + 1.0 / N))
    down = (1 + m) / 2 * expit(2 * beta * (-m - h + 1.0 / N))
    up[-1] = 0.0
    down[0] = 0.0
    p = sp.diags([down[1:], 1.0 - up - down, up[:-1]], [-1, 0, 1], format="csr")
    logw = cw_log_weights(N, beta, h)
    mu = np.exp(logw - logsumexp(logw))
    if not np.all(mu > 0):
        raise TooLarge(f"stationary weights underflow at N={N}")
    names = [_state_name(N, k) for k in j]
    chain = build_chain(names, p, mu)
    try:
        top = cw_grid_index(N, cw_critical_points(beta, h)[1], "floor")
    except NoDoubleWell:
        top = cw_grid_index(N, -1.0 / N, "floor")
    return chain, names[: top + 1]


def _grid_args(chain, x, y):
    N = chain.n - 1
    x, y = (cw_grid_index(N, v) if isinstance(v, float) else int(v) for v in (x, y))
    if not 0 <= x < y <= N:
        raise ValueError("need grid indices 0 <= x < y <= N")
    return x, y


def _edge_conductance(chain):
    p = chain.kernel
    return chain.mu[:-1] * p.diagonal(1)


def cw_capacity_1d(chain1d, x, y):
    """Capacity between grid points ``x < y`` of a birth-death chain.

    The network between ``x`` and ``y`` is a series of resistors, so
    ``C(x, y)^{-1} = sum_{x <= k < y} 1 / c(k, k+1)``.  ``x`` and ``y``
    are grid indices (ints) or magnetizations (floats, rounded to the
    nearest grid point).
    """
    x, y = _grid_args(chain1d, x, y)
    c = _edge_conductance(chain1d)
    return 1.0 / float(np.sum(1.0 / c[x:y]))


def cw_potential_1d(chain1d, x, y):
    """Equilibrium potential ``V(m) = P_m(tau_x < tau_y)`` of a birth-death chain.

    Returns
    -------
    callable
        ``V(j)`` for grid indices ``j`` (scalar or array): 1 up to ``x``,
        0 from ``y`` on and ``C(x, y) / C(j, y)`` in between.
    """
    x, y = _grid_args(chain1d, x, y)
    r = 1.0 / _edge_conductance(chain1d)
    tail = np.zeros(chain1d.n)
    tail[:-1] = np.cumsum(r[::-1])[::-1]
    tail -= tail[y]
    values = np.clip(tail / tail[x], 0.0, 1.0)
    values[: x + 1] = 1.0
    values[y:] = 0.0

    def V(j):
        return values[np.asarray(j, dtype=int)]

    return V


@dataclass(frozen=True)
class CwAsymptotics:
    """Leading-order Laplace asymptotics of the magnetization chain.

    Capacities and the metastable mass carry the exact partition function
    ``Z_N = sum_m exp(-beta N f_N(m))`` so that they compare directly to
    exact finite-``N`` values.

    Attributes
    ----------
    capacity_saddle : float
        ``C(m-, m0)``.
    capacity_across : float
        ``C(m-, m+)``, half of ``capacity_saddle``.
    metastable_mass : float
        ``mu({m <= m0})``.
    mean_exit : float
        Mean exit time of the metastable well from its restricted law.
    relaxation : float
        Relaxation time ``1/gamma``, twice ``mean_exit``.
    log_Z : float
    """

    capacity_saddle: float
    capacity_across: float
    metastable_mass: float
    mean_exit: float
    relaxation: float
    log_Z: float

    def to_dict(self):
        return dict(self.__dict__)


def cw_asymptotics(spec, N=None):
    """Laplace asymptotics of capacities, metastable mass and time scales.

    Parameters
    ----------
    spec : CurieWeissSpec
    N : int, optional
        Overrides ``spec.N``.
    """
    N = spec.N if N is None else int(N)
    b = spec.beta
    mm, m0 = spec.m_minus, spec.m_zero
    log_Z = float(logsumexp(cw_log_weights(N, b, spec.h)))
    f0, fm = float(spec.f(m0)), float(spec.f(mm))
    k0, km = abs(float(spec.f2(m0))), float(spec.f2(mm))
    log_cap = 0.5 * math.log((1 - m0 * m0) * b * k0) - math.log(math.pi * N) - b * N * f0 - log_Z
    log_mass = -b * N * fm - log_Z - 0.5 * math.log(b * km * (1 - mm * mm))
    log_exit = (math.log(math.pi * N) + b * N * (f0 - fm) - math.log(b)
                - 0.5 * math.log(k0 * km * (1 - m0 * m0) * (1 - mm * mm)))
    return CwAsymptotics(
        capacity_saddle=math.exp(log_cap),
        capacity_across=math.exp(log_cap - math.log(2.0)),
        metastable_mass=math.exp(log_mass),
        mean_exit=math.exp(log_exit),
        relaxation=math.exp(log_exit + math.log(2.0)),
        log_Z=log_Z,
    )


@dataclass(frozen=True)
class CwExact:
    """Exact finite-``N`` counterparts of :class:`CwAsymptotics`.

    ``minus_index``, ``saddle_index`` and ``plus_index`` are the grid
    points used for ``m-`` (nearest), ``m0`` (largest grid point not above
    ``m0``) and ``m+`` (nearest).
    """

    capacity_saddle: float
    capacity_across: float
    metastable_mass: float
    mean_exit: float
    relaxation: float
    minus_index: int
    saddle_index: int
    plus_index: int

    def to_dict(self):
        return dict(self.__dict__)


def cw_exact(spec, chain1d=None, relaxation=True):
    """Exact magnetization-chain values matching :func:`cw_asymptotics`.

    The mean exit time is the ``mu_R``-average of ``E_m[tau_{m > m0}]``
    from :func:`~metastable.chain.mean_hitting_times`.
    """
    if chain1d is None:
        chain1d, _ = build_cw_mag(spec.N, spec.beta, spec.h)
    N = spec.N
    jm = cw_grid_index(N, spec.m_minus)
    j0 = spec.saddle_index
    jp = cw_grid_index(N, spec.m_plus)
    R = np.arange(j0 + 1)
    mu = chain1d.mu
    t = mean_hitting_times(chain1d, np.arange(j0 + 1, N + 1))
    mass = float(mu[R].sum())
    return CwExact(
        capacity_saddle=cw_capacity_1d(chain1d, jm, j0),
        capacity_across=cw_capacity_1d(chain1d, jm, jp),
        metastable_mass=mass,
        mean_exit=float(mu[R] @ t[R]) / mass,
        relaxation=1.0 / spectral_gap(chain1d) if relaxation else math.nan,
        minus_index=jm,
        saddle_index=j0,
        plus_index=jp,
    )
