"""Capacities with dangling edges.

Each state ``a`` of ``A`` is joined to an extra source node by an edge of
conductance ``kappa mu(a)`` and each ``b`` of ``B`` to an extra sink node by
an edge of conductance ``lam mu(b)``.  The capacity between the two extra
nodes is the minimum of

    D(f) + kappa sum_A mu(a) (f(a) - 1)^2 + lam sum_B mu(b) f(b)^2,

and equals the inverse of the minimal energy of a unit flow (Thomson).
An infinite rate pins the potential to 1 on ``A`` (resp. 0 on ``B``); rates
are plain floats and ``math.inf`` is tested with :func:`math.isinf`.
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import splu

from .chain import DENSE_LIMIT, dirichlet_form, mean_hitting_times
from .errors import FlowOffSupport, NotUnitFlow, SingularSystem

RESIDUAL_TOL = 1e-12
FLOW_TOL = 1e-10

__all__ = [
    "Flow",
    "CapacityResult",
    "solve_capacity",
    "thomson_lower_bound",
    "flow_energy",
    "dirichlet_upper_bound",
    "harmonic_measure",
    "exit_identities",
]


@dataclass(frozen=True)
class Flow:
    """A flow on the network extended by dangling edges.

    Attributes
    ----------
    edges : csr_matrix
        Antisymmetric ``psi(x, y)`` on edges of the chain.
    source : ndarray
        Current entering each state from its source dangling edge
        (nonzero only on ``A``).
    sink : ndarray
        Current leaving each state through its sink dangling edge
        (nonzero only on ``B``).
    """

    edges: sp.csr_matrix
    source: np.ndarray
    sink: np.ndarray

    def divergence(self):
        """Net outflow of every state over chain edges."""
        return np.asarray(self.edges.sum(axis=1)).ravel()


@dataclass(frozen=True)
class CapacityResult:
    """Solution of a capacity problem.

    Attributes
    ----------
    value : float
        The capacity, computed from boundary currents.
    potential : ndarray
        Equilibrium potential ``V`` on the states.
    flow : Flow
        Normalized current ``c grad V / value``.
    dirichlet_energy : float
        The variational functional evaluated at ``V``.
    thomson_energy : float
        Energy of ``flow``; its inverse equals ``value``.
    phi_rate : float
        ``value / (mu(A) mu(B))``.
    """

    value: float
    potential: np.ndarray
    flow: Flow
    dirichlet_energy: float
    thomson_energy: float
    phi_rate: float
    kappa: float
    lam: float


def _check_rate(name, r):
    r = float(r)
    if not r > 0:
        raise ValueError(f"{name} must be positive (math.inf allowed)")
    return r


def _solve_spd(m, rhs):
    """Direct SPD solve with iterative refinement and a residual check."""
    n = m.shape[0]
    if n < DENSE_LIMIT:
        dense = m.toarray()
        try:
            fac = cho_factor(dense)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
        solve = lambda b: cho_solve(fac, b)  # noqa: E731
    else:
        try:
            lu = splu(sp.csc_matrix(m))
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc
        solve = lu.solve
    x = solve(rhs)
    scale = max(np.abs(rhs).max(), np.finfo(float).tiny)
    for _ in range(3):
        res = rhs - m @ x
        if np.abs(res).max() <= RESIDUAL_TOL * scale:
            break
        x = x + solve(res)
    else:
        res = rhs - m @ x
        if np.abs(res).max() > RESIDUAL_TOL * scale:
            raise SingularSystem(f"residual {np.abs(res).max():.3g} exceeds tolerance")
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution")
    return x


def _functional(chain, A, B, kappa, lam, f):
    val = dirichlet_form(chain, f)
    mu = chain.mu
    if math.isinf(kappa):
        if np.any(f[A] != 1.0):
            return math.inf
    else:
        val += kappa * float(mu[A] @ (f[A] - 1.0) ** 2)
    if math.isinf(lam):
        if np.any(f[B] != 0.0):
            return math.inf
    else:
        val += lam * float(mu[B] @ f[B] ** 2)
    return val


def flow_energy(chain, A, B, kappa, lam, flow):
    """Energy ``sum psi^2 / c`` of a flow, dangling edges included."""
    c = chain.conductances
    e = sp.coo_matrix(flow.edges)
    upper = e.row < e.col
    cond = np.asarray(c[e.row[upper], e.col[upper]]).ravel()
    psi = e.data[upper]
    if np.any((cond <= 0) & (psi != 0)):
        raise FlowOffSupport("flow uses an edge of zero conductance")
    nz = psi != 0
    energy = float(np.sum(psi[nz] ** 2 / cond[nz]))
    mu = chain.mu
    if not math.isinf(kappa):
        energy += float(np.sum(flow.source[A] ** 2 / (kappa * mu[A])))
    if not math.isinf(lam):
        energy += float(np.sum(flow.sink[B] ** 2 / (lam * mu[B])))
    return energy


def solve_capacity(chain, A, B, kappa=math.inf, lam=math.inf):
    """Capacity between ``A`` and ``B`` with dangling-edge rates ``kappa`` and ``lam``.

    Parameters
    ----------
    chain : ReversibleChain
    A, B : iterable of states
        Nonempty; they may overlap unless both rates are infinite.
    kappa, lam : float
        Positive rates, ``math.inf`` for pinned boundary values.

    Returns
    -------
    CapacityResult

    Examples
    --------
    >>> from metastable import build_chain
    >>> ch = build_chain(["a", "b"], [[0.8, 0.2], [0.3, 0.7]])
    >>> round(solve_capacity(ch, ["a"], ["b"]).value, 12)
    0.12
    """
    kappa = _check_rate("kappa", kappa)
    lam = _check_rate("lam", lam)
    A = chain.index(A)
    B = chain.index(B)
    if A.size == 0 or B.size == 0:
        raise ValueError("A and B must be nonempty")
    n = chain.n
    inA = np.zeros(n, dtype=bool)
    inA[A] = True
    inB = np.zeros(n, dtype=bool)
    inB[B] = True
    if math.isinf(kappa) and math.isinf(lam) and np.any(inA & inB):
        raise ValueError("A and B must be disjoint when both rates are infinite")
    mu = chain.mu
    lap = chain.laplacian
    d = np.zeros(n)
    rhs = np.zeros(n)
    if not math.isinf(kappa):
        d[A] += kappa * mu[A]
        rhs[A] += kappa * mu[A]
    if not math.isinf(lam):
        d[B] += lam * mu[B]
    V = np.zeros(n)
    pinned = np.zeros(n, dtype=bool)
    if math.isinf(kappa):
        pinned[A] = True
        V[A] = 1.0
    if math.isinf(lam):
        pinned[B] = True
        V[B] = 0.0
    free = np.flatnonzero(~pinned)
    fixed = np.flatnonzero(pinned)
    if free.size:
        m = sp.csr_matrix(lap[free][:, free] + sp.diags(d[free]))
        b = rhs[free] - lap[free][:, fixed] @ V[fixed]
        V[free] = _solve_spd(m, b)

    c = sp.coo_matrix(chain.conductances)
    off = c.row != c.col
    cur = c.data[off] * (V[c.row[off]] - V[c.col[off]])
    net = np.bincount(c.row[off], weights=cur, minlength=n)
    if math.isinf(kappa):
        src = np.zeros(n)
        extra = d * V
        src[A] = net[A] + extra[A]
    else:
        src = np.where(inA, kappa * mu * (1.0 - V), 0.0)
    value = float(src.sum())
    if math.isinf(lam):
        snk = np.zeros(n)
        snk[B] = src[B] - net[B]
    else:
        snk = np.where(inB, lam * mu * V, 0.0)
    if not value > 0:
        raise SingularSystem("capacity is not positive")

    psi = cur / value
    edges = sp.csr_matrix((psi, (c.row[off], c.col[off])), shape=(n, n))
    flow = Flow(edges=edges, source=src / value, sink=snk / value)
    energy = flow_energy(chain, A, B, kappa, lam, flow)
    dirichlet = _functional(chain, A, B, kappa, lam, V)
    return CapacityResult(
        value=value,
        potential=V,
        flow=flow,
        dirichlet_energy=dirichlet,
        thomson_energy=energy,
        phi_rate=value / (float(mu[A].sum()) * float(mu[B].sum())),
        kappa=kappa,
        lam=lam,
    )


def _as_flow(chain, A, B, flow):
    if isinstance(flow, Flow):
        return flow
    edges = sp.csr_matrix(flow, dtype=float)
    if edges.shape != (chain.n, chain.n):
        raise ValueError("flow matrix has wrong shape")
    div = np.asarray(edges.sum(axis=1)).ravel()
    src = np.zeros(chain.n)
    snk = np.zeros(chain.n)
    onlyA = np.setdiff1d(A, B)
    onlyB = np.setdiff1d(B, A)
    src[onlyA] = div[onlyA]
    snk[onlyB] = -div[onlyB]
    if np.intersect1d(A, B).size:
        raise ValueError("overlapping A and B need an explicit Flow with dangling currents")
    return Flow(edges=edges, source=src, sink=snk)


def thomson_lower_bound(chain, A, B, kappa, lam, flow):
    """Thomson lower bound on the capacity from a test unit flow.

    Parameters
    ----------
    flow : Flow or matrix
        Either a :class:`Flow` with explicit dangling currents, or an
        antisymmetric edge matrix.  For a bare matrix the dangling currents
        are read off the divergence on ``A`` and ``B`` (disjoint sets only).

    Returns
    -------
    float
        Inverse energy of the flow, a lower bound on the capacity.

    Raises
    ------
    NotUnitFlow
        If conservation fails by more than 1e-10 or the flow is not unit.
    FlowOffSupport
        If the flow uses an edge of zero conductance.
    """
    kappa = _check_rate("kappa", kappa)
    lam = _check_rate("lam", lam)
    A = chain.index(A)
    B = chain.index(B)
    flow = _as_flow(chain, A, B, flow)
    asym = flow.edges + flow.edges.T
    if asym.nnz and np.abs(asym.data).max() > FLOW_TOL:
        raise NotUnitFlow("flow is not antisymmetric")
    n = chain.n
    outside_A = np.ones(n, dtype=bool)
    outside_A[A] = False
    outside_B = np.ones(n, dtype=bool)
    outside_B[B] = False
    if np.any(flow.source[outside_A] != 0) or np.any(flow.sink[outside_B] != 0):
        raise NotUnitFlow("dangling currents outside A or B")
    cons = flow.divergence() - flow.source + flow.sink
    if np.abs(cons).max() > FLOW_TOL:
        raise NotUnitFlow(f"conservation violated by {np.abs(cons).max():.3g}")
    if abs(flow.source.sum() - 1.0) > FLOW_TOL:
        raise NotUnitFlow(f"flow strength is {flow.source.sum()!r}, expected 1")
    return 1.0 / flow_energy(chain, A, B, kappa, lam, flow)


def dirichlet_upper_bound(chain, A, B, kappa, lam, f):
    """Variational functional at a test function ``f`` (an upper bound on the capacity).

    With an infinite rate the corresponding boundary condition is a
    constraint; a test function violating it gives ``inf``.
    """
    kappa = _check_rate("kappa", kappa)
    lam = _check_rate("lam", lam)
    f = np.asarray(f, dtype=float)
    if f.shape != (chain.n,):
        raise ValueError("f must be defined on every state")
    return _functional(chain, chain.index(A), chain.index(B), kappa, lam, f)


def harmonic_measure(chain, R, kappa):
    """Normalized source currents of ``C_kappa(R, X \\ R)``, a probability on ``R``.

    Returns
    -------
    ndarray
        Indexed like the sorted indices of ``R``.
    """
    kappa = _check_rate("kappa", kappa)
    if math.isinf(kappa):
        raise ValueError("kappa must be finite")
    R = chain.index(R)
    comp = np.setdiff1d(np.arange(chain.n), R)
    res = solve_capacity(chain, R, comp, kappa, math.inf)
    return res.flow.source[R]


def exit_identities(chain, R, kappa):
    """Both sides of the exit-time identities tied to ``C_kappa(R, X \\ R)``.

    Returns a dict with keys

    ``mean_potential`` / ``mean_potential_formula``
        ``mu_R(V)`` and ``1 - C / (kappa mu(R))``.
    ``scaled_exit`` / ``scaled_exit_formula``
        ``1 + kappa E_nu[tau]`` and ``kappa mu(R) / C``.
    ``exit_time`` / ``exit_time_formula``
        ``E_nu[tau]`` from hitting times and ``mu(V) / C``.

    Here ``nu`` is the harmonic measure and ``tau`` the exit time of ``R``.
    """
    kappa = _check_rate("kappa", kappa)
    R = chain.index(R)
    comp = np.setdiff1d(np.arange(chain.n), R)
    res = solve_capacity(chain, R, comp, kappa, math.inf)
    mu = chain.mu
    muR = float(mu[R].sum())
    C = res.value
    V = res.potential
    nu = res.flow.source[R]
    t = mean_hitting_times(chain, comp)
    e_nu = float(nu @ t[R])
    return {
        "capacity": C,
        "harmonic_measure": nu,
        "mean_potential": float(mu[R] @ V[R]) / muR,
        "mean_potential_formula": 1.0 - C / (kappa * muR),
        "scaled_exit": 1.0 + kappa * e_nu,
        "scaled_exit_formula": kappa * muR / C,
        "exit_time": e_nu,
        "exit_time_formula": float(mu @ V) / C,
    }
