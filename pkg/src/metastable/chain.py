"""Reversible Markov chains on finite state spaces.

The continuous-time process jumps at the rings of a rate-one Poisson clock
according to a stochastic kernel ``p``.  Self-loops are allowed, so the
generator is ``L = p - I`` and the escape rate of a state ``x`` is
``1 - p(x, x)``.

Numerical convention: every diagonal of ``I - p`` (or of a restricted
version of it) is computed as a sum of off-diagonal entries rather than as
``1 - p(x, x)``.  This keeps small rates accurate to relative precision,
which matters for strongly metastable chains.
"""
import json
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .errors import NonStochastic, NotIrreducible, NotIrreducibleRestricted, NotReversible, SingularSystem

ROW_TOL = 1e-12
BALANCE_TOL = 1e-9
DENSE_LIMIT = 2000

__all__ = [
    "ReversibleChain",
    "SubsetContext",
    "build_chain",
    "restrict",
    "dirichlet_form",
    "dirichlet_form_restricted",
    "mean_hitting_times",
    "negative_generator",
    "solve_killed",
    "chain_from_json",
    "chain_to_json",
    "load_chain",
    "save_chain",
]


def _offdiag(m):
    m = sp.csr_matrix(m, copy=True)
    m.setdiag(0.0)
    m.eliminate_zeros()
    return m


def negative_generator(kernel):
    """Return ``I - p`` as a sparse matrix with a cancellation-free diagonal.

    Parameters
    ----------
    kernel : sparse matrix, shape (n, n)
        Stochastic or sub-stochastic kernel.  For a sub-stochastic kernel
        the missing row mass is treated as killing and must be added to the
        diagonal by the caller.

    Returns
    -------
    scipy.sparse.csr_matrix
        Off-diagonal entries ``-p(x, y)`` and diagonal ``sum_{y != x} p(x, y)``.
    """
    off = _offdiag(kernel)
    q = np.asarray(off.sum(axis=1)).ravel()
    return (sp.diags(q) - off).tocsr()


class ReversibleChain:
    """A reversible chain with kernel ``p`` and stationary measure ``mu``.

    Use :func:`build_chain` to construct instances; the constructor does not
    validate its input.  Instances are treated as immutable.

    Attributes
    ----------
    states : tuple of str
        Ordered state identifiers.
    kernel : scipy.sparse.csr_matrix
        One-step probabilities ``p(x, y)``.
    mu : ndarray
        Stationary probability vector.
    """

    def __init__(self, states, kernel, mu):
        self.states = tuple(states)
        self.kernel = sp.csr_matrix(kernel)
        mu = np.array(mu, dtype=float)
        mu.setflags(write=False)
        self.mu = mu
        self._index = {s: i for i, s in enumerate(self.states)}

    def __repr__(self):
        return f"ReversibleChain(n={self.n})"

    @property
    def n(self):
        return len(self.states)

    @cached_property
    def conductances(self):
        """Symmetric conductances ``c(x, y) = mu(x) p(x, y)``, diagonal included."""
        c = sp.diags(self.mu) @ self.kernel
        c = 0.5 * (c + c.T)
        return sp.csr_matrix(c)

    @cached_property
    def jump_rates(self):
        """``q(x) = sum_{y != x} p(x, y)``, the rate of leaving ``x``."""
        q = np.asarray(_offdiag(self.kernel).sum(axis=1)).ravel()
        q.setflags(write=False)
        return q

    @cached_property
    def laplacian(self):
        """Conductance Laplacian ``diag(mu) (I - p)``, symmetrized."""
        off = _offdiag(self.conductances)
        d = np.asarray(off.sum(axis=1)).ravel()
        return (sp.diags(d) - off).tocsr()

    def dense_kernel(self):
        return self.kernel.toarray()

    def index(self, subset):
        """Convert a subset to a sorted array of state indices.

        ``subset`` may hold state identifiers (str), integer indices, or be
        a boolean mask of length ``n``.
        """
        if isinstance(subset, np.ndarray) and subset.dtype == bool:
            if subset.shape != (self.n,):
                raise ValueError("boolean mask has wrong length")
            return np.flatnonzero(subset)
        items = list(subset)
        idx = []
        for s in items:
            if isinstance(s, str):
                if s not in self._index:
                    raise KeyError(f"unknown state {s!r}")
                idx.append(self._index[s])
            else:
                i = int(s)
                if not 0 <= i < self.n:
                    raise IndexError(f"state index {i} out of range")
                idx.append(i)
        return np.unique(np.asarray(idx, dtype=int))

    def mask(self, subset):
        m = np.zeros(self.n, dtype=bool)
        m[self.index(subset)] = True
        return m


def _gth_stationary(p):
    # Grassmann-Taksar-Heyman state reduction: no subtractions anywhere
    a = p.copy()
    np.fill_diagonal(a, 0.0)
    n = a.shape[0]
    for k in range(n - 1, 0, -1):
        s = a[k, :k].sum()
        a[:k, k] /= s
        a[:k, :k] += np.outer(a[:k, k], a[k, :k])
    x = np.zeros(n)
    x[0] = 1.0
    for k in range(1, n):
        x[k] = x[:k] @ a[:k, k]
    return x / x.sum()


def _stationary(kernel):
    n = kernel.shape[0]
    if n == 1:
        return np.ones(1)
    coo = _offdiag(kernel).tocoo()
    if np.abs(coo.row - coo.col).max() <= 1:
        # birth-death: product of ratios, accumulated in log space
        csr = kernel.tocsr()
        with np.errstate(divide="ignore"):
            logr = np.log(csr.diagonal(1)) - np.log(csr.diagonal(-1))
        logmu = np.r_[0.0, np.cumsum(logr)]
        mu = np.exp(logmu - logmu.max())
        return mu / mu.sum()
    if n <= GTH_DENSE_LIMIT:
        return _gth_stationary(kernel.toarray())
    a = (kernel.T - sp.identity(n)).tolil()
    a[n - 1, :] = np.ones(n)
    b = np.zeros(n)
    b[-1] = 1.0
    if n < DENSE_LIMIT:
        mu = np.linalg.solve(a.toarray(), b)
    else:
        mu = splu(a.tocsc()).solve(b)
    return mu


def _is_irreducible(kernel):
    off = _offdiag(kernel)
    if kernel.shape[0] == 1:
        return True
    ncomp, _ = connected_components(off, directed=True, connection="strong")
    return ncomp == 1


def build_chain(states, kernel, mu=None):
    """Validate a kernel and return a :class:`ReversibleChain`.

    Parameters
    ----------
    states : sequence of str
        Distinct state identifiers.
    kernel : array_like or sparse matrix, shape (n, n)
        Nonnegative stochastic matrix.
    mu : array_like, optional
        Stationary measure.  When omitted it is obtained from the linear
        system ``(p^T - I) mu = 0`` with one row replaced by the
        normalization.  A supplied measure is rescaled to total mass one
        unless it already sums to one within 1e-13 (so that a serialized
        chain reloads bit for bit).

    Raises
    ------
    NonStochastic
        Negative entries or a row sum away from one by more than 1e-12.
    NotIrreducible
        Disconnected off-diagonal support.
    NotReversible
        Detailed balance violated by more than 1e-9.

    Examples
    --------
    >>> ch = build_chain(["a", "b"], [[0.8, 0.2], [0.3, 0.7]])
    >>> ch.mu
    array([0.6, 0.4])
    """
    states = [str(s) for s in states]
    if len(set(states)) != len(states):
        raise ValueError("state identifiers must be distinct")
    p = sp.csr_matrix(kernel, dtype=float)
    n = len(states)
    if p.shape != (n, n):
        raise ValueError(f"kernel shape {p.shape} does not match {n} states")
    if n == 0:
        raise ValueError("empty state space")
    if p.nnz and p.data.min() < 0:
        raise NonStochastic("kernel has negative entries")
    rows = np.asarray(p.sum(axis=1)).ravel()
    bad = np.abs(rows - 1.0) > ROW_TOL
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NonStochastic(f"row {states[i]!r} sums to {rows[i]!r}")
    if not _is_irreducible(p):
        raise NotIrreducible("off-diagonal support is not connected")
    if mu is None:
        mu = _stationary(p)
    mu = np.asarray(mu, dtype=float).ravel()
    if mu.shape != (n,):
        raise ValueError("mu has wrong length")
    if not np.all(mu > 0):
        raise NotReversible("stationary measure must be positive")
    if abs(mu.sum() - 1.0) > 1e-13:
        mu = mu / mu.sum()
    flux = sp.diags(mu) @ p
    diff = flux - flux.T
    if diff.nnz and np.abs(diff.data).max() > BALANCE_TOL:
        raise NotReversible(f"detailed balance violated by {np.abs(diff.data).max():.3g}")
    return ReversibleChain(states, p, mu)


class SubsetContext:
    """A proper subset ``R`` together with its restricted objects.

    Attributes
    ----------
    chain : ReversibleChain
    R, complement : ndarray of int
        Sorted state indices of ``R`` and of its complement.
    mu_R : ndarray
        Restricted ensemble ``mu(. | R)`` in the order of ``R``.
    escape : ndarray
        ``e_R(x) = sum_{y not in R} p(x, y)``.
    killed_kernel : csr_matrix
        ``p`` restricted to ``R x R`` (sub-stochastic).
    reflected_kernel : csr_matrix
        ``killed_kernel + diag(escape)``.
    reflected_chain, complement_chain : ReversibleChain
        Reflected chains on ``R`` and on its complement.
    internal_border : ndarray of int
        Indices (into the full chain) of states of ``R`` with a positive
        jump probability out of ``R``.
    """

    def __init__(self, chain, R):
        n = chain.n
        R = chain.index(R)
        if R.size == 0 or R.size == n:
            raise ValueError("R must be a nonempty proper subset")
        comp = np.setdiff1d(np.arange(n), R)
        self.chain = chain
        self.R = R
        self.complement = comp
        self.mu_mass = float(chain.mu[R].sum())
        self.mu_R = chain.mu[R] / self.mu_mass
        p = chain.kernel
        rows = p[R]
        self.killed_kernel = sp.csr_matrix(rows[:, R])
        self.escape = np.asarray(rows[:, comp].sum(axis=1)).ravel()
        self.reflected_kernel = sp.csr_matrix(self.killed_kernel + sp.diags(self.escape))
        self.internal_border = R[self.escape > 0]
        self.reflected_chain = _reflected(chain, R)
        self.complement_chain = _reflected(chain, comp)

    def __repr__(self):
        return f"SubsetContext(|R|={self.R.size}, n={self.chain.n})"

    @property
    def states_R(self):
        return [self.chain.states[i] for i in self.R]

    @property
    def phi_R(self):
        """Mean escape probability ``mu_R(e_R)``."""
        return float(self.mu_R @ self.escape)

    def complement_context(self):
        """The context of ``X \\ R`` in the same chain."""
        return SubsetContext(self.chain, self.complement)


def _reflected(chain, idx):
    p = chain.kernel
    rest = np.setdiff1d(np.arange(chain.n), idx)
    block = sp.csr_matrix(p[idx][:, idx])
    out = np.asarray(p[idx][:, rest].sum(axis=1)).ravel()
    refl = sp.csr_matrix(block + sp.diags(out))
    mu = chain.mu[idx] / chain.mu[idx].sum()
    states = [chain.states[i] for i in idx]
    try:
        return build_chain(states, refl, mu)
    except NotIrreducible as exc:
        raise NotIrreducibleRestricted(f"reflected chain on {len(idx)} states is reducible") from exc


def restrict(chain, R):
    """Build the :class:`SubsetContext` of ``R``.

    Raises
    ------
    ValueError
        If ``R`` is empty or the whole state space.
    NotIrreducibleRestricted
        If the reflected chain on ``R`` or on its complement is reducible.
    """
    return SubsetContext(chain, R)


def _form(cond, f):
    c = sp.coo_matrix(cond)
    off = c.row != c.col
    d = f[c.row[off]] - f[c.col[off]]
    return 0.5 * float(np.sum(c.data[off] * d * d))


def dirichlet_form(chain, f):
    """Dirichlet form ``1/2 sum c(x, y) (f(x) - f(y))^2``.

    Examples
    --------
    >>> ch = build_chain(["a", "b"], [[0.8, 0.2], [0.3, 0.7]])
    >>> round(dirichlet_form(ch, [1.0, 0.0]), 12)
    0.12
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (chain.n,):
        raise ValueError("f must be defined on every state")
    return _form(chain.conductances, f)


def dirichlet_form_restricted(ctx, f):
    """Dirichlet form of the reflected chain on ``R`` (weights ``mu_R``)."""
    f = np.asarray(f, dtype=float)
    if f.shape != (ctx.R.size,):
        raise ValueError("f must be defined on R")
    return _form(ctx.reflected_chain.conductances, f)


GTH_DENSE_LIMIT = 400


def _gth_tridiagonal(lo, up, out, b):
    """Solve ``(D - O) u = b`` for a path graph without subtractions.

    ``lo[i] = O(i, i-1)``, ``up[i] = O(i, i+1)``, ``out[i] >= 0`` is the rate
    of leaving the system and ``D`` the row sums of ``O`` plus ``out``.
    States are eliminated left to right; each elimination folds the left
    neighbour's exit probability into ``out`` (Grassmann-Taksar-Heyman
    style), so every operation is on nonnegative numbers.
    """
    m = b.size
    d = np.empty(m)
    rhs = b.astype(float).copy()
    ex = out.astype(float).copy()
    for k in range(m):
        if k:
            ex[k] += lo[k] * ex[k - 1] / d[k - 1]
            rhs[k] += lo[k] * rhs[k - 1] / d[k - 1]
        d[k] = ex[k] + (up[k] if k < m - 1 else 0.0)
    u = np.empty(m)
    u[-1] = rhs[-1] / d[-1]
    for k in range(m - 2, -1, -1):
        u[k] = (rhs[k] + up[k] * u[k + 1]) / d[k]
    return u


def _gth_dense(o, out, b):
    """Dense version of :func:`_gth_tridiagonal` for a general nonnegative ``O``."""
    o = np.array(o, dtype=float)
    np.fill_diagonal(o, 0.0)
    ex = out.astype(float).copy()
    rhs = b.astype(float).copy()
    m = rhs.size
    d = np.empty(m)
    for k in range(m - 1, -1, -1):
        d[k] = o[k, :k].sum() + ex[k]
        if k == 0:
            break
        w = o[:k, k] / d[k]
        o[:k, :k] += np.outer(w, o[k, :k])
        ex[:k] += w * ex[k]
        rhs[:k] += w * rhs[k]
        o[np.arange(k), np.arange(k)] = 0.0
    u = np.empty(m)
    for k in range(m):
        u[k] = (rhs[k] + o[k, :k] @ u[:k]) / d[k]
    return u


def solve_killed(off, out, b):
    """Solve ``(D - O) u = b`` with ``D = rowsum(O) + out``.

    ``O`` holds nonnegative off-diagonal rates and ``out >= 0`` the rates
    of leaving the system.  Tridiagonal systems and systems of at most 400
    unknowns are solved by subtraction-free elimination, which for
    ``b >= 0`` keeps full relative accuracy however ill-conditioned the
    system (mean exit times of order 1e30 are typical for metastable
    chains).  Larger systems use a sparse LU factorization.

    Raises
    ------
    SingularSystem
        If the system is singular (no way out from some class of states).
    """
    o = _offdiag(off)
    m = b.size
    out = np.asarray(out, dtype=float)
    coo = o.tocoo()
    if m == 1:
        sol = b / out
    elif coo.nnz == 0 or np.abs(coo.row - coo.col).max() <= 1:
        dense = o.tocsr()
        lo = np.r_[0.0, dense.diagonal(-1)]
        up = np.r_[dense.diagonal(1), 0.0]
        with np.errstate(divide="ignore", invalid="ignore"):
            sol = _gth_tridiagonal(lo, up, out, b)
    elif m <= GTH_DENSE_LIMIT:
        with np.errstate(divide="ignore", invalid="ignore"):
            sol = _gth_dense(o.toarray(), out, b)
    else:
        q = np.asarray(o.sum(axis=1)).ravel() + out
        a = sp.diags(q) - o
        try:
            sol = splu(sp.csc_matrix(a)).solve(b.astype(float))
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularSystem("system is singular")
    return sol


def mean_hitting_times(chain, B):
    """Expected hitting times ``E_x[tau_B]`` for every state.

    Solves ``(I - p) u = 1`` off ``B`` with ``u = 0`` on ``B`` (rate-one
    clock, so one ring takes unit mean time) with :func:`solve_killed`.

    Returns
    -------
    ndarray, shape (n,)
        Zero on ``B``.
    """
    B = chain.index(B)
    if B.size == 0:
        raise ValueError("B must be nonempty")
    u = np.zeros(chain.n)
    free = np.setdiff1d(np.arange(chain.n), B)
    if free.size == 0:
        return u
    p = chain.kernel
    block = sp.csr_matrix(p[free][:, free])
    out = np.asarray(p[free][:, B].sum(axis=1)).ravel()
    u[free] = solve_killed(block, out, np.ones(free.size))
    return u


def chain_from_json(doc):
    """Parse the chain document format.

    The document is a mapping with keys ``states``, ``edges`` (a list of
    ``{"from", "to", "p"}``), optional ``mu`` and optional ``R``.  Rows
    without an explicit self-loop receive the missing mass on the diagonal.

    Returns
    -------
    chain : ReversibleChain
    R : list of str or None
    """
    states = [str(s) for s in doc["states"]]
    index = {s: i for i, s in enumerate(states)}
    n = len(states)
    rows, cols, vals = [], [], []
    has_loop = np.zeros(n, dtype=bool)
    for e in doc.get("edges", []):
        i, j = index[str(e["from"])], index[str(e["to"])]
        rows.append(i)
        cols.append(j)
        vals.append(float(e["p"]))
        if i == j:
            has_loop[i] = True
    p = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    fill = 1.0 - np.asarray(p.sum(axis=1)).ravel()
    for i in np.flatnonzero(~has_loop):
        if fill[i] < -ROW_TOL:
            raise NonStochastic(f"row {states[i]!r} sums to {1.0 - fill[i]!r}")
        fill[i] = max(fill[i], 0.0)
    fill[has_loop] = 0.0
    p = sp.csr_matrix(p + sp.diags(fill))
    chain = build_chain(states, p, doc.get("mu"))
    R = doc.get("R")
    return chain, (None if R is None else [str(s) for s in R])


def chain_to_json(chain, R=None):
    """Serialize a chain (self-loops written explicitly, so a round trip is exact)."""
    p = sp.coo_matrix(chain.kernel)
    edges = [
        {"from": chain.states[i], "to": chain.states[j], "p": float(v)}
        for i, j, v in sorted(zip(p.row.tolist(), p.col.tolist(), p.data.tolist()))
        if v != 0.0
    ]
    doc = {"states": list(chain.states), "edges": edges, "mu": [float(m) for m in chain.mu]}
    if R is not None:
        doc["R"] = [chain.states[i] for i in chain.index(R)]
    return doc


def load_chain(path):
    with open(path, encoding="utf-8") as fh:
        return chain_from_json(json.load(fh))


def save_chain(path, chain, R=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(chain_to_json(chain, R), fh, indent=1)
        fh.write("\n")
