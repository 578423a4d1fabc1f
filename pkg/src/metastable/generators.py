"""Small reversible test chains: two-state, paths, double wells and random networks."""
import numpy as np

from .chain import build_chain, restrict
from .errors import NotIrreducibleRestricted

__all__ = ["two_state", "birth_death", "two_well", "random_reversible", "random_subset", "complete_uniform"]


def _names(n):
    return [f"s{i}" for i in range(n)]


def two_state(q=0.2, r=0.3):
    """Chain on ``{a, b}`` with ``p(a, b) = q`` and ``p(b, a) = r``."""
    return build_chain(["a", "b"], [[1 - q, q], [r, 1 - r]])


def complete_uniform(n):
    """``p(x, y) = 1/n`` for all ``x, y``."""
    return build_chain(_names(n), np.full((n, n), 1.0 / n))


def birth_death(energy, rate=0.5):
    """Metropolis birth-death chain on a path with stationary law ``exp(-energy)``.

    ``p(i, i +- 1) = rate * min(1, exp(energy[i] - energy[i +- 1]))``; the
    remaining mass is a self-loop, so ``rate <= 1/2`` keeps rows valid.
    """
    e = np.asarray(energy, dtype=float)
    n = e.size
    p = np.zeros((n, n))
    for i in range(n - 1):
        p[i, i + 1] = rate * min(1.0, np.exp(e[i] - e[i + 1]))
        p[i + 1, i] = rate * min(1.0, np.exp(e[i + 1] - e[i]))
    for i in range(n):
        p[i, i] = 1.0 - p[i].sum()
    mu = np.exp(-(e - e.min()))
    return build_chain(_names(n), p, mu / mu.sum())


def two_well(n=8, barrier=4.0, tilt=0.5, rate=0.5):
    """Birth-death double well with a barrier between two valleys.

    The left valley holds states ``0 .. n//2 - 1`` and is raised by
    ``tilt`` so that it carries less than half the mass.

    Returns
    -------
    chain : ReversibleChain
    R : list of str
        The left valley.
    """
    x = np.linspace(-1.0, 1.0, n)
    energy = barrier * (1.0 - x * x) ** 2 + tilt * (x < 0)
    chain = birth_death(energy, rate)
    return chain, [f"s{i}" for i in range(n // 2)]


def random_reversible(n, rng, density=0.3, loop=(0.05, 0.5)):
    """Random irreducible reversible chain with positive self-loops.

    A random spanning tree guarantees connectivity; extra edges are added
    with probability ``density``.  Conductances are uniform on (0.1, 1),
    the stationary law is random and the kernel is scaled so that every
    self-loop lies in ``loop``-ish proportions.
    """
    rng = np.random.default_rng(rng)
    w = np.zeros((n, n))
    order = rng.permutation(n)
    for k in range(1, n):
        a, b = order[k], order[rng.integers(k)]
        w[a, b] = w[b, a] = rng.uniform(0.1, 1.0)
    extra = np.triu(rng.random((n, n)) < density, 1)
    vals = rng.uniform(0.1, 1.0, (n, n))
    w = np.where(extra & (w == 0), np.triu(vals, 1), w)
    w = np.maximum(w, w.T)
    mu = rng.uniform(0.2, 1.0, n)
    mu /= mu.sum()
    out = w.sum(axis=1)
    s = rng.uniform(1 - loop[1], 1 - loop[0]) * np.min(mu / out)
    p = s * w / mu[:, None]
    p[np.diag_indices(n)] = 1.0 - p.sum(axis=1)
    return build_chain(_names(n), p, mu)


def random_subset(chain, rng, size=None, tries=200):
    """Random connected ``R`` whose complement is also internally connected.

    Grows ``R`` from a random seed by adding random neighbours.
    """
    rng = np.random.default_rng(rng)
    n = chain.n
    adj = chain.conductances.tolil().rows
    for _ in range(tries):
        k = int(size) if size else int(rng.integers(1, n))
        R = {int(rng.integers(n))}
        while len(R) < k:
            border = sorted({y for x in R for y in adj[x] if y not in R})
            if not border:
                break
            R.add(int(rng.choice(border)))
        R = sorted(R)
        try:
            restrict(chain, R)
        except NotIrreducibleRestricted:
            continue
        return R
    raise NotIrreducibleRestricted("no admissible subset found")
