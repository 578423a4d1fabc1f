"""The wasp graph: two cubes and four squares glued at corners.

A thorax cube ``{0..l_t}^3``, an abdomen cube ``{0..l_a}^3`` and four wing
squares ``{0..l_w}^2`` with ``l = floor(n r)``.  By default the abdomen
origin is glued to the thorax corner ``(l_t, l_t, l_t)`` and the wing
origins to the thorax corners ``(0, 0, 0)``, ``(0, l_t, 0)``,
``(0, 0, l_t)`` and ``(0, l_t, l_t)``; both placements can be overridden.
The walk jumps along each edge at rate ``alpha`` and the missing mass is a
self-loop, so the kernel is symmetric and the stationary law uniform.

State names: ``t:x,y,z`` (thorax, glued corners included),
``a:x,y,z`` and ``w<i>:x,y``.
"""
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..capacity import Flow
from ..chain import build_chain
from ..errors import BadGeometry

__all__ = [
    "WaspSpec",
    "build_wasp",
    "lattice_chain",
    "wasp_radial_flow",
    "wasp_thorax_flow",
    "wasp_log_potential",
    "log_potential_checks",
    "cube_gap_bound",
]


@dataclass(frozen=True)
class WaspSpec:
    """Geometry and partition of a wasp graph.

    Attributes
    ----------
    l_a, l_t, l_w : int
        Cube and square side lengths.
    thorax : list of str
        ``R_t``, the whole thorax cube.
    abdomen : list of str
        ``R_a``, the abdomen cube without its glued corner.
    wings : list of list of str
        ``R_1 .. R_4``, each wing without its glued corner (empty when
        ``l_w = 0``).
    """

    r_a: float
    r_t: float
    r_w: float
    n: int
    alpha: float
    l_a: int
    l_t: int
    l_w: int
    abdomen_corner: tuple
    wing_corners: tuple
    thorax: list = field(repr=False)
    abdomen: list = field(repr=False)
    wings: list = field(repr=False)

    @property
    def body(self):
        """``X_b = R_t + R_a``."""
        return self.thorax + self.abdomen

    @property
    def front(self):
        """``R = R_t + R_1 + .. + R_4``."""
        return self.thorax + [s for w in self.wings for s in w]

    def partition(self):
        """Nonempty blocks among thorax, abdomen and wings."""
        return [b for b in [self.thorax, self.abdomen, *self.wings] if b]


def _name(tag, c):
    return f"{tag}:" + ",".join(str(int(v)) for v in c)


def _lattice_edges(side, dim):
    pts = list(itertools.product(range(side + 1), repeat=dim))
    edges = []
    for c in pts:
        for i in range(dim):
            if c[i] < side:
                d = list(c)
                d[i] += 1
                edges.append((c, tuple(d)))
    return pts, edges


def _assemble(names, edges, alpha):
    index = {s: k for k, s in enumerate(names)}
    n = len(names)
    i = np.array([index[a] for a, b in edges])
    j = np.array([index[b] for a, b in edges])
    adj = sp.csr_matrix((np.ones(2 * i.size), (np.r_[i, j], np.r_[j, i])), shape=(n, n))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    if alpha * deg.max() > 1:
        raise BadGeometry(f"alpha={alpha} times max degree {deg.max():.0f} exceeds 1")
    p = (alpha * adj + sp.diags(1.0 - alpha * deg)).tocsr()
    return build_chain(names, p, np.full(n, 1.0 / n))


def lattice_chain(side, dim, alpha):
    """Rate-``alpha`` walk on ``{0..side}^dim``; states named ``x,y,..``."""
    if side < 1 or dim < 1:
        raise BadGeometry("side and dim must be positive")
    pts, edges = _lattice_edges(side, dim)
    name = {c: ",".join(map(str, c)) for c in pts}
    return _assemble([name[c] for c in pts], [(name[a], name[b]) for a, b in edges], alpha)


def build_wasp(r_a, r_t, r_w, n, alpha=1.0 / 6, abdomen_corner=None, wing_corners=None):
    """Wasp graph walk and its partition.

    Parameters
    ----------
    r_a, r_t, r_w : float
        Size ratios; ``r_w = 0`` gives the body only.
    n : int
        Scale, at least 2.
    alpha : float
        Jump rate per edge, at most 1/6.
    abdomen_corner, wing_corners : optional
        Thorax corners where the abdomen origin and the wing origins are
        glued.

    Returns
    -------
    chain : ReversibleChain
    spec : WaspSpec

    Raises
    ------
    BadGeometry
        Degenerate cubes, ``alpha`` out of range, gluing points that are not
        distinct thorax corners, or a vertex whose degree times ``alpha``
        exceeds one.

    Examples
    --------
    >>> chain, spec = build_wasp(1, 1, 0, 2)
    >>> chain.n == 2 * 3 ** 3 - 1
    True
    """
    n = int(n)
    if n < 2:
        raise BadGeometry("n must be at least 2")
    if not 0 < alpha <= 1.0 / 6:
        raise BadGeometry("alpha must lie in (0, 1/6]")
    l_a, l_t, l_w = (math.floor(n * r) for r in (r_a, r_t, r_w))
    if l_a < 1 or l_t < 1 or l_w < 0:
        raise BadGeometry("thorax and abdomen need side at least 1")
    corners = set(itertools.product((0, l_t), repeat=3))
    ac = tuple(abdomen_corner) if abdomen_corner is not None else (l_t, l_t, l_t)
    wc = tuple(tuple(c) for c in wing_corners) if wing_corners is not None else (
        (0, 0, 0), (0, l_t, 0), (0, 0, l_t), (0, l_t, l_t))
    glued = [ac, *wc] if l_w else [ac]
    if any(c not in corners for c in glued) or len(set(glued)) != len(glued):
        raise BadGeometry("gluing points must be distinct thorax corners")

    pts, edges = _lattice_edges(l_t, 3)
    thorax = [_name("t", c) for c in pts]
    all_edges = [(_name("t", a), _name("t", b)) for a, b in edges]

    def part(tag, side, dim, corner):
        ps, es = _lattice_edges(side, dim)
        origin = (0,) * dim

        def nm(c):
            return _name("t", corner) if c == origin else _name(tag, c)

        return [nm(c) for c in ps if c != origin], [(nm(a), nm(b)) for a, b in es]

    abdomen, ea = part("a", l_a, 3, ac)
    all_edges += ea
    wings = [[], [], [], []]
    if l_w:
        for k, c in enumerate(wc):
            wings[k], ew = part(f"w{k + 1}", l_w, 2, c)
            all_edges += ew
    names = thorax + abdomen + [s for w in wings for s in w]
    chain = _assemble(names, all_edges, alpha)
    spec = WaspSpec(r_a, r_t, r_w, n, alpha, l_a, l_t, l_w, ac, wc, thorax, abdomen, wings)
    return chain, spec


def _voxel_paths(Q):
    """Edge traversal counts of the lattice paths approximating ``[0, Q]``.

    Each path steps through the unit cells crossed by the segment, from the
    cell at the origin to the cell holding ``Q``; it is coordinate
    non-decreasing, hence a shortest lattice path.

    Returns
    -------
    steps : list of (cells, axis) arrays, one per step index
    ends : ndarray of int, shape (paths, dim)
    """
    n, dim = Q.shape
    ends = np.floor(Q).astype(int)
    inc = 1.0 / Q
    tmax = inc.copy()
    cell = np.zeros((n, dim), dtype=int)
    length = ends.sum(axis=1)
    steps = []
    for k in range(int(length.max()) if n else 0):
        active = length > k
        axis = np.argmin(tmax, axis=1)
        rows = np.flatnonzero(active)
        steps.append((cell[rows].copy(), axis[rows]))
        cell[rows, axis[rows]] += 1
        tmax[rows, axis[rows]] += inc[rows, axis[rows]]
    return steps, ends


def wasp_radial_flow(side, rng, n_paths, dim=3):
    """Mean of random radial lattice-path flows out of the corner of a cube.

    A point ``Q`` is drawn uniformly in the positive-orthant part of the
    ball of radius ``1 + side``; the path follows the unit cells crossed by
    ``[0, Q]`` and ends at the lower corner of the cell holding ``Q``.
    The returned flow is the empirical mean over ``n_paths`` paths: a unit
    source at the origin, edge currents equal to traversal frequencies and
    sinks at the path ends.

    Returns
    -------
    chain : ReversibleChain
        :func:`lattice_chain` ``(side, dim, 1/(2 dim))``; its states index
        the flow.
    flow : Flow
        Usable in :func:`~metastable.capacity.thomson_lower_bound` with
        ``A`` the origin and ``B`` the whole lattice.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    rng = np.random.default_rng(rng)
    g = np.abs(rng.standard_normal((n_paths, dim)))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radius = (1 + side) * rng.random(n_paths) ** (1.0 / dim)
    Q = g * radius[:, None]
    Q = np.minimum(Q, np.nextafter(side + 1.0, 0))
    steps, ends = _voxel_paths(Q)
    shape = (side + 1,) * dim
    chain = lattice_chain(side, dim, 1.0 / (2 * dim))
    N = chain.n
    rows, cols, vals = [], [], []
    for cells, axis in steps:
        src = np.ravel_multi_index(cells.T, shape)
        nxt = cells.copy()
        nxt[np.arange(len(axis)), axis] += 1
        dst = np.ravel_multi_index(nxt.T, shape)
        rows += [src, dst]
        cols += [dst, src]
        vals += [np.ones(src.size), -np.ones(src.size)]
    if rows:
        edges = sp.csr_matrix((np.concatenate(vals) / n_paths, (np.concatenate(rows), np.concatenate(cols))),
                              shape=(N, N))
    else:
        edges = sp.csr_matrix((N, N))
    sink = np.bincount(np.ravel_multi_index(ends.T, shape), minlength=N) / n_paths
    source = np.zeros(N)
    source[0] = 1.0
    return chain, Flow(edges=edges, source=source, sink=sink)


def wasp_thorax_flow(chain, spec, rng, n_paths):
    """Unit flow from the thorax to the abdomen built from radial paths.

    Sources spread over the thorax by the radial construction centred at
    the abdomen junction; the current then leaves the junction corner in
    equal thirds through its three abdomen edges.  Use with ``A`` the
    thorax, ``B`` the abdomen and an infinite rate on ``B``.
    """
    l_t = spec.l_t
    _, radial = wasp_radial_flow(l_t, rng, n_paths, 3)
    shape = (l_t + 1,) * 3
    ac = np.array(spec.abdomen_corner)
    sign = np.where(ac > 0, -1, 1)

    def to_chain(flat):
        local = np.array(np.unravel_index(flat, shape)).T
        glob = ac + sign * local
        return np.array([chain._index[_name("t", c)] for c in glob])

    n = chain.n
    coo = radial.edges.tocoo()
    perm = to_chain(np.arange(np.prod(shape)))
    rows = perm[coo.row]
    cols = perm[coo.col]
    # reverse the radial flow: it now converges on the junction corner
    vals = -coo.data
    corner = chain.index([_name("t", spec.abdomen_corner)])[0]
    nbrs = chain.index([_name("a", e) for e in np.eye(3, dtype=int)])
    rows = np.r_[rows, np.full(3, corner), nbrs]
    cols = np.r_[cols, nbrs, np.full(3, corner)]
    vals = np.r_[vals, np.full(3, 1 / 3), np.full(3, -1 / 3)]
    edges = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    source = np.zeros(n)
    source[perm] = radial.sink
    sink = np.zeros(n)
    sink[nbrs] = 1 / 3
    return Flow(edges=edges, source=source, sink=sink)


def wasp_log_potential(side):
    """Test function ``V(x) = ln(1 + |x|_inf) / (1 + ln side)`` on a wing.

    ``V`` vanishes at the glued corner and increases logarithmically with
    the sup-norm shell index.

    Returns
    -------
    callable
        ``V(coords)`` for an array of shape ``(..., 2)``.
    """
    if side < 2:
        raise ValueError("side must be at least 2")
    scale = 1.0 + math.log(side)

    def V(x):
        x = np.asarray(x, dtype=float)
        return np.log1p(np.abs(x).max(axis=-1)) / scale

    return V


def log_potential_checks(side, alpha):
    """Dirichlet form, second moment and escape-rate bound of the log potential.

    The walk is the uniform rate-``alpha`` walk on ``{0..side}^2``;
    ``dirichlet`` and ``second_moment`` are summed directly over edges and
    points.  Returns a dict with ``dirichlet``, ``dirichlet_budget``
    (``2 alpha / ((1 + ln l)(1 + l)^2)``), ``second_moment``,
    ``escape_bound`` (``6 alpha / ((1 + l)^2 (1 + ln l))``) and
    ``variational`` (``dirichlet / second_moment``).
    """
    V = wasp_log_potential(side)
    pts = np.array(list(itertools.product(range(side + 1), repeat=2)))
    n = len(pts)
    v = V(pts).reshape(side + 1, side + 1)
    c = alpha / n
    d = c * (np.sum(np.diff(v, axis=0) ** 2) + np.sum(np.diff(v, axis=1) ** 2))
    m2 = float(np.mean(v ** 2))
    lg = 1.0 + math.log(side)
    return {
        "dirichlet": float(d),
        "dirichlet_budget": 2 * alpha / (lg * (1 + side) ** 2),
        "second_moment": m2,
        "escape_bound": 6 * alpha / ((1 + side) ** 2 * lg),
        "variational": float(d) / m2,
    }


def cube_gap_bound(side, dim, alpha):
    """Coupling bound ``dim side (side + 1) e / (2 alpha)`` on the lattice relaxation time."""
    return dim * side * (side + 1) * math.e / (2 * alpha)
