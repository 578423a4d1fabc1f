"""Continuous-time Monte Carlo with a rate-one clock.

Each trajectory owns an independent random stream: trajectory ``i`` of a
run seeded with ``seed`` draws from
``Philox(SeedSequence(seed, spawn_key=(i,)))``, so results do not depend on
the number of workers or on the order in which trajectories are run.

The sampler moves on the jump chain: from ``x`` the time to the next
actual move is exponential with rate ``1 - p(x, x)`` and the move goes to
``y`` with probability ``p(x, y) / (1 - p(x, x))``.  Self-loop rings are
thereby folded into holding times.

Stopping is expressed as a race between local-time clocks: a clock is
attached to a set of states and a budget, consumes time only while the
process is in its set, and fires when its budget is exhausted.  Hitting
times, transition times, capacity races and thermalization rounds are all
special cases.
"""
import math
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .chain import restrict
from .errors import StepBudgetExceeded
from .spectral import qsd

DEFAULT_BUDGET = 10 ** 9
_BATCH = 4096

__all__ = [
    "Hit",
    "Transition",
    "Thermalize",
    "FixedTime",
    "Race",
    "TrajectorySample",
    "stream",
    "sample_trajectory",
    "sample_many",
    "empirical_exit_law",
    "ExitLawReport",
    "thermalization_experiment",
    "ThermalizationReport",
    "empirical_potential",
]


def stream(seed, index):
    """Independent generator for trajectory ``index`` of a run seeded with ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(int(index),))))


@dataclass(frozen=True)
class Hit:
    """Stop at the hitting time of ``B``."""

    B: tuple


@dataclass(frozen=True)
class Transition:
    """Stop when the local time outside ``R`` exceeds an independent Exp(``lam``) timer."""

    R: tuple
    lam: float


@dataclass(frozen=True)
class Thermalize:
    """Stop at the first successful round of alternating rate-``kappa`` / rate-``lam`` clocks.

    Each round draws fresh ``sigma_kappa`` (consumed by local time in ``R``)
    and ``sigma_lam`` (consumed by local time outside ``R``) and runs until
    one of them fires.  The round succeeds when the ``R`` clock fires with
    ``sigma_kappa > t_R`` or the outside clock fires with ``sigma_lam > t_C``.
    """

    R: tuple
    kappa: float
    lam: float
    t_R: float
    t_C: float


@dataclass(frozen=True)
class FixedTime:
    """Stop at a deterministic time ``t``."""

    t: float


@dataclass(frozen=True)
class Race:
    """Race between a rate-``kappa`` clock on ``A`` and a rate-``lam`` clock on ``B``."""

    A: tuple
    B: tuple
    kappa: float
    lam: float


@dataclass
class TrajectorySample:
    """Observables of one simulated trajectory.

    Attributes
    ----------
    seed, index : int
        Stream identification.
    start, end_state : int
        Initial and final state indices.
    time : float
        Global stopping time (``T`` for transition rules).
    local_R, local_C : float
        Local times in ``R`` and in its complement at the stop (zero when
        the rule has no ``R``).
    hitting_time : float or None
    sigma_kappa, sigma_lambda : list of float
        Clock draws, one per round.
    transition_time : float or None
        Local time in ``R`` at the transition stop.
    tau_delta : float or None
    i0 : int or None
        Index of the successful thermalization round.
    won : bool or None
        For races, whether the ``A`` clock fired first.
    moves : int
    path : list of (int, float) or None
        ``(state, holding time)`` pairs when recorded.
    """

    seed: int
    index: int
    start: int
    end_state: int = -1
    time: float = 0.0
    local_R: float = 0.0
    local_C: float = 0.0
    hitting_time: float = None
    sigma_kappa: list = field(default_factory=list)
    sigma_lambda: list = field(default_factory=list)
    transition_time: float = None
    tau_delta: float = None
    i0: int = None
    won: bool = None
    moves: int = 0
    path: list = None


class _Tables:
    """Jump-chain tables as plain Python lists for fast scalar access."""

    def __init__(self, chain):
        k = chain.kernel.tocsr()
        self.n = chain.n
        self.rate = chain.jump_rates.tolist()
        self.targets, self.cum = [], []
        for x in range(chain.n):
            cols = k.indices[k.indptr[x]:k.indptr[x + 1]]
            vals = k.data[k.indptr[x]:k.indptr[x + 1]]
            keep = cols != x
            cols, vals = cols[keep], vals[keep]
            c = np.cumsum(vals)
            self.targets.append(cols.tolist())
            self.cum.append((c / c[-1]).tolist() if c.size else [])
        self._chain = chain
        self._masks = {}

    def mask(self, subset):
        key = tuple(subset)
        if key not in self._masks:
            m = np.zeros(self.n, dtype=bool)
            m[self._chain.index(list(key))] = True
            self._masks[key] = m.tolist()
        return self._masks[key]


class _Draws:
    """Buffered unit exponentials and uniforms from one generator."""

    def __init__(self, rng):
        self.rng = rng
        self._e, self._u = [], []
        self._ne = self._nu = 8

    def exp(self):
        if not self._e:
            self._e = self.rng.standard_exponential(self._ne).tolist()[::-1]
            self._ne = min(2 * self._ne, _BATCH)
        return self._e.pop()

    def uniform(self):
        if not self._u:
            self._u = self.rng.random(self._nu).tolist()[::-1]
            self._nu = min(2 * self._nu, _BATCH)
        return self._u.pop()

    def clock(self, rate):
        if math.isinf(rate):
            return 0.0
        return self.exp() / rate


def _race(tab, draws, x, masks, budgets, budget, path=None):
    """Run until one local-time clock fires.

    Parameters
    ----------
    masks : list of list of bool
    budgets : list of float
        Local time each clock needs; ``inf`` never fires.

    Returns
    -------
    fired : int
    x : int
        State at the firing time.
    elapsed : float
    used : list of float
        Local time consumed by each clock.
    moves : int
    """
    used = [0.0] * len(masks)
    elapsed = 0.0
    moves = 0
    rate, targets, cum = tab.rate, tab.targets, tab.cum
    while True:
        for c, m in enumerate(masks):
            if m[x] and budgets[c] - used[c] <= 0.0:
                return c, x, elapsed, used, moves
        q = rate[x]
        h = draws.exp() / q if q > 0 else math.inf
        best, cut = -1, h
        for c, m in enumerate(masks):
            if m[x]:
                rem = budgets[c] - used[c]
                if rem < cut:
                    best, cut = c, rem
        if math.isinf(cut):
            raise StepBudgetExceeded("no clock can fire from an absorbing configuration")
        elapsed += cut
        for c, m in enumerate(masks):
            if m[x]:
                used[c] += cut
        if path is not None:
            path.append((x, cut))
        if best >= 0:
            used[best] = budgets[best]
            return best, x, elapsed, used, moves
        moves += 1
        if moves > budget:
            raise StepBudgetExceeded(f"more than {budget} moves")
        u = draws.uniform()
        x = targets[x][bisect_right(cum[x], u)]


def _start_index(chain, start):
    if isinstance(start, str):
        return int(chain.index([start])[0])
    return int(start)


def sample_trajectory(chain, start, rule, rng, *, budget=DEFAULT_BUDGET, record_path=False, seed=0, index=0,
                      _tab=None):
    """Simulate one trajectory until ``rule`` stops it.

    Parameters
    ----------
    chain : ReversibleChain
    start : int or str
    rule : Hit, Transition, Thermalize, FixedTime or Race
    rng : numpy.random.Generator
        Typically ``stream(seed, index)``.
    budget : int
        Maximal number of moves.
    record_path : bool
        Keep the ``(state, holding time)`` sequence.

    Returns
    -------
    TrajectorySample

    Raises
    ------
    StepBudgetExceeded
        When the budget is exhausted, and immediately for a transition
        rule with ``lam = 0`` whose timer never rings.
    """
    tab = _tab if _tab is not None else _Tables(chain)
    draws = _Draws(rng)
    x = _start_index(chain, start)
    s = TrajectorySample(seed=seed, index=index, start=x, path=[] if record_path else None)
    if isinstance(rule, Hit):
        m = tab.mask(rule.B)
        _, y, el, _, mv = _race(tab, draws, x, [m], [0.0], budget, s.path)
        s.end_state, s.time, s.hitting_time, s.moves = y, el, el, mv
    elif isinstance(rule, FixedTime):
        m = [True] * chain.n
        _, y, el, _, mv = _race(tab, draws, x, [m], [float(rule.t)], budget, s.path)
        s.end_state, s.time, s.moves = y, el, mv
    elif isinstance(rule, Transition):
        if rule.lam == 0:
            raise StepBudgetExceeded("a zero-rate timer never rings")
        mr = tab.mask(rule.R)
        mc = [not v for v in mr]
        sig = draws.clock(rule.lam)
        _, y, el, used, mv = _race(tab, draws, x, [mc], [sig], budget, s.path)
        s.sigma_lambda = [sig]
        s.local_C = sig
        s.local_R = el - used[0]
        s.transition_time = s.local_R
        s.time = s.local_R + sig
        s.end_state, s.moves = y, mv
    elif isinstance(rule, Race):
        ma, mb = tab.mask(rule.A), tab.mask(rule.B)
        sk, sl = draws.clock(rule.kappa), draws.clock(rule.lam)
        c, y, el, _, mv = _race(tab, draws, x, [ma, mb], [sk, sl], budget, s.path)
        s.sigma_kappa, s.sigma_lambda = [sk], [sl]
        s.won = c == 0
        s.end_state, s.time, s.moves = y, el, mv
    elif isinstance(rule, Thermalize):
        mr = tab.mask(rule.R)
        mc = [not v for v in mr]
        total, lr, moves, i = 0.0, 0.0, 0, 0
        while True:
            i += 1
            sk, sl = draws.clock(rule.kappa), draws.clock(rule.lam)
            s.sigma_kappa.append(sk)
            s.sigma_lambda.append(sl)
            c, x, el, used, mv = _race(tab, draws, x, [mr, mc], [sk, sl], budget - moves, s.path)
            total += el
            lr += used[0]
            moves += mv
            if (c == 0 and sk > rule.t_R) or (c == 1 and sl > rule.t_C):
                break
        s.i0, s.tau_delta, s.time = i, total, total
        s.local_R, s.local_C = lr, total - lr
        s.end_state, s.moves = x, moves
    else:
        raise TypeError(f"unknown stop rule {rule!r}")
    return s


def _sample_start(draws_rng, nu):
    return int(np.searchsorted(np.cumsum(nu), draws_rng.random() * nu.sum(), side="right"))


def _chunk(args):
    chain, starts, rule, seed, indices, budget, nu = args
    tab = _Tables(chain)
    out = []
    for i in indices:
        rng = stream(seed, i)
        x = starts if nu is None else _sample_start(rng, nu)
        out.append(sample_trajectory(chain, x, rule, rng, budget=budget, seed=seed, index=i, _tab=tab))
    return out


def sample_many(chain, start, rule, n, seed, *, workers=1, budget=DEFAULT_BUDGET):
    """Simulate ``n`` independent trajectories.

    Parameters
    ----------
    start : int, str or ndarray
        A fixed starting state, or a probability vector over all states
        from which each trajectory draws its start (with its own stream).
    seed : int
        Mandatory; trajectory ``i`` uses ``stream(seed, i)``.
    workers : int
        Number of processes.  Output is identical for every value.

    Returns
    -------
    list of TrajectorySample
        Ordered by trajectory index.
    """
    if n <= 0:
        raise ValueError("need at least one trajectory")
    nu = None
    if isinstance(start, np.ndarray) and start.ndim == 1 and start.size == chain.n:
        nu = np.asarray(start, dtype=float)
        start = None
    else:
        start = _start_index(chain, start)
    idx = list(range(n))
    if workers <= 1:
        return _chunk((chain, start, rule, seed, idx, budget, nu))
    parts = [idx[k::workers] for k in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        res = list(ex.map(_chunk, [(chain, start, rule, seed, p, budget, nu) for p in parts]))
    flat = [s for r in res for s in r]
    flat.sort(key=lambda s: s.index)
    return flat


@dataclass(frozen=True)
class ExitLawReport:
    """Kolmogorov-Smirnov comparison of rescaled exit times with the exponential law.

    The reference CDF is ``pi + (1 - pi)(1 - e^{-s})`` for ``s >= 0``.
    """

    n: int
    phi_star: float
    pi: float
    ks: float
    pvalue: float
    mean_scaled: float
    se_mean: float
    scaled: np.ndarray


def empirical_exit_law(chain, R, nu, n, seed, *, pi=0.0, workers=1, budget=DEFAULT_BUDGET):
    """Sample exit times of ``R`` from ``nu`` and test ``phi* tau`` against an exponential mixture.

    Parameters
    ----------
    nu : ndarray
        Initial law on ``R`` (ordered as ``restrict(chain, R).R``).
    pi : float
        Mass of the atom at zero in the reference law.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    ctx = restrict(chain, R)
    q = qsd(ctx)
    full = np.zeros(chain.n)
    full[ctx.R] = nu
    samples = sample_many(chain, full, Hit(tuple(int(i) for i in ctx.complement)), n, seed, workers=workers,
                          budget=budget)
    scaled = np.array([s.hitting_time for s in samples]) * q.phi_star

    def cdf(s):
        s = np.asarray(s)
        return np.where(s < 0, 0.0, pi + (1 - pi) * (1 - np.exp(-np.maximum(s, 0.0))))

    res = stats.kstest(scaled, cdf)
    return ExitLawReport(n, q.phi_star, pi, float(res.statistic), float(res.pvalue), float(scaled.mean()),
                         float(scaled.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan, scaled)


@dataclass(frozen=True)
class ThermalizationReport:
    """Empirical landing laws and tail of the thermalization time.

    Attributes
    ----------
    deviation_R, deviation_C : ndarray
        ``P_hat(X = x | side) / mu*_side(x) - 1`` on each side.
    se_R, se_C : ndarray
        Standard errors of those ratios.
    count_R, count_C : int
    max_excess : float
        ``max(|deviation| - 3 se)`` over both sides; compared with ``delta``.
    tail_t, tail_emp, tail_se, tail_bound : ndarray
        Rescaled times, empirical ``P(tau_delta > t (1/kappa + 1/lam))``,
        its standard error and the envelope.
    xi : float
    taus : ndarray
    """

    delta: float
    deviation_R: np.ndarray
    deviation_C: np.ndarray
    se_R: np.ndarray
    se_C: np.ndarray
    count_R: int
    count_C: int
    max_excess: float
    tail_t: np.ndarray
    tail_emp: np.ndarray
    tail_se: np.ndarray
    tail_bound: np.ndarray
    xi: float
    taus: np.ndarray

    @property
    def deviation_ok(self):
        return self.max_excess < self.delta

    @property
    def tail_ok(self):
        return bool(np.all(self.tail_emp <= self.tail_bound + 3 * self.tail_se))


def _side(ends, idx, mu_star):
    hits = np.isin(ends, idx)
    cnt = int(hits.sum())
    if cnt == 0:
        return np.full(idx.size, np.nan), np.full(idx.size, np.nan), 0
    freq = np.array([(ends == i).sum() for i in idx]) / cnt
    se = np.sqrt(freq * (1 - freq) / cnt) / mu_star
    return freq / mu_star - 1.0, se, cnt


def thermalization_experiment(chain, R, kappa, lam, delta, n, seed, *, start=None, workers=1,
                              tail_grid=(0.5, 1.0, 2.0, 3.0), budget=DEFAULT_BUDGET):
    """Thermalization-time experiment against the soft quasi-stationary measures.

    Parameters
    ----------
    start : int, str or ndarray, optional
        Initial state or law on all states; defaults to ``mu``.

    Raises
    ------
    Inapplicable
        If a soft escape-to-gap ratio is not below 1/3.
    """
    from .bounds import thermalization_windows

    ctx = restrict(chain, R)
    win = thermalization_windows(ctx, kappa, lam, delta)
    rule = Thermalize(tuple(int(i) for i in ctx.R), kappa, lam, win["t_R"], win["t_C"])
    st = chain.mu.copy() if start is None else start
    samples = sample_many(chain, st, rule, n, seed, workers=workers, budget=budget)
    ends = np.array([s.end_state for s in samples])
    taus = np.array([s.tau_delta for s in samples])
    dev_r, se_r, n_r = _side(ends, ctx.R, win["soft_R"].mu_star)
    dev_c, se_c, n_c = _side(ends, ctx.complement, win["soft_C"].mu_star)
    excess = np.concatenate([np.abs(d) - 3 * e for d, e in ((dev_r, se_r), (dev_c, se_c)) if np.all(np.isfinite(d))])
    env = win["envelope"]
    tt = np.asarray(tail_grid, dtype=float)
    scale = 1.0 / kappa + 1.0 / lam
    emp = np.array([(taus > t * scale).mean() for t in tt])
    se = np.sqrt(emp * (1 - emp) / n)
    xi = env.xi if env is not None else math.nan
    bound = env.tail(tt) if env is not None else np.full(tt.size, np.inf)
    return ThermalizationReport(delta, dev_r, dev_c, se_r, se_c, n_r, n_c, float(excess.max()), tt, emp, se, bound,
                                xi, taus)


def empirical_potential(chain, A, B, kappa, lam, x, n, seed, workers=1):
    """Monte Carlo estimate of ``P_x`` (the ``A`` clock fires before the ``B`` clock).

    Returns
    -------
    estimate, standard_error : float
    """
    rule = Race(tuple(int(i) for i in chain.index(A)), tuple(int(i) for i in chain.index(B)), kappa, lam)
    s = sample_many(chain, x, rule, n, seed, workers=workers)
    p = float(np.mean([t.won for t in s]))
    return p, math.sqrt(p * (1 - p) / n)
