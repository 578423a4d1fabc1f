"""Closed-form metastability bounds, each certified against exact quantities.

Every evaluator returns :class:`BoundRecord` objects holding the exact
value (from :mod:`metastable.spectral`, :mod:`metastable.soft` or
:mod:`metastable.capacity`), the bound(s) and a ``holds`` flag.  Bounds
never define the truth: a record whose hypotheses are met and whose
inequality fails is a violation.

Evaluators that take quasi-stationary data accept either
:class:`~metastable.spectral.QsdData` (hard killing) or
:class:`~metastable.soft.SoftQsd` (killing rate ``lam``); the same
inequalities then apply to the traced, softly killed process.

Corrective factors that tend to one in the metastable regime are always
evaluated literally.
"""
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh

from .capacity import solve_capacity
from .chain import _reflected, negative_generator, restrict, solve_killed
from .errors import BadPartition, Inapplicable, NotIrreducibleRestricted, XiTooLarge
from .soft import SoftQsd, build_soft_kernel, soft_qsd
from .spectral import QsdData, qsd, spectral_gap, spectral_transient, tv_distance

SLACK = 1e-9
# absolute slack for quantities that vanish exactly but are computed with roundoff
ABS_SLACK = 1e-13
TRANSIENT_LIMIT = 400

__all__ = [
    "BoundRecord",
    "BoundsReport",
    "MixingWindow",
    "ThermalEnvelope",
    "t_star",
    "variance_bound",
    "gap_comparison",
    "exit_rate_sandwich",
    "zeta_bounds",
    "mixing_window",
    "mixing_window_records",
    "exit_envelopes",
    "exit_rate_bracket",
    "relaxation_bracket",
    "partition_relaxation_bound",
    "soft_orderings",
    "transition_rate_bracket",
    "transition_mixing_records",
    "transition_laws",
    "exact_mixing_time",
    "thermalization_envelope",
    "thermalization_windows",
    "stopped_exponential_tail",
    "bounds_report",
]


def _num(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return None
    return x


def _le(a, b):
    """``a <= b`` up to relative floating slack."""
    if a is None or b is None:
        return True
    if math.isinf(b) and b > 0 or math.isinf(a) and a < 0:
        return True
    return a <= b + SLACK * max(abs(a), abs(b)) + ABS_SLACK


@dataclass
class BoundRecord:
    """One evaluated inequality.

    Attributes
    ----------
    name : str
        Short identifier of the inequality.
    statement : str
        Human-readable form, ``lower <= exact <= upper``.
    applicable : bool
        Whether the hypotheses of the inequality are met.
    holds : bool or None
        ``None`` for inapplicable records.
    exact, lower, upper : float or None
    inputs : dict
        Quantities entering the bound.
    note : str
    """

    name: str
    statement: str
    applicable: bool
    holds: object
    exact: object = None
    lower: object = None
    upper: object = None
    inputs: dict = field(default_factory=dict)
    note: str = ""

    @property
    def ratio(self):
        """Tightness ``upper / lower`` when both are positive and finite."""
        if self.lower and self.upper and self.lower > 0 and math.isfinite(self.upper):
            return self.upper / self.lower
        return None

    def to_dict(self):
        d = asdict(self)
        d["ratio"] = self.ratio
        return d


def _record(name, statement, exact, lower=None, upper=None, applicable=True, inputs=None, note="", middle=None):
    exact, lower, upper = _num(exact), _num(lower), _num(upper)
    inputs = {k: _num(v) if isinstance(v, (int, float, np.floating)) else v for k, v in (inputs or {}).items()}
    if not applicable:
        return BoundRecord(name, statement, False, None, exact, lower, upper, inputs, note)
    ok = _le(lower, exact) and _le(exact, upper)
    if middle is not None:
        ok = ok and _le(exact, middle) and _le(middle, upper)
    return BoundRecord(name, statement, True, bool(ok), exact, lower, upper, inputs, note)


def _brace(eps):
    return (1.0 + math.sqrt(eps / (1.0 - eps))) * ((1.0 - eps) / (1.0 - 3.0 * eps))


def _xlog(eps, arg):
    """``eps * ln(1 / (eps * arg))`` with the ``eps = 0`` limit."""
    if eps == 0:
        return 0.0
    return eps * math.log(1.0 / (eps * arg))


def t_star(gamma, eps, zeta_star, delta):
    """Time after which the conditioned law is within relative error ``delta`` of the QSD.

    ``(1/gamma) ln(2 / (delta (1 - delta) zeta_star))`` times the corrective
    factor ``(1 + sqrt(eps / (1 - eps))) (1 - eps) / (1 - 3 eps)``.

    Raises
    ------
    Inapplicable
        If ``eps >= 1/3``.
    """
    if not eps < 1.0 / 3.0:
        raise Inapplicable(f"escape-to-gap ratio {eps!r} is not below 1/3")
    if math.isinf(gamma):
        return 0.0
    if not 0 < delta < 1:
        return math.inf
    return math.log(2.0 / (delta * (1.0 - delta) * zeta_star)) / gamma * _brace(eps)


@dataclass(frozen=True)
class _View:
    """Killed process on ``R`` seen through a (possibly soft) kernel."""

    lam: float
    w: np.ndarray
    kernel: sp.csr_matrix
    killing: np.ndarray
    phi: float
    mu_star: np.ndarray
    h_star: np.ndarray
    gamma: float
    gamma_star: float
    eps: float
    zeta_star: float
    zeta_R: float
    alpha: float
    var_h: float
    phi_R: float

    @property
    def tag(self):
        return "" if math.isinf(self.lam) else f"[lam={self.lam:.6g}]"

    @property
    def hard(self):
        return math.isinf(self.lam)


def _view(ctx, q):
    if isinstance(q, QsdData):
        return _View(math.inf, ctx.mu_R, ctx.killed_kernel, ctx.escape, q.phi_star, q.mu_star, q.h_star,
                     q.gamma_R, q.gamma_star, q.eps_star, q.zeta_star, q.zeta_R, q.alpha_R, q.var_h, q.phi_R)
    if isinstance(q, SoftQsd):
        sk = build_soft_kernel(ctx, q.lam)
        return _View(q.lam, ctx.mu_R, sk.p_star, sk.escape, q.phi_star, q.mu_star, q.h_star, q.gamma_soft,
                     q.gamma_star, q.eps_star, q.zeta_star, float(ctx.mu_R.min()), q.alpha, q.var_h, q.phi_soft)
    raise TypeError("expected QsdData or SoftQsd")


def _transient(v, nu, times):
    return spectral_transient(v.w, v.kernel, v.killing, nu, times, phi=v.phi)


def _mean_exit(v):
    """``E_x`` of the (transition) exit time for every ``x`` in ``R``."""
    return solve_killed(v.kernel, v.killing, np.ones(v.w.size))


def variance_bound(ctx, q):
    """Variance of the QSD density under ``mu_R`` against ``eps / (1 - eps)``."""
    v = _view(ctx, q)
    ok = v.eps < 1
    up = v.eps / (1 - v.eps) if ok else None
    return _record("variance-of-density" + v.tag, "Var_muR(h*) <= eps/(1-eps)", v.var_h, upper=up,
                   applicable=ok, inputs={"eps": v.eps}, note="" if ok else "eps >= 1")


def gap_comparison(ctx, q):
    """Killed-kernel gap against the reflected gap, valid for ``eps < 1/3``."""
    v = _view(ctx, q)
    ok = v.eps < 1.0 / 3.0
    exact = 1.0 / v.gamma_star
    up = (1.0 / v.gamma) * (1 - v.eps) / (1 - 3 * v.eps) if ok else None
    return _record("killed-gap-comparison" + v.tag, "1/gamma* <= (1/gamma_R) (1-eps)/(1-3eps)", exact, upper=up,
                   applicable=ok, inputs={"eps": v.eps, "gamma_R": v.gamma, "gamma_star": v.gamma_star},
                   note="" if ok else "eps >= 1/3")


def exit_rate_sandwich(ctx, q):
    """``phi* <= 1 / E_{mu_R}[tau] <= phi_R`` for the hard exit time."""
    v = _view(ctx, q)
    mean = float(v.w @ _mean_exit(v))
    return _record("exit-rate-sandwich" + v.tag, "phi* <= 1/E_muR[tau] <= phi_R", 1.0 / mean,
                   lower=v.phi, upper=v.phi_R, inputs={"mean_exit_from_muR": mean})


def _diameter(support):
    """Smallest ``k`` with every entry of the ``k``-th boolean power positive."""
    m = support.shape[0]
    reach = np.eye(m, dtype=bool)
    for k in range(m + 1):
        if reach.all():
            return k
        reach = (reach.astype(np.int64) @ support.astype(np.int64)) > 0
    raise NotIrreducibleRestricted("support powers never become positive within |R| steps")


def zeta_bounds(ctx, q):
    """Bounds on ``ln(1 / zeta*)``, the log of the smallest QSD atom in density scale.

    Returns records for the escape-based upper bound, the diameter bound
    (when every state of ``R`` has a positive self-loop) and, for hard
    killing, the internal-border lower bounds on ``zeta*``.
    """
    v = _view(ctx, q)
    exact = math.log(1.0 / v.zeta_star)
    out = []
    ok = v.eps < 1
    up = None
    if ok:
        pos = 0.0
        if v.eps > 0:
            pos = max(0.0, math.log(4 * v.eps / ((1 - v.eps) * v.zeta_R)))
        ratio = 0.0 if math.isinf(v.gamma) else v.alpha / v.gamma
        up = math.log(4.0 / v.zeta_R) + ratio * pos
    out.append(_record("zeta-escape" + v.tag, "ln(1/zeta*) <= ln(4/zeta_R) + (alpha/gamma_R)[ln(4eps/((1-eps)zeta_R))]+",
                       exact, upper=up, applicable=ok, inputs={"zeta_R": v.zeta_R, "alpha": v.alpha, "eps": v.eps}))

    k = sp.csr_matrix(v.kernel)
    diag = k.diagonal()
    loops = bool(np.all(diag > 0))
    if loops:
        delta_R = float(np.max(-np.log(k.data[k.data > 0])))
        d_R = _diameter(k.toarray() > 0)
        middle = math.log(1.0 / float(np.min(v.mu_star)) ** 2)
        out.append(_record("zeta-diameter" + v.tag, "ln(1/zeta*) <= ln(1/min mu*^2) <= 2 Delta_R D_R", exact,
                           upper=2 * delta_R * d_R, middle=middle,
                           inputs={"Delta_R": delta_R, "D_R": d_R, "log_inv_min_mu_star_sq": middle}))
    else:
        out.append(_record("zeta-diameter" + v.tag, "ln(1/zeta*) <= 2 Delta_R D_R", exact, applicable=False,
                           note="some state of R has no self-loop"))
    if v.hard:
        border = np.searchsorted(ctx.R, ctx.internal_border)
        lo = v.zeta_R * float(np.min(v.h_star[border])) ** 2
        out.append(_record("zeta-border", "zeta* >= zeta_R (min over border of h*)^2", v.zeta_star, lower=lo,
                           inputs={"border_size": int(border.size)}))
        single = border.size == 1
        lo1 = v.zeta_R * (v.phi / v.phi_R) ** 2 if single else None
        out.append(_record("zeta-single-border", "zeta* >= zeta_R (phi*/phi_R)^2", v.zeta_star, lower=lo1,
                           applicable=single, note="" if single else "internal border has several states"))
    return out


@dataclass(frozen=True)
class MixingWindow:
    """Mixing windows of a killed process.

    Attributes
    ----------
    delta : float
    t_delta : float
        Window for relative error ``delta``.
    t_eps : float
        Window for ``delta = eps``.
    product : float
        ``phi * t_eps``.
    product_bound : float
        Closed-form upper bound on ``product``.
    """

    delta: float
    t_delta: float
    t_eps: float
    product: float
    product_bound: float


def mixing_window(ctx, q, delta):
    """Mixing windows ``T*_delta`` and ``T* = T*_eps``.

    Raises
    ------
    Inapplicable
        If ``eps >= 1/3``.
    """
    v = _view(ctx, q)
    t_d = t_star(v.gamma, v.eps, v.zeta_star, delta)
    t_e = t_star(v.gamma, v.eps, v.zeta_star, v.eps)
    if v.eps > 0:
        pb = v.eps * math.log(3.0 / (v.eps * v.zeta_star)) * _brace(v.eps)
    else:
        pb = 0.0 if math.isinf(v.gamma) else math.inf
    prod = v.phi * t_e if t_e > 0 else 0.0
    return MixingWindow(delta, t_d, t_e, prod, pb)


def _conditioned_deviation(v, t):
    m = v.w.size
    laws = _transient(v, np.eye(m), [t])[0]
    surv = laws.sum(axis=1, keepdims=True)
    return float(np.max(np.abs(laws / surv / v.mu_star[None, :] - 1.0)))


def mixing_window_records(ctx, q, delta, factors=(1.01, 2.0)):
    """Product bound for ``phi* T*`` and exact checks of the conditioned-law window.

    The conditioned law ``P_x(X(t) = . | tau > t)`` is computed exactly at
    ``t = f T*_delta`` for every ``f`` in ``factors`` and every start ``x``;
    its largest relative deviation from the QSD must stay below ``delta``.
    """
    v = _view(ctx, q)
    try:
        w = mixing_window(ctx, q, delta)
    except Inapplicable as exc:
        return [
            _record("window-product" + v.tag, "phi* T* <= eps ln(3/(eps zeta*)) {..}", None, applicable=False, note=str(exc)),
            _record("qsd-mixing" + v.tag, "|P_x(X_t=y|tau>t)/mu*(y) - 1| < delta", None, applicable=False, note=str(exc)),
        ]
    out = [_record("window-product" + v.tag, "phi* T* <= eps ln(3/(eps zeta*)) {..}", w.product, upper=w.product_bound,
                   inputs={"T_star": w.t_eps, "eps": v.eps, "zeta_star": v.zeta_star})]
    if v.w.size > TRANSIENT_LIMIT:
        out.append(_record("qsd-mixing" + v.tag, "|P_x(X_t=y|tau>t)/mu*(y) - 1| < delta", None, applicable=False,
                           note="too many states for the exact conditioned law"))
        return out
    if w.t_delta == 0:
        dev = 0.0
    elif math.isinf(w.t_delta):
        dev = None
    else:
        dev = max(_conditioned_deviation(v, f * w.t_delta) for f in factors)
    out.append(_record("qsd-mixing" + v.tag, "|P_x(X_t=y|tau>t)/mu*(y) - 1| < delta", dev, upper=delta,
                       applicable=dev is not None, inputs={"delta": delta, "T_star_delta": w.t_delta,
                                                          "factors": list(factors)}))
    return out


def _check_nu(nu, m):
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (m,) or np.any(nu < 0) or abs(nu.sum() - 1) > 1e-12:
        raise ValueError("nu must be a probability vector on R")
    return nu


def exit_envelopes(ctx, q, nu=None, grid=(1.0, 1.5, 2.0, 4.0)):
    """Asymptotic exit-law envelopes, the restricted-start bound and the mean-exit bound.

    Parameters
    ----------
    ctx : SubsetContext
    q : QsdData or SoftQsd
    nu : ndarray, optional
        Initial law on ``R``; defaults to ``mu_R``.
    grid : sequence of float
        Rescaled times ``t``; points below ``phi* T*`` are replaced by it.

    Returns
    -------
    list of BoundRecord
        One envelope record per grid point, then the restricted-start
        record (only for ``nu = mu_R``) and the mean-exit record.
    """
    v = _view(ctx, q)
    nu = _check_nu(ctx.mu_R if nu is None else nu, v.w.size)
    is_muR = np.allclose(nu, ctx.mu_R, rtol=0, atol=1e-15)
    out = []
    ok = v.eps < 1.0 / 3.0 and v.phi > 0
    why = "" if ok else ("eps >= 1/3" if v.phi > 0 else "no killing")
    if ok:
        t_e = t_star(v.gamma, v.eps, v.zeta_star, v.eps)
        pt = v.phi * t_e
        surv_t = float(_transient(v, nu, [t_e])[0].sum()) if t_e > 0 else 1.0
        pi = 1.0 - surv_t
        ts = sorted({max(t, pt) for t in grid})
        surv = _transient(v, nu, [t / v.phi for t in ts]).sum(axis=1)
        for t, s in zip(ts, surv):
            base = (1 - pi) * math.exp(-t) * math.exp(pt)
            out.append(_record("exit-envelope" + v.tag, "(1-pi) e^-t e^{phi*T*}(1-eps) <= P(tau > t/phi*) <= .. (1+eps)",
                               float(s), lower=base * (1 - v.eps), upper=base * (1 + v.eps),
                               inputs={"t": t, "pi": pi, "phi_T_star": pt}))
        if is_muR:
            up = 0.5 * math.sqrt(v.eps / (1 - v.eps)) + pt
            out.append(_record("restricted-start" + v.tag, "pi(mu_R) <= sqrt(eps/(1-eps))/2 + phi* T*", pi, upper=up,
                               inputs={"T_star": t_e}))
    else:
        out.append(_record("exit-envelope" + v.tag, "exit-law envelopes", None, applicable=False, note=why))
    if v.phi > 0:
        mean = _mean_exit(v)
        up = (1.0 / v.phi) * (1 + v.eps + _xlog(v.eps, v.zeta_R))
        out.append(_record("mean-exit-upper" + v.tag, "max_x E_x[tau] <= (1/phi*){1 + eps + eps ln(1/(eps zeta_R))}",
                           float(mean.max()), upper=up, inputs={"nu_mean": float(nu @ mean)}))
    return out


def _cap(chain, A, B, kappa, lam):
    return solve_capacity(chain, A, B, kappa, lam).value


def exit_rate_bracket(ctx, q, kappas):
    """Capacity bracket of the escape rate, one record per ``kappa``.

    ``(C_k/mu(R)) {1 - eps - k/gamma_R} <= phi* <= (C_k/mu(R)) {1 - C_k/(k mu(R))}^-2``
    with ``C_k`` the capacity between ``R`` (dangling rate ``k``) and the
    complement (pinned).
    """
    out = []
    mr = ctx.mu_mass
    for k in kappas:
        c = _cap(ctx.chain, ctx.R, ctx.complement, k, math.inf)
        kg = 0.0 if math.isinf(q.gamma_R) else k / q.gamma_R
        lo = c / mr * (1 - q.eps_star - kg)
        up = c / mr / (1 - c / (k * mr)) ** 2
        out.append(_record("exit-rate-bracket", "capacity bracket of phi*", q.phi_star, lower=lo, upper=up,
                           inputs={"kappa": k, "capacity": c, "mu_R": mr}))
    return out


def _gap_term(rate, phi, gamma):
    if math.isinf(gamma):
        return 0.0
    return (rate + phi) / gamma


def relaxation_bracket(chain, R, kappas, lams, gamma=None):
    """Two-sided capacity bracket of the relaxation time ``1/gamma``.

    One record per pair ``(kappa, lam)``.  When the squared corrective
    brace of the lower bound is built from a negative number the lower
    bound is vacuous; it is then reported in ``inputs`` but not asserted.
    """
    ctx = restrict(chain, R)
    cctx = ctx.complement_context()
    g = spectral_gap(chain) if gamma is None else gamma
    g_r = spectral_gap(ctx.reflected_chain)
    g_c = spectral_gap(cctx.reflected_chain)
    mr, mc = ctx.mu_mass, 1.0 - ctx.mu_mass
    out = []
    for k in kappas:
        c_k = _cap(chain, ctx.R, ctx.complement, k, math.inf)
        for lam in lams:
            c = _cap(chain, ctx.R, ctx.complement, k, lam)
            c_l = _cap(chain, ctx.R, ctx.complement, math.inf, lam)
            phi = c / (mr * mc)
            brace = 1.0 - (0.0 if math.isinf(k) else c_k / (k * mr)) - (0.0 if math.isinf(lam) else c_l / (lam * mc))
            lo = brace ** 2 / phi if brace >= 0 else None
            up = (1.0 / phi) * (1 + max(_gap_term(k, phi, g_r), _gap_term(lam, phi, g_c)))
            out.append(_record("relaxation-bracket", "capacity bracket of 1/gamma", 1.0 / g, lower=lo, upper=up,
                               inputs={"kappa": k, "lambda": lam, "capacity": c, "phi_rate": phi, "brace": brace,
                                       "gamma_R": g_r, "gamma_C": g_c},
                               note="" if brace >= 0 else "lower bound vacuous (negative brace)"))
    return out


def partition_relaxation_bound(chain, blocks, kappas, gamma=None):
    """Upper bound on ``1/gamma`` from a partition into internally irreducible blocks.

    Raises
    ------
    BadPartition
        If the blocks overlap, miss states, or a block's reflected chain is
        reducible.
    """
    idx = [chain.index(b) for b in blocks]
    if len(idx) != len(kappas) or len(idx) < 2:
        raise BadPartition("need at least two blocks and one rate per block")
    allidx = np.concatenate(idx)
    if allidx.size != chain.n or np.unique(allidx).size != chain.n:
        raise BadPartition("blocks must partition the state space")
    if any(k <= 0 for k in kappas):
        raise BadPartition("rates must be positive")
    gammas, mass = [], []
    for b in idx:
        mass.append(float(chain.mu[b].sum()))
        if b.size == 1:
            gammas.append(math.inf)
            continue
        try:
            gammas.append(spectral_gap(_reflected(chain, b)))
        except NotIrreducibleRestricted as exc:
            raise BadPartition(str(exc)) from exc
    m = len(idx)
    phi = np.full((m, m), np.inf)
    for i in range(m):
        for j in range(i + 1, m):
            c = _cap(chain, idx[i], idx[j], kappas[i], kappas[j])
            phi[i, j] = phi[j, i] = c / (mass[i] * mass[j])
    inv = 1.0 / phi
    np.fill_diagonal(inv, 0.0)
    s = 0.5 * inv.sum()
    terms = [0.0 if math.isinf(gammas[i]) else (1.0 + kappas[i] * inv[i].sum()) / gammas[i] for i in range(m)]
    up = s * (1.0 + max(terms) / s)
    g = spectral_gap(chain) if gamma is None else gamma
    return _record("partition-relaxation", "1/gamma <= S {1 + max_i (1/gamma_i){1 + sum_j kappa_i/phi(i,j)} / S}",
                   1.0 / g, upper=up, inputs={"blocks": m, "S": s, "kappas": [float(k) for k in kappas],
                                              "block_gaps": [float(x) for x in gammas]})


def soft_orderings(q, sq):
    """Soft data never exceed their hard counterparts (escape, ratio) and never undercut the gap."""
    t = f"[lam={sq.lam:.6g}]"
    return [
        _record("soft-order-phi" + t, "phi*_lam <= phi*", sq.phi_star, upper=q.phi_star),
        _record("soft-order-gap" + t, "gamma_lam >= gamma_R", sq.gamma_soft, lower=q.gamma_R),
        _record("soft-order-eps" + t, "eps_lam <= eps", sq.eps_star, upper=q.eps_star),
    ]


def transition_rate_bracket(ctx, kappa, lam, sq=None):
    """Capacity bracket of the soft escape rate ``phi*_{R,lam}``.

    The lower bound is the product of two braces; it is asserted only when
    both are nonnegative.
    """
    if sq is None:
        sq = soft_qsd(build_soft_kernel(ctx, lam), ctx)
    chain = ctx.chain
    cctx = ctx.complement_context()
    g_r = spectral_gap(ctx.reflected_chain)
    g_c = spectral_gap(cctx.reflected_chain)
    mr = ctx.mu_mass
    c = _cap(chain, ctx.R, ctx.complement, kappa, lam)
    phi_kl = c / (mr * (1 - mr))
    p = sq.phi_star
    b1 = (1 - mr - 2 * p / lam) / (1 - mr)
    b2 = 1 - max(_gap_term(kappa, phi_kl, g_r), _gap_term(lam, phi_kl, g_c))
    lo = c / mr * b1 * b2 if (b1 >= 0 and b2 >= 0) else None
    zeta_R = float(ctx.mu_R.min())
    up = c / mr * (1 + sq.eps_star + _xlog(sq.eps_star, zeta_R) + p / kappa)
    return _record("transition-rate-bracket", "capacity bracket of phi*_lam", p, lower=lo, upper=up,
                   inputs={"kappa": kappa, "lambda": lam, "capacity": c, "phi_rate": phi_kl, "brace_1": b1,
                           "brace_2": b2},
                   note="" if lo is not None else "lower bound vacuous (negative brace)")


def _dense_generator(chain):
    return negative_generator(chain.kernel).toarray()


def transition_laws(chain, R, lam):
    """Exact laws ``nu_x`` of the state reached when the outside timer rings.

    ``nu_x(y) = lam [(Lam - L)^{-1}](x, y)`` with ``Lam = lam`` on the
    complement of ``R`` and zero on ``R``.

    Returns
    -------
    ndarray, shape (n, n)
        Row ``x`` is ``nu_x``; columns in ``R`` vanish.
    """
    ctx = restrict(chain, R)
    a = _dense_generator(chain)
    kill = np.zeros(chain.n)
    kill[ctx.complement] = lam
    g = np.linalg.solve(a + np.diag(kill), np.eye(chain.n))
    nu = g * kill[None, :]
    nu[:, ctx.R] = 0.0
    return nu


def exact_mixing_time(chain, threshold, t_hi=None, rtol=1e-10):
    """Smallest ``t`` with ``max_x TV(P_x(X_t = .), mu) <= threshold``, by bisection.

    Uses the eigendecomposition of the symmetrized generator, so it is
    meant for chains of at most a few hundred states.
    """
    mu = chain.mu
    sq = np.sqrt(mu)
    s = sq[:, None] * _dense_generator(chain) / sq[None, :]
    vals, vecs = eigh(0.5 * (s + s.T))
    vals[0] = 0.0

    def dist(t):
        pt = (vecs * np.exp(-t * vals)) @ vecs.T
        pt = pt / sq[:, None] * sq[None, :]
        return 0.5 * float(np.max(np.abs(pt - mu[None, :]).sum(axis=1)))

    if dist(0.0) <= threshold:
        return 0.0
    hi = t_hi if t_hi else 1.0 / max(vals[1], 1e-300)
    while dist(hi) > threshold:
        hi *= 2.0
    lo = 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if dist(mid) > threshold:
            lo = mid
        else:
            hi = mid
    return hi


def _soft_complement(ctx, kappa):
    cctx = ctx.complement_context()
    return cctx, soft_qsd(build_soft_kernel(cctx, kappa), cctx)


def transition_mixing_records(ctx, kappa, lam, sq=None):
    """Landing-law bounds and the mixing-time bound of the soft transition.

    Returns records for the distance of ``nu_x`` to the complement's
    restricted ensemble and to equilibrium (maximized over ``x``), and for
    the mixing time, computed exactly by bisection.
    """
    chain = ctx.chain
    if sq is None:
        sq = soft_qsd(build_soft_kernel(ctx, lam), ctx)
    cctx, sc = _soft_complement(ctx, kappa)
    mr = ctx.mu_mass
    eps_c = sc.eps_star
    out = []
    if not eps_c < 1.0 / 3.0:
        note = "complement eps at kappa >= 1/3"
        for name in ("landing-law-complement", "landing-law-equilibrium", "mixing-time"):
            out.append(_record(name, "", None, applicable=False, note=note))
        return out
    t_c = t_star(sc.gamma_soft, eps_c, sc.zeta_star, eps_c)
    nu = transition_laws(chain, ctx.R, lam)
    mu_c = np.zeros(chain.n)
    mu_c[ctx.complement] = cctx.mu_R
    tv_c = max(tv_distance(row, mu_c) for row in nu)
    tv_mu = max(tv_distance(row, chain.mu) for row in nu)
    root = math.sqrt(eps_c / (1 - eps_c))
    out.append(_record("landing-law-complement", "max_x TV(nu_x, mu_C) <= eps_C/2 + lam T*_C", tv_c,
                       upper=0.5 * eps_c + lam * t_c, inputs={"eps_C": eps_c, "T_star_C": t_c, "lambda": lam}))
    out.append(_record("landing-law-equilibrium", "max_x TV(nu_x, mu) <= mu(R) + sqrt(eps_C/(1-eps_C)) + lam T*_C",
                       tv_mu, upper=mr + root + lam * t_c, inputs={"mu_R": mr}))
    eta = mr + 2 * (root + lam * t_c)
    if not eta < 0.5:
        out.append(_record("mixing-time", "t_mix <= 2/(phi*_lam (1/2 - mu(R))){..}", None, applicable=False,
                           inputs={"eta": eta}, note="eta >= 1/2"))
        return out
    up = 2.0 / (sq.phi_star * (0.5 - mr)) * (1 + sq.eps_star + _xlog(sq.eps_star, float(ctx.mu_R.min()))
                                            + sq.phi_star / lam)
    thr = 0.5 * (eta + 0.5)
    tm = exact_mixing_time(chain, thr) if chain.n <= TRANSIENT_LIMIT else None
    out.append(_record("mixing-time", "t_mix <= 2/(phi*_lam (1/2 - mu(R))){..}", tm, upper=up,
                       applicable=tm is not None, inputs={"eta": eta, "threshold": thr, "kappa": kappa, "lambda": lam},
                       note="" if tm is not None else "too many states for the exact mixing time"))
    return out


@dataclass(frozen=True)
class ThermalEnvelope:
    """Tail envelope of the thermalization time.

    ``P(tau_delta > t (1/kappa + 1/lam)) <= e^{-t} / (1 - xi)``.
    """

    xi: float
    kappa: float
    lam: float

    @property
    def scale(self):
        return 1.0 / self.kappa + 1.0 / self.lam

    def tail(self, t):
        return np.exp(-np.asarray(t, dtype=float)) / (1.0 - self.xi)


def thermalization_envelope(kappa, lam, t_star_R, t_star_C):
    """Envelope of the thermalization time from the two soft mixing windows.

    ``xi = max(e^{kappa T*_R} - 1, e^{lam T*_C} - 1)``.

    Raises
    ------
    XiTooLarge
        If ``xi >= 1``.
    """
    xi = max(math.expm1(kappa * t_star_R), math.expm1(lam * t_star_C))
    if not xi < 1:
        raise XiTooLarge(f"xi = {xi!r} is not below 1")
    return ThermalEnvelope(xi, kappa, lam)


def stopped_exponential_tail(kappa, T, t):
    """Bound on ``P(sigma_1 + ... + sigma_N > t / kappa)`` where ``N`` is the first ``sigma_i > T``.

    The ``sigma_i`` are i.i.d. exponential with rate ``kappa``.
    """
    x = math.expm1(kappa * T)
    if not x < 1:
        raise XiTooLarge(f"e^(kappa T) - 1 = {x!r} is not below 1")
    return np.exp(-np.asarray(t, dtype=float)) / (1.0 - x)


def thermalization_windows(ctx, kappa, lam, delta):
    """Soft QSD data and windows ``T*_{delta,R,lam}``, ``T*_{delta,C,kappa}`` for thermalization.

    Returns
    -------
    dict
        Keys ``soft_R``, ``soft_C`` (SoftQsd), ``t_R``, ``t_C`` and
        ``envelope`` (:class:`ThermalEnvelope`, or ``None`` if ``xi >= 1``).

    Raises
    ------
    Inapplicable
        If either escape-to-gap ratio is not below 1/3.
    """
    sr = soft_qsd(build_soft_kernel(ctx, lam), ctx)
    cctx, sc = _soft_complement(ctx, kappa)
    t_r = t_star(sr.gamma_soft, sr.eps_star, sr.zeta_star, delta)
    t_c = t_star(sc.gamma_soft, sc.eps_star, sc.zeta_star, delta)
    try:
        env = thermalization_envelope(kappa, lam, t_r, t_c)
    except XiTooLarge:
        env = None
    return {"soft_R": sr, "soft_C": sc, "complement": cctx, "t_R": t_r, "t_C": t_c, "envelope": env}


@dataclass
class BoundsReport:
    """All bound records for one chain and subset."""

    records: list
    summary: dict = field(default_factory=dict)

    def violations(self):
        return [r for r in self.records if r.applicable and r.holds is False]

    @property
    def ok(self):
        return not self.violations()

    def to_dict(self):
        return {"summary": self.summary, "records": [r.to_dict() for r in self.records]}

    def to_json(self, indent=2):
        return json.dumps(_clean(self.to_dict()), indent=indent)

    def table(self):
        head = f"{'bound':<40} {'status':<12} {'lower':>24} {'exact':>24} {'upper':>24}"
        lines = [head, "-" * len(head)]
        for r in self.records:
            status = "n/a" if not r.applicable else ("holds" if r.holds else "VIOLATED")
            lines.append(f"{r.name:<40} {status:<12} {_fmt(r.lower):>24} {_fmt(r.exact):>24} {_fmt(r.upper):>24}")
        return "\n".join(lines)


def _fmt(x):
    return "" if x is None else f"{x:.17g}"


def _clean(o):
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (np.floating, float)):
        o = float(o)
        return o if math.isfinite(o) else repr(o)
    if isinstance(o, np.integer):
        return int(o)
    return o


def bounds_report(chain, R, kappas=(0.01, 0.1, 1.0), lams=(0.01, 0.1, 1.0), delta=0.1, lam_grid=None):
    """Evaluate every bound on ``(chain, R)``.

    Parameters
    ----------
    chain : ReversibleChain
    R : subset of states
    kappas, lams : sequence of float
        Rates used by the capacity brackets and the soft-transition bounds.
    delta : float
        Relative error for the conditioned-law window.
    lam_grid : sequence of float, optional
        Killing rates at which the hard-killing bounds are re-checked on
        the soft kernels; defaults to ``lams``.

    Returns
    -------
    BoundsReport
    """
    ctx = restrict(chain, R)
    q = qsd(ctx)
    lam_grid = list(lams) if lam_grid is None else list(lam_grid)
    recs = [variance_bound(ctx, q), gap_comparison(ctx, q), exit_rate_sandwich(ctx, q)]
    recs += zeta_bounds(ctx, q)
    recs += mixing_window_records(ctx, q, delta)
    recs += exit_envelopes(ctx, q)
    recs += exit_rate_bracket(ctx, q, kappas)
    gamma = spectral_gap(chain)
    recs += relaxation_bracket(chain, ctx.R, kappas, lams, gamma=gamma)
    cctx = ctx.complement_context()
    recs.append(partition_relaxation_bound(chain, [ctx.R, cctx.R], [kappas[0], lams[0]], gamma=gamma))
    for lam in lam_grid:
        sq = soft_qsd(build_soft_kernel(ctx, lam), ctx)
        recs += soft_orderings(q, sq)
        recs += [variance_bound(ctx, sq), gap_comparison(ctx, sq)]
        recs += zeta_bounds(ctx, sq)
        recs += mixing_window_records(ctx, sq, delta)
        recs += exit_envelopes(ctx, sq)
    for k in kappas:
        for lam in lams:
            sq = soft_qsd(build_soft_kernel(ctx, lam), ctx)
            recs.append(transition_rate_bracket(ctx, k, lam, sq))
            recs += transition_mixing_records(ctx, k, lam, sq)
    summary = {
        "n": chain.n, "R_size": int(ctx.R.size), "mu_R": ctx.mu_mass, "phi_star": q.phi_star, "gamma_R": q.gamma_R,
        "eps_star": q.eps_star, "zeta_star": q.zeta_star, "zeta_R": q.zeta_R, "alpha_R": q.alpha_R, "gamma": gamma,
        "phi_R": q.phi_R,
    }
    try:
        w = mixing_window(ctx, q, delta)
        summary.update(T_star_delta=w.t_delta, T_star=w.t_eps)
    except Inapplicable:
        pass
    return BoundsReport(recs, summary)
