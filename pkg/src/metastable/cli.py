"""Command-line interface.

Every subcommand prints a table (CSV) or a document (JSON) to standard
output and, with ``--out DIR``, also writes it under ``DIR``.  Floats are
written with 17 significant digits.  Exit codes: 0 success, 2 usage error,
3 data error, 4 violated bound in ``bounds-report``.
"""
import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import bounds as bounds_mod
from .capacity import solve_capacity
from .chain import load_chain, restrict, save_chain
from .errors import MetastableError
from .models import build_cw_full, build_cw_mag, build_wasp, cw_asymptotics, cw_exact, cw_spec
from .simulate import Transition, empirical_exit_law, sample_many, thermalization_experiment
from .soft import lambda_sweep
from .spectral import qsd, spectral_gap

EXIT_USAGE, EXIT_DATA, EXIT_VIOLATION = 2, 3, 4
SIMULATIONS = {"simulate-exit", "simulate-transition", "thermalize"}


class UsageError(Exception):
    pass


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _csv(rows):
    buf = io.StringIO()
    if rows:
        cols = list(rows[0])
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def _rate(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("rates must be positive (inf allowed)")
    return v


def _grid(values, default):
    g = sorted(values) if values else list(default)
    return g


def _emit(args, name, summary, rows=()):
    rows = list(rows)
    if args.format == "json":
        text = json.dumps(_jsonable({"command": name, "summary": summary, "rows": rows}), indent=2) + "\n"
        files = {f"{name}.json": text}
    else:
        srows = [{"key": k, "value": v} for k, v in summary.items()]
        files = {f"{name}_summary.csv": _csv(srows)}
        text = _csv(srows)
        if rows:
            files[f"{name}.csv"] = _csv(rows)
            text += "\n" + files[f"{name}.csv"]
    sys.stdout.write(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for fn, body in files.items():
            with open(os.path.join(args.out, fn), "w", encoding="utf-8") as fh:
                fh.write(body)


def _load(args):
    if not args.input:
        raise UsageError("--input is required")
    chain, R = load_chain(args.input)
    if args.R:
        R = [s for item in args.R for s in item.split(",") if s]
    return chain, R


def _need_R(chain, R):
    if not R:
        raise UsageError("select R with --R or an 'R' entry in the input file")
    return restrict(chain, R)


def cmd_validate(args):
    chain, R = _load(args)
    summary = {"states": chain.n, "edges": int((chain.conductances > 0).sum() // 2), "mu_min": float(chain.mu.min()),
               "mu_max": float(chain.mu.max()), "spectral_gap": spectral_gap(chain)}
    if R:
        ctx = restrict(chain, R)
        summary.update({"R_size": ctx.R.size, "mu_R_mass": ctx.mu_mass})
    _emit(args, "validate", summary)


def cmd_qsd(args):
    chain, R = _load(args)
    ctx = _need_R(chain, R)
    q = qsd(ctx)
    summary = {"phi_star": q.phi_star, "gamma_R": q.gamma_R, "gamma_star": q.gamma_star, "eps_star": q.eps_star,
               "phi_R": q.phi_R, "zeta_star": q.zeta_star, "var_h": q.var_h}
    rows = [{"state": s, "mu_R": a, "mu_star": b, "h_star": c}
            for s, a, b, c in zip(ctx.states_R, ctx.mu_R, q.mu_star, q.h_star)]
    _emit(args, "qsd", summary, rows)


def cmd_soft_sweep(args):
    chain, R = _load(args)
    ctx = _need_R(chain, R)
    grid = [0.0] + _grid(args.lam, np.logspace(-3, 3, 20)) + [math.inf]
    grid = sorted(set(grid))
    rows = []
    for r in lambda_sweep(ctx, grid):
        rows.append({"lambda": r.lam, "phi_star": r.qsd.phi_star, "gamma": r.qsd.gamma_soft, "eps_star": r.qsd.eps_star,
                     "phi_soft": r.qsd.phi_soft, "tv_to_mu_R": r.tv_to_mu_R, "tv_to_qsd": r.tv_to_qsd})
    _emit(args, "soft-sweep", {"points": len(rows)}, rows)


def cmd_capacity(args):
    chain, R = _load(args)
    ctx = _need_R(chain, R)
    rows = []
    for k in _grid(args.kappa, [math.inf]):
        for lam in _grid(args.lam, [math.inf]):
            res = solve_capacity(chain, ctx.R, ctx.complement, k, lam)
            rows.append({"kappa": k, "lambda": lam, "capacity": res.value, "dirichlet": res.dirichlet_energy,
                         "thomson": 1.0 / res.thomson_energy, "phi_rate": res.phi_rate})
    _emit(args, "capacity", {"R_size": ctx.R.size, "mu_R_mass": ctx.mu_mass}, rows)


def cmd_bounds_report(args):
    chain, R = _load(args)
    _need_R(chain, R)
    rep = bounds_mod.bounds_report(chain, R, kappas=_grid(args.kappa, (0.01, 0.1, 1.0)),
                                   lams=_grid(args.lam, (0.01, 0.1, 1.0)), delta=args.delta)
    rows = []
    for r in rep.records:
        rows.append({"name": r.name, "applicable": r.applicable, "holds": r.holds, "lower": r.lower, "exact": r.exact,
                     "upper": r.upper, "note": r.note})
    summary = dict(rep.summary)
    summary["violations"] = len(rep.violations())
    _emit(args, "bounds-report", summary, rows)
    return EXIT_VIOLATION if rep.violations() else 0


def _seed(args):
    if args.seed is None:
        raise UsageError("--seed is mandatory for simulations")
    if args.samples is None or args.samples < 1:
        raise UsageError("--samples must be a positive integer")


def cmd_simulate_exit(args):
    _seed(args)
    chain, R = _load(args)
    ctx = _need_R(chain, R)
    q = qsd(ctx)
    nu = ctx.mu_R if args.start == "mu_R" else q.mu_star
    rep = empirical_exit_law(chain, R, nu, args.samples, args.seed, workers=args.workers)
    summary = {"samples": rep.n, "phi_star": rep.phi_star, "ks": rep.ks, "pvalue": rep.pvalue,
               "mean_scaled": rep.mean_scaled, "se_mean": rep.se_mean, "start": args.start}
    rows = [{"index": i, "exit_time": s / rep.phi_star, "scaled": s} for i, s in enumerate(rep.scaled)]
    _emit(args, "simulate-exit", summary, rows)


def cmd_simulate_transition(args):
    _seed(args)
    chain, R = _load(args)
    ctx = _need_R(chain, R)
    lams = _grid(args.lam, [1.0])
    if len(lams) != 1:
        raise UsageError("simulate-transition takes a single --lambda")
    lam = lams[0]
    full = np.zeros(chain.n)
    full[ctx.R] = ctx.mu_R
    samples = sample_many(chain, full, Transition(tuple(int(i) for i in ctx.R), lam), args.samples, args.seed,
                          workers=args.workers)
    times = np.array([s.transition_time for s in samples])
    summary = {"samples": times.size, "lambda": lam, "mean": float(times.mean()),
               "se_mean": float(times.std(ddof=1) / math.sqrt(times.size)) if times.size > 1 else math.nan}
    rows = [{"index": s.index, "transition_time": s.transition_time, "end_state": chain.states[s.end_state]}
            for s in samples]
    _emit(args, "simulate-transition", summary, rows)


def cmd_thermalize(args):
    _seed(args)
    chain, R = _load(args)
    _need_R(chain, R)
    ks, ls = _grid(args.kappa, [0.1]), _grid(args.lam, [0.1])
    if len(ks) != 1 or len(ls) != 1:
        raise UsageError("thermalize takes a single --kappa and --lambda")
    rep = thermalization_experiment(chain, R, ks[0], ls[0], args.delta, args.samples, args.seed, workers=args.workers)
    summary = {"samples": args.samples, "kappa": ks[0], "lambda": ls[0], "delta": args.delta, "xi": rep.xi,
               "max_excess": rep.max_excess, "deviation_ok": rep.deviation_ok, "tail_ok": rep.tail_ok,
               "count_R": rep.count_R, "count_C": rep.count_C}
    rows = [{"t_scaled": t, "empirical": e, "se": s, "envelope": b}
            for t, e, s, b in zip(rep.tail_t, rep.tail_emp, rep.tail_se, rep.tail_bound)]
    _emit(args, "thermalize", summary, rows)


def _dump(args, chain, R):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        save_chain(os.path.join(args.out, "chain.json"), chain, R)


def cmd_model_cw(args):
    if args.full:
        chain, R = build_cw_full(args.N, args.beta, args.h)
    else:
        chain, R = build_cw_mag(args.N, args.beta, args.h)
    q = qsd(restrict(chain, R))
    summary = {"N": args.N, "beta": args.beta, "h": args.h, "states": chain.n, "R_size": len(R),
               "phi_star": q.phi_star, "eps_star": q.eps_star}
    try:
        spec = cw_spec(args.N, args.beta, args.h)
    except MetastableError:
        spec = None
    if spec is not None:
        summary.update({"m_minus": spec.m_minus, "m_zero": spec.m_zero, "m_plus": spec.m_plus,
                        "barrier": spec.barrier})
    rows = []
    if spec is not None and not args.full:
        asy, ex = cw_asymptotics(spec), cw_exact(spec, chain)
        for key, a in asy.to_dict().items():
            if key == "log_Z":
                continue
            e = getattr(ex, key)
            rows.append({"quantity": key, "exact": e, "asymptotic": a, "ratio": e / a})
    _dump(args, chain, R)
    _emit(args, "model-cw", summary, rows)


def cmd_model_wasp(args):
    chain, spec = build_wasp(args.ra, args.rt, args.rw, args.n, args.alpha)
    g = spectral_gap(chain)
    summary = {"states": chain.n, "l_a": spec.l_a, "l_t": spec.l_t, "l_w": spec.l_w, "alpha": spec.alpha,
               "spectral_gap": g, "relaxation_time": 1.0 / g}
    rows = [{"block": name, "size": len(b)}
            for name, b in [("thorax", spec.thorax), ("abdomen", spec.abdomen)]
            + [(f"wing{i + 1}", w) for i, w in enumerate(spec.wings)]]
    _dump(args, chain, spec.thorax)
    _emit(args, "model-wasp", summary, rows)


COMMANDS = {
    "validate": cmd_validate,
    "qsd": cmd_qsd,
    "soft-sweep": cmd_soft_sweep,
    "capacity": cmd_capacity,
    "bounds-report": cmd_bounds_report,
    "simulate-exit": cmd_simulate_exit,
    "simulate-transition": cmd_simulate_transition,
    "thermalize": cmd_thermalize,
    "model-cw": cmd_model_cw,
    "model-wasp": cmd_model_wasp,
}


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="chain JSON file")
    common.add_argument("--R", action="append", help="states of R (comma separated, repeatable)")
    common.add_argument("--kappa", action="append", type=_rate, help="rate on R (repeatable, inf allowed)")
    common.add_argument("--lambda", dest="lam", action="append", type=_rate,
                        help="rate outside R (repeatable, inf allowed)")
    common.add_argument("--delta", type=float, default=0.1)
    common.add_argument("--samples", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    p = argparse.ArgumentParser(prog="metastable", description="Metastability of reversible Markov chains.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp_ = sub.add_parser(name, parents=[common])
        if name == "simulate-exit":
            sp_.add_argument("--start", choices=("qsd", "mu_R"), default="qsd")
        if name == "model-cw":
            sp_.add_argument("--N", type=int, required=True)
            sp_.add_argument("--beta", type=float, required=True)
            sp_.add_argument("--h", type=float, required=True)
            g = sp_.add_mutually_exclusive_group()
            g.add_argument("--full", action="store_true")
            g.add_argument("--mag", action="store_true")
        if name == "model-wasp":
            sp_.add_argument("--ra", type=float, default=1.0)
            sp_.add_argument("--rt", type=float, default=1.0)
            sp_.add_argument("--rw", type=float, default=0.0)
            sp_.add_argument("--n", type=int, required=True)
            sp_.add_argument("--alpha", type=float, default=1.0 / 6)
    return p


def main(argv=None):
    """Run the command line; returns the exit code."""
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.workers < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        code = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MetastableError, KeyError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
