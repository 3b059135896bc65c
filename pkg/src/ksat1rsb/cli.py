"""Command line front end: ``ksat1rsb <subcommand> [flags]``.

Machine output goes to stdout or ``--out``; the human summary goes to
stderr. A flat ``key=value`` config file may supply any flag (dashes or
underscores); explicit flags win. Exit codes: 2 usage, 3 bracket failure,
4 budget exceeded.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from ._rng import resolve_seed

EXIT_USAGE, EXIT_BRACKET, EXIT_BUDGET = 2, 3, 4

RANDOMIZED = {"popdyn", "phi", "threshold", "clusters", "treebp", "bsp", "interp"}


class UsageError(Exception):
    pass


def read_config(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, val = (t.strip() for t in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def _header(cmd, args) -> str:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}
    lines = [f"ksat1rsb {__version__} {cmd}",
             "config " + " ".join(f"{k}={v}" for k, v in cfg.items()),
             f"seed {getattr(args, 'seed', 'none (deterministic)')}"]
    return "\n".join(lines)


def _emit_text(args, text):
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _comment(header):
    return "".join(f"# {line}\n" for line in header.splitlines())


def _say(msg):
    print(msg, file=sys.stderr)


def _load_graph(args):
    from .factor_graph import generate_instance, parse_dimacs
    if args.dimacs:
        with open(args.dimacs) as fh:
            return [parse_dimacs(fh.read(), args.k)]
    if args.n is None or args.alpha is None or args.k is None:
        raise UsageError("give --dimacs or all of --n --alpha --k")
    return [generate_instance(args.n, args.alpha, args.k, seed=args.seed + i) for i in range(args.count)]


# -- subcommands ------------------------------------------------------------------------

def cmd_popdyn(args):
    from .popdyn import Population, evolve, run_to_stationarity, snapshot_dumps, snapshot_load
    if args.snapshot_in:
        pop = snapshot_load(args.snapshot_in)
        pop = evolve(pop, args.iters or 1, args.seed, args.method, args.pool_factor, args.workers)
    else:
        _need(args, "k", "alpha", "pop")
        if args.iters:
            pop = evolve(Population.constant(args.pop, args.k, args.alpha, 0.5, args.seed), args.iters,
                         args.seed, args.method, args.pool_factor, args.workers)
        else:
            pop = run_to_stationarity(args.k, args.alpha, args.pop, args.seed, args.min_iters,
                                      args.max_iters, args.ratio_stop, args.method, args.pool_factor,
                                      args.workers)
    header = _header("popdyn", args)
    _emit_text(args, snapshot_dumps(pop, header))
    if args.history and pop.history:
        with open(args.history, "w", newline="\n") as fh:
            fh.write(_comment(header) + "iteration,w1\n")
            for i, w in enumerate(pop.history, 1):
                fh.write(f"{i},{w!r}\n")
    _say(f"popdyn: k={pop.k} alpha={pop.alpha} N={pop.N} iterations={pop.iteration} "
         f"clamps={pop.clamps} mean={pop.samples.mean():.6f}")


def _population(args):
    from .popdyn import run_to_stationarity, snapshot_load
    if args.snapshot:
        return snapshot_load(args.snapshot)
    _need(args, "k", "alpha", "pop")
    return run_to_stationarity(args.k, args.alpha, args.pop, args.seed, args.min_iters, args.max_iters,
                               args.ratio_stop, args.method, args.pool_factor, args.workers)


def cmd_phi(args):
    from .free_energy import phi_estimate
    pop = _population(args)
    alpha = pop.alpha if args.alpha is None else args.alpha
    est = phi_estimate(pop, alpha, args.samples, args.seed, args.estimator, args.method,
                       args.pool_factor, args.workers)
    rec = {"alpha": est.alpha, "k": est.k, "phi_mean": est.mean, "phi_stderr": est.stderr,
           "samples": est.samples, "clamp_count": est.clamp_count, "method": est.method,
           "pop_size": pop.N, "iters": pop.iteration}
    _emit_text(args, _comment(_header("phi", args)) + json.dumps(rec) + "\n")
    _say(f"phi({alpha}) = {est.mean:.6e} +- {est.stderr:.1e}")


def cmd_threshold(args):
    from .free_energy import BracketFailure, ThresholdConfig, find_threshold, write_audit
    cfg = ThresholdConfig(args.k, args.tol, args.pop, args.samples, args.seed, args.retries,
                          args.min_iters, args.max_iters, args.ratio_stop, args.method, args.pool_factor,
                          args.workers)
    header = _header("threshold", args)
    try:
        res = find_threshold(cfg, log=_say)
    except BracketFailure as exc:
        _say(f"bracket failure: {exc}")
        return EXIT_BRACKET
    write_audit(res, args.audit, header)
    if args.k < 8:
        _say("note: uniqueness of the zero is only known for large k; reporting the bisection result")
    rec = {"k": args.k, "alpha_star": res.alpha_star, "lo": res.lo, "hi": res.hi,
           "undecided": res.undecided, "audit": args.audit}
    _emit_text(args, _comment(header) + json.dumps(rec) + "\n")
    _say(f"alpha_star = {res.alpha_star:.6f}  bracket [{res.lo:.6f}, {res.hi:.6f}]  audit -> {args.audit}")


def cmd_moments(args):
    from .moments import curve_csv, moment_curve
    _need(args, "k", "alpha")
    curve = moment_curve(args.k, args.alpha, args.curve, args.grid)
    _emit_text(args, curve_csv(curve, _header("moments", args)))
    _say(f"moments: {args.curve} k={args.k} alpha={args.alpha} local maxima at {curve.flags['local_maxima']}")


def cmd_clusters(args):
    from .cluster_models import CENSUS_FIELDS, census
    import csv
    import io
    rows = [census(g, i) for i, g in enumerate(_load_graph(args))]
    buf = io.StringIO()
    buf.write(_comment(_header("clusters", args)))
    w = csv.DictWriter(buf, CENSUS_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({f: r[f] for f in CENSUS_FIELDS})
    _emit_text(args, buf.getvalue())
    for r in rows:
        _say(f"instance {r['instance_id']}: {r['solutions']} solutions, {r['clusters']} clusters, "
             f"{r['frozen']} frozen, {r['warnings']} warnings, {r['colorings']} colorings")


def cmd_treebp(args):
    from . import tree_bp as tb
    if args.fixture:
        with open(args.fixture) as fh:
            g, w = tb.parse_tree_fixture(fh.read())
    else:
        _need(args, "k", "clauses")
        g = tb.random_factor_tree(args.k, args.clauses, args.seed)
        w = tb.random_weights(g, args.seed)
    ms = tb.solve_tree_bp(g, w)
    lines = []
    marg = {}
    for e in sorted(ms.qdot):
        marg[e] = tb.edge_marginal(ms.qdot[e], ms.qhat[e])
        a, j = divmod(e, g.k)
        lines.append(json.dumps({"clause": a + 1, "slot": j + 1, "marginal": [float(x) for x in marg[e]]}))
    summary = {"residual": tb.bp_residual(g, w, ms), "z_identity_gap": tb.z_identity_gap(g, ms)}
    if args.check:
        edge, _, count, _ = tb.gibbs_marginals(g, w)
        summary["gibbs_max_error"] = max(float(np.max(np.abs(np.asarray(marg[e]) - np.asarray(edge[e]))))
                                        for e in marg)
        summary["colorings"] = int(count)
    lines.append(json.dumps(summary))
    _emit_text(args, _comment(_header("treebp", args)) + "\n".join(lines) + "\n")
    _say("treebp: " + ", ".join(f"{k}={v:.3g}" for k, v in summary.items()))


def cmd_bsp(args):
    from .preprocess import REMOVAL_FIELDS, bsp, bsp_prime
    from ._rng import substream
    import csv
    import io
    (g,) = _load_graph(args)
    if args.initial:
        A = [int(t) for t in args.initial.split(",") if t]
    else:
        rng = substream(args.seed, "bsp-initial")
        A = sorted(rng.choice(np.arange(1, g.n + 1), size=min(args.initial_count, g.n), replace=False).tolist())
    header = _header("bsp", args)
    buf = io.StringIO()
    buf.write(_comment(header))
    if args.mode == "plain":
        D = sorted(bsp(A, g))
        buf.write("variable\n" + "".join(f"{v}\n" for v in D))
        _say(f"bsp: |A|={len(A)} closure={len(D)} of n={g.n}")
    else:
        res = bsp_prime(A, g, args.R, args.trigger_radius, args.max_rounds)
        w = csv.DictWriter(buf, REMOVAL_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in res.log:
            w.writerow(row)
        _say(f"bsp_prime: |A|={len(A)} removed={len(res.removed)} of n={g.n} in {res.rounds} rounds")
    _emit_text(args, buf.getvalue())


def cmd_interp(args):
    from .free_energy import InterpolationConfig, interp_bound
    pop = _population(args)
    alpha = pop.alpha if args.alpha is None else args.alpha
    cfg = InterpolationConfig(pop.k, alpha, args.beta, args.m, args.inner, args.outer, args.seed,
                              workers=args.workers)
    est = interp_bound(cfg, pop)
    rec = {"k": pop.k, "alpha": alpha, "beta": cfg.beta, "m": cfg.m, "phi1": est.value,
           "stderr": est.stderr, "variable_term": est.variable_term, "clause_term": est.clause_term,
           "outer": est.outer_samples, "inner": est.inner_samples}
    _emit_text(args, _comment(_header("interp", args)) + json.dumps(rec) + "\n")
    _say(f"Phi_1 = {est.value:.6f} +- {est.stderr:.1e}")


def _need(args, *names):
    miss = [n for n in names if getattr(args, n, None) is None]
    if miss:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in miss))


# -- parser -------------------------------------------------------------------------------

def _pd_opts(p):
    p.add_argument("--k", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--pop", type=int, help="population size N")
    p.add_argument("--min-iters", type=int, default=10)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--ratio-stop", type=float, default=0.9)
    p.add_argument("--method", choices=["auto", "exact", "pooled"], default="auto")
    p.add_argument("--pool-factor", type=int, default=10)


def _graph_opts(p):
    p.add_argument("--dimacs")
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--k", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ksat1rsb", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config")
        p.add_argument("--out")
        p.add_argument("--workers", type=int, default=1)
        if name in RANDOMIZED:
            p.add_argument("--seed", help="integer seed or 'auto'")
        p.set_defaults(func=func)
        return p

    p = add("popdyn", cmd_popdyn, "run population dynamics, write a snapshot")
    _pd_opts(p)
    p.add_argument("--iters", type=int, help="fixed iteration count instead of the stopping rule")
    p.add_argument("--snapshot-in")
    p.add_argument("--history", help="CSV of successive W1 distances")

    p = add("phi", cmd_phi, "estimate the free energy")
    _pd_opts(p)
    p.add_argument("--snapshot")
    p.add_argument("--samples", type=int)
    p.add_argument("--estimator", choices=["control", "direct"], default="control")

    p = add("threshold", cmd_threshold, "bisection for the zero of the free energy")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--pop", type=int, default=10 ** 6)
    p.add_argument("--samples", type=int)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--min-iters", type=int, default=10)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--ratio-stop", type=float, default=0.9)
    p.add_argument("--method", choices=["auto", "exact", "pooled"], default="auto")
    p.add_argument("--pool-factor", type=int, default=10)
    p.add_argument("--audit", default="threshold_audit.csv")

    p = add("moments", cmd_moments, "first/second moment exponent curves")
    p.add_argument("--k", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--curve", default="phi", choices=["phi", "psi", "phi_minus_2phi1", "psi_minus_2psi1"])
    p.add_argument("--grid", type=int, default=1001)

    p = add("clusters", cmd_clusters, "exhaustive cluster census of small instances")
    _graph_opts(p)
    p.add_argument("--count", type=int, default=1)

    p = add("treebp", cmd_treebp, "exact BP on a weighted color-model tree")
    p.add_argument("--fixture")
    p.add_argument("--k", type=int)
    p.add_argument("--clauses", type=int)
    p.add_argument("--check", action="store_true", help="compare against exhaustive Gibbs")

    p = add("bsp", cmd_bsp, "bootstrap percolation and iterated ball removal")
    _graph_opts(p)
    p.add_argument("--mode", choices=["prime", "plain"], default="prime")
    p.add_argument("--R", type=float, default=2.0)
    p.add_argument("--trigger-radius", type=float)
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--initial", help="comma separated initial variables")
    p.add_argument("--initial-count", type=int, default=1)
    p.set_defaults(count=1)

    p = add("interp", cmd_interp, "nested Monte Carlo interpolation bound")
    _pd_opts(p)
    p.add_argument("--snapshot")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--m", type=float)
    p.add_argument("--inner", type=int, default=1000)
    p.add_argument("--outer", type=int, default=10000)
    return ap


def _apply_config(ap, argv):
    """Re-parse with config values as defaults so explicit flags override."""
    args = ap.parse_args(argv)
    if not args.config:
        return args
    cfg = read_config(args.config)
    sub = ap._subparsers._group_actions[0].choices[args.cmd]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, val in cfg.items():
        if key not in known or key in ("config", "func"):
            raise UsageError(f"unknown config key {key!r} for {args.cmd}")
        act = known[key]
        if act.nargs == 0:
            defaults[key] = val.lower() in ("1", "true", "yes")
        else:
            defaults[key] = act.type(val) if act.type else val
        act.required = False
    sub.set_defaults(**defaults)
    return ap.parse_args(argv)


def main(argv=None) -> int:
    from .cluster_models import BudgetExceeded as ClusterBudget
    from .moments import BudgetExceeded as MomentBudget
    ap = build_parser()
    try:
        try:
            args = _apply_config(ap, argv)
        except SystemExit as exc:
            return EXIT_USAGE if exc.code else 0
        if args.cmd in RANDOMIZED:
            if args.seed is None:
                raise UsageError("--seed is required (an integer, or 'auto')")
            auto = args.seed == "auto"
            args.seed = resolve_seed(args.seed)
            if auto:
                _say(f"seed auto -> {args.seed}")
        if args.workers < 1:
            raise UsageError("--workers must be positive")
        code = args.func(args)
        return code or 0
    except UsageError as exc:
        _say(f"usage error: {exc}")
        return EXIT_USAGE
    except (ClusterBudget, MomentBudget) as exc:
        _say(f"budget exceeded: {exc}")
        return EXIT_BUDGET
    except (ValueError, OSError) as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
