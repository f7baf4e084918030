"""Command-line interface: analytic tables, tree generation, simulation dumps and checks.

Exit status is 0 on success, 1 when a verification check fails and 2 on a
usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import coalescent as co
from . import rrp, simulation as sim
from .errors import DomainError, NumericalError, PopulationOverflowError
from .model import ModelParams, TimeWindow
from .rng import DEFAULT_SEED, SeededSource

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
QS_TAIL_TOL = 1e-13


class UsageError(Exception):
    pass


def fmt(value) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _json(obj) -> str:
    # json writes floats with repr, the shortest string that round-trips exactly
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _table(header, rows, output_format):
    if output_format == "json":
        return _json([dict(zip(header, (_plain(v) for v in row))) for row in rows])
    if output_format != "csv":
        raise UsageError(f"format {output_format!r} is not available for this command")
    return _csv(header, rows)


def _plain(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-")
                                                                    for m in missing))


# -- commands -------------------------------------------------------------------

def cmd_pmf(args) -> str:
    """Law of the population (or, with --n, sample) ancestor count at lookback s."""
    _require(args, "t", "s", "alpha", "x0")
    window = TimeWindow(args.t, args.s)
    params = ModelParams(args.alpha, args.x0)
    if args.n is None:
        dist = co.population_ancestors_distribution(window, params, args.conditioned, args.tail_tol)
        label = "k"
    else:
        if args.n < 1:
            raise UsageError("--n must be a positive integer")
        label = "j"
        if args.n == 1:
            # a single individual always has exactly one ancestor
            dist = co.DiscretePmf(1, np.array([1.0]))
        else:
            dist = co.sample_ancestors_distribution(args.n, window, params, args.tail_tol)
    rows = [(k, p, dist.truncation_tail_bound) for k, p in zip(dist.support, dist.probabilities)]
    return _table([label, "probability", "truncation_bound"], rows, args.format)


def _qs_population_rows(args):
    k = 1
    rows = []
    cum = 0.0
    kmax = args.kmax
    while True:
        p = float(co.qs_population_ancestors_pmf(k, args.s, args.alpha))
        cum += p
        rows.append((k, p, max(1.0 - cum, 0.0)))
        if (kmax is not None and k >= kmax) or (kmax is None and 1.0 - cum < QS_TAIL_TOL):
            return rows
        k += 1


def cmd_qs(args) -> str:
    """Quasi-stationary tables for a subcritical process conditioned on survival."""
    _require(args, "alpha")
    if not args.alpha < 0:
        raise UsageError("qs needs --alpha < 0")
    tables = {}
    if args.s is not None:
        tables["population_ancestors"] = (["k", "probability", "tail_mass"], _qs_population_rows(args))
        kmax = args.kmax or 10
        tables["tk_survival"] = (["k", "survival"],
                                 [(k, float(co.qs_Tk_survival(k, args.s, args.alpha)))
                                  for k in range(2, kmax + 1)])
    kmax = args.kmax or 10
    tables["mean_wk"] = (["k", "mean"], [(k, co.qs_mean_Wk(k, args.alpha)) for k in range(2, kmax + 1)])
    if args.n is not None:
        if args.s is None:
            raise UsageError("the sample table needs --s")
        tables["sample_ancestors"] = (["j", "probability"],
                                      [(j, co.qs_sample_ancestors_pmf(j, args.n, args.s, args.alpha))
                                       for j in range(1, args.n + 1)])
    ws = np.linspace(0.0, args.wmax / abs(args.alpha), args.wpoints + 1)
    surv = co.qs_Wk_survival(ws, args.k, args.alpha)
    tables["wk_survival"] = (["w", "survival"], list(zip(ws, np.atleast_1d(surv))))
    if args.table != "all":
        key = args.table.replace("-", "_")
        if key not in tables:
            raise UsageError(f"table {args.table} needs more options (see --help)")
        header, rows = tables[key]
        return _table(header, rows, args.format)
    if args.format != "json":
        parts = []
        for name, (header, rows) in tables.items():
            parts.append(f"# {name}\n" + _csv(header, rows))
        return "\n".join(parts)
    return _json({name: [dict(zip(h, (_plain(v) for v in r))) for r in rows]
                  for name, (h, rows) in tables.items()})


def cmd_rrp_tree(args) -> str:
    """Random reversed reconstructed tree for alpha > 0."""
    _require(args, "n", "s", "alpha")
    if not args.alpha > 0:
        raise UsageError("rrp-tree needs --alpha > 0")
    if args.n < 1:
        raise UsageError("--n must be a positive integer")
    tree = rrp.generate_rrp_tree(args.n, args.s, args.alpha, SeededSource(args.seed))
    if args.format == "newick":
        return tree.to_newick() + "\n"
    if args.format == "csv":
        return tree.to_csv()
    return _json({"leaf_count": tree.leaf_count, "newick": tree.to_newick(),
                  "coalescence_times": list(tree.coalescence_times),
                  "origin_time": tree.origin_time, "seed": args.seed})


def cmd_simulate(args) -> str:
    """Monte Carlo dump, one row per replicate."""
    source = SeededSource(args.seed)
    size = args.size
    what = args.what
    if what == "feller":
        _require(args, "t", "alpha", "x0")
        values = sim.sample_feller_transition(args.t, ModelParams(args.alpha, args.x0), size, source,
                                              conditioned_on_survival=args.conditioned)
        return _table(["replicate", "x"], list(enumerate(values)), args.format)
    if what in ("population-ancestors", "sample-ancestors"):
        _require(args, "t", "s", "alpha", "x0")
        window, params = TimeWindow(args.t, args.s), ModelParams(args.alpha, args.x0)
        if what == "population-ancestors":
            values = sim.sample_population_ancestors(window, params, size, source, args.conditioned)
        else:
            _require(args, "n")
            values = sim.sample_sample_ancestors(args.n, window, params, size, source)
        return _table(["replicate", "ancestors"], list(enumerate(values)), args.format)
    if what == "nhpp":
        _require(args, "x", "alpha", "tau_min")
        taus = sim.sample_coalescent_times_nhpp_batch(args.x, args.alpha, args.tau_min, size, source)
        rows = []
        for r, row in enumerate(taus):
            kept = row[~np.isnan(row)]
            rows.append((r, len(kept), ";".join(fmt(v) for v in kept)))
        return _table(["replicate", "points", "times"], rows, args.format)
    if what == "bd":
        _require(args, "s", "alpha", "horizon", "m0")
        rates = rrp.bd_rates(args.s, args.alpha)
        values = sim.simulate_bd_final(args.m0, rates, args.horizon, size, source)
        return _table(["replicate", "count"], list(enumerate(values)), args.format)
    if what == "bgw":
        _require(args, "alpha", "x0", "y0", "generations")
        scale = sim.bgw_scale_for(ModelParams(args.alpha, args.x0), args.y0, args.offspring)
        values = sim.sample_bgw_population(scale, args.offspring, args.generations, size, source)
        return _table(["replicate", "count"], list(enumerate(values)), args.format)
    raise UsageError(f"unknown simulation {what!r}")


def cmd_verify(args):
    from .verification import CHECKS, run_checks
    unknown = [n for n in (args.only or []) if n not in CHECKS]
    if unknown:
        raise UsageError(f"unknown check(s) {', '.join(unknown)}; choose from {', '.join(CHECKS)}")
    report = run_checks(args.only, seed=args.seed)
    text = _json(report)
    for check in report["checks"]:
        flag = "PASS" if check["passed"] else "FAIL"
        print(f"[{flag}] {check['group']}/{check['name']}", file=sys.stderr)
    return text, (EXIT_OK if report["passed"] else EXIT_FAILED)


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fellercoal",
        description="Ancestor counts and coalescent times of Feller branching diffusions.",
        epilog=f"Random commands use --seed, default {DEFAULT_SEED}. "
               "Exit status: 0 success, 1 failed verification, 2 usage error.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, formats=("csv", "json"), default="csv"):
        p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                       help=f"random seed (default {DEFAULT_SEED})")
        p.add_argument("--format", choices=formats, default=default)
        p.add_argument("--output", "-o", default="-", help="output file, '-' for stdout")

    p = sub.add_parser("pmf", help="ancestor-count law at lookback s")
    p.add_argument("--t", type=float, help="time since the process started")
    p.add_argument("--s", type=float, help="lookback time, 0 < s <= t")
    p.add_argument("--alpha", type=float, help="drift")
    p.add_argument("--x0", type=float, help="initial scaled population")
    p.add_argument("--n", type=int, help="sample size (omit for the whole population)")
    p.add_argument("--conditioned", action="store_true", help="condition on survival to t")
    p.add_argument("--tail-tol", type=float, default=co.TAIL_TOL)
    common(p)
    p.set_defaults(func=cmd_pmf)

    p = sub.add_parser("qs", help="quasi-stationary tables (alpha < 0)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--s", type=float, help="lookback time")
    p.add_argument("--n", type=int, help="sample size for the sample table")
    p.add_argument("--k", type=int, default=2, help="lineage count for the W_k survival curve")
    p.add_argument("--kmax", type=int, help="largest k tabulated")
    p.add_argument("--wmax", type=float, default=5.0, help="W_k grid end in units of 1/|alpha|")
    p.add_argument("--wpoints", type=int, default=50)
    p.add_argument("--table", default="all",
                   choices=["all", "population-ancestors", "tk-survival", "mean-wk",
                            "sample-ancestors", "wk-survival"])
    common(p)
    p.set_defaults(func=cmd_qs)

    p = sub.add_parser("rrp-tree", help="random reversed reconstructed tree (alpha > 0)")
    p.add_argument("--n", type=int, help="number of leaves")
    p.add_argument("--s", type=float, help="scale at which the tree starts")
    p.add_argument("--alpha", type=float)
    common(p, formats=("newick", "csv", "json"), default="newick")
    p.set_defaults(func=cmd_rrp_tree)

    p = sub.add_parser("simulate", help="Monte Carlo dump, one row per replicate")
    p.add_argument("what", choices=["feller", "population-ancestors", "sample-ancestors",
                                    "nhpp", "bd", "bgw"])
    p.add_argument("--size", type=int, default=1000)
    p.add_argument("--t", type=float)
    p.add_argument("--s", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--x0", type=float)
    p.add_argument("--x", type=float, help="current scaled population (nhpp)")
    p.add_argument("--n", type=int)
    p.add_argument("--tau-min", type=float, help="lower truncation of coalescence times (nhpp)")
    p.add_argument("--horizon", type=float, help="bd run length")
    p.add_argument("--m0", type=int, help="bd initial count")
    p.add_argument("--y0", type=int, help="bgw total initial population")
    p.add_argument("--generations", type=int)
    p.add_argument("--offspring", choices=sim.OFFSPRING_LAWS, default="poisson")
    p.add_argument("--conditioned", action="store_true")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run verification checks, JSON report on stdout")
    p.add_argument("--only", action="append", metavar="CHECK",
                   help="run only this check group (repeatable)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help=f"random seed (default {DEFAULT_SEED})")
    p.add_argument("--output", "-o", default="-")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    status = EXIT_OK
    try:
        result = args.func(args)
        if isinstance(result, tuple):
            result, status = result
    except (UsageError, DomainError, KeyError) as exc:
        print(f"fellercoal {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, PopulationOverflowError) as exc:
        print(f"fellercoal {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    if args.output == "-":
        sys.stdout.write(result)
    else:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(result)
    return status


if __name__ == "__main__":
    sys.exit(main())
