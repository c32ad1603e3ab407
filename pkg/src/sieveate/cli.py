"""Command-line interface: ``sieveate estimate`` and ``sieveate simulate``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 estimation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from .ate import METHODS, estimate
from .data import DataError
from .io import ColumnMapping, ingest
from .linear import EstimationError
from .sieve import FitOptions, SieveFitError
from .simlab import (
    ScenarioSpec,
    dump_datasets,
    format_table,
    records_csv,
    run_monte_carlo,
    summary_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ESTIMATION = 0, 1, 2, 3

log = logging.getLogger("sieveate")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _csv_list(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _methods(text):
    methods = tuple(m.replace("-", "_") for m in _csv_list(text))
    unknown = [m for m in methods if m not in METHODS]
    if unknown or not methods:
        raise argparse.ArgumentTypeError(
            f"unknown method(s) {unknown}; choose from {', '.join(m.replace('_', '-') for m in METHODS)}"
        )
    return methods


def _k_policy(text):
    if text == "auto":
        return None
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--k must be 'auto' or a positive integer, got {text!r}") from None
    if k < 1:
        raise argparse.ArgumentTypeError(f"--k must be positive, got {k}")
    return k


def _add_fit_options(p):
    g = p.add_argument_group("sieve fitting")
    g.add_argument("--k", type=_k_policy, default=None, help="sieve order: 'auto' (cross-validated) or an integer")
    g.add_argument("--k-grid", type=lambda s: tuple(int(v) for v in _csv_list(s)), default=tuple(range(2, 11)),
                   help="candidate orders for --k auto (default 2,...,10)")
    g.add_argument("--folds", type=int, default=5)
    g.add_argument("--tolerance", type=float, default=1e-8)
    g.add_argument("--max-iterations", type=int, default=500)
    g.add_argument("--clamp", type=float, default=30.0, help="bound on the logistic linear predictor")
    g.add_argument("--coef-bound", type=float, default=1e3, help="norm bound on sieve coefficients")


def build_parser():
    parser = _Parser(prog="sieveate", description="Average treatment effects with Hermite-sieve single-index models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    est = sub.add_parser("estimate", help="estimate the treatment effect from a CSV file")
    est.add_argument("--input", required=True, type=Path)
    est.add_argument("--outcome", required=True)
    est.add_argument("--treatment", required=True)
    est.add_argument("--covariates", type=_csv_list, default=())
    est.add_argument("--categorical", type=_csv_list, default=())
    est.add_argument("--standardize", action="store_true", help="z-score covariates before fitting")
    est.add_argument("--methods", type=_methods, default=METHODS)
    est.add_argument("--out", type=Path, help="write the estimates as JSON")
    _add_fit_options(est)

    sim = sub.add_parser("simulate", help="Monte Carlo study of one simulation design")
    sim.add_argument("--scenario", required=True, choices=("I", "II", "III"))
    sim.add_argument("--n", required=True, type=int)
    sim.add_argument("--alpha", type=float, default=0.0)
    sim.add_argument("--reps", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--methods", type=_methods, default=METHODS)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--out", type=Path, help="output prefix: writes PREFIX.txt, PREFIX.csv, PREFIX.replicates.csv")
    sim.add_argument("--dump-data", type=Path, help="also write every replicate dataset as CSV into this directory")
    _add_fit_options(sim)
    return parser


def _options(args):
    return FitOptions(
        tolerance=args.tolerance,
        max_iterations=args.max_iterations,
        k=args.k,
        k_grid=args.k_grid,
        folds=args.folds,
        clamp=args.clamp,
        coef_bound=args.coef_bound,
    )


def _fmt(x):
    return "nan" if x is None else f"{x:.10g}"


def _run_estimate(args, options, out):
    mapping = ColumnMapping(args.outcome, args.treatment, args.covariates, args.categorical)
    if not mapping.covariate_columns:
        raise UsageError("estimate needs --covariates and/or --categorical")
    data = ingest(args.input, mapping, standardize=args.standardize)
    print(f"n={data.n} p={data.p} treated={int(data.treatment.sum())}", file=out)
    records = []
    for method in args.methods:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                est = estimate(data, method, options)
        except (EstimationError, SieveFitError) as exc:
            raise EstimationError(f"{method}: {exc}") from exc
        rec = est.to_record()
        records.append(rec)
        ks = f" k_treatment={rec['k_treatment']} k_outcome={rec['k_outcome']}" if rec["k_outcome"] else ""
        print(
            f"{method:<14} alpha={_fmt(rec['alpha'])} se={_fmt(rec['std_error'])} "
            f"ci=[{_fmt(rec['ci_low'])}, {_fmt(rec['ci_high'])}] p={_fmt(rec['p_value'])}{ks}",
            file=out,
        )
        for w in rec["warnings"]:
            print(f"  warning: {w}", file=out)
    if args.out:
        args.out.write_text(json.dumps({"n": data.n, "covariates": list(data.column_names), "estimates": records}, indent=2))
    return EXIT_OK


def _run_simulate(args, options, out):
    if args.reps < 2:
        raise UsageError("--reps must be at least 2")
    spec = ScenarioSpec(args.scenario, args.n, args.alpha)
    rows = run_monte_carlo(spec, args.reps, args.seed, args.methods, options, workers=args.workers)
    table = format_table(rows)
    out.write(table)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        Path(f"{args.out}.txt").write_text(table)
        Path(f"{args.out}.csv").write_text(summary_csv(rows))
        Path(f"{args.out}.replicates.csv").write_text(records_csv(rows))
    if args.dump_data:
        dump_datasets(spec, args.seed, args.reps, args.dump_data)
    return EXIT_OK


def main(argv=None, out=None):
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        options = _options(args)
        if args.command == "estimate":
            return _run_estimate(args, options, out)
        return _run_simulate(args, options, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EstimationError, SieveFitError) as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
