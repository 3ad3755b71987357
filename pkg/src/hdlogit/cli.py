"""Command-line front end.

Subcommands::

    hdlogit fit DATA.csv --outcome NAME [--level L] [--method M] ...
    hdlogit solve --kappa K (--gamma G | --eta E) [...]
    hdlogit simulate CONFIG [--out DIR] [--jobs N] [--plot-data]
    hdlogit frontier [--build --out TABLE.csv ...]

stdout carries exactly one machine-readable JSON document on success;
human-readable diagnostics and structured errors go to stderr. Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical failure (separable
data, no convergence, outside the existence region).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .data_model import DataError, Dataset, load_csv
from .inference import (CLASSICAL, CORRECTED, EMPIRICAL_COV, IDENTITY_COV,
                        classical_inference, classical_prediction,
                        coefficient_inference, prediction_inference)
from .logistic_mle import (NotConvergedError, SeparableDataError,
                           SingularHessianError, fit_mle)
from .probe_frontier import (FrontierOutOfRangeError, build_frontier,
                             default_frontier_table, load_frontier_csv)
from .simulation_harness import parse_config_file, run
from .sloe_estimator import (LeverageAtOneError, SeparableSubproblemError,
                             corrupted_signal_strength, sloe_logits)
from .state_evolution import (InconsistentEtaError, NoConvergenceError,
                              OutsideExistenceRegionError, solve_eta, solve_gamma)

SCHEMA_VERSION = "1"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

_DATA_ERRORS = (DataError, FileNotFoundError, IsADirectoryError, PermissionError,
                ValueError)
_NUMERICAL_ERRORS = (SeparableDataError, SingularHessianError, NotConvergedError,
                     LeverageAtOneError, SeparableSubproblemError,
                     NoConvergenceError, OutsideExistenceRegionError,
                     InconsistentEtaError, FrontierOutOfRangeError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage problems; the CLI contract wants 1
    def error(self, message):
        raise _UsageError(message)


def _emit(payload: dict) -> None:
    payload = {"schema_version": SCHEMA_VERSION, "package_version": __version__,
               **payload}
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _emit_error(exc: Exception, code: int) -> int:
    err = {"error": {"type": type(exc).__name__, "message": str(exc),
                     "exit_code": code}}
    json.dump(err, sys.stderr, indent=2)
    sys.stderr.write("\n")
    return code


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".hdlogit-tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _standardize_pair(train: np.ndarray, test: np.ndarray | None):
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    if np.any(sd <= 0):
        raise DataError("a feature column is constant and cannot be standardized")
    train_s = (train - mu) / sd
    test_s = None if test is None else (test - mu) / sd
    return train_s, test_s


def _load_test_rows(path: str, names: list) -> np.ndarray:
    import csv as _csv
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = _csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != names:
            raise DataError(
                f"{path}: test columns {header} do not match training features {names}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell") from None
    if not rows:
        raise DataError(f"{path}: no test rows")
    return np.asarray(rows, dtype=float)


def cmd_fit(args) -> int:
    if not 0.0 < args.level < 1.0:
        raise _UsageError(f"--level must lie in (0, 1), got {args.level}")
    raw = load_csv(args.csv, args.outcome, standardize=False)
    X = np.asarray(raw.features)
    X_test = _load_test_rows(args.test_csv, raw.column_names) if args.test_csv else None
    if args.standardize:
        X, X_test = _standardize_pair(X, X_test)
    data = Dataset(X, raw.outcomes, standardized=args.standardize,
                   column_names=raw.column_names)
    fit = fit_mle(data)
    if not fit.converged:
        raise NoConvergenceError(
            f"MLE did not converge in {fit.iterations} iterations "
            f"(grad norm {fit.grad_norm:.3g})")
    report = {
        "command": "fit",
        "config": {"csv": args.csv, "outcome": args.outcome, "level": args.level,
                   "method": args.method, "covariance": args.covariance,
                   "standardize": args.standardize, "test_csv": args.test_csv},
        "data": {"n": data.n, "d": data.d, "kappa": data.kappa,
                 "standardized": data.standardized},
    }
    if args.method in ("corrected", "both"):
        est = corrupted_signal_strength(sloe_logits(fit, data))
        params = solve_eta(data.kappa, np.sqrt(est.eta_sq))
        corrected = coefficient_inference(fit, params, args.level, data=data,
                                          covariance=args.covariance)
        report["eta_sq"] = est.eta_sq
        report["eta_method"] = est.method
        report["corrected"] = corrected.to_dict()
        if X_test is not None:
            report["corrected"]["test_points"] = [
                prediction_inference(fit, params, x, args.level, data=data,
                                     covariance=args.covariance)
                for x in X_test
            ]
    if args.method in ("classical", "both"):
        classical = classical_inference(fit, args.level, data=data)
        report["classical"] = classical.to_dict()
        if X_test is not None:
            report["classical"]["test_points"] = [
                classical_prediction(fit, x, args.level) for x in X_test
            ]
    _emit(report)
    return EXIT_OK


def cmd_solve(args) -> int:
    if (args.gamma is None) == (args.eta is None):
        raise _UsageError("provide exactly one of --gamma or --eta")
    if args.gamma is not None:
        params = solve_gamma(args.kappa, args.gamma, order=args.order, tol=args.tol)
    else:
        params = solve_eta(args.kappa, args.eta, order=args.order, tol=args.tol)
    _emit({
        "command": "solve",
        "config": {"kappa": args.kappa, "gamma": args.gamma, "eta": args.eta,
                   "order": args.order, "tol": args.tol},
        "alpha": params.alpha, "sigma_star": params.sigma_star, "lambda": params.lam,
        "gamma_sq": params.gamma_sq, "eta_sq": params.eta_sq,
        "residual_norm": params.residual_norm, "iterations": params.iterations,
    })
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = parse_config_file(args.config)
    overrides = {}
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.plot_data:
        overrides["keep_raw"] = True
    if overrides:
        from dataclasses import replace
        config = replace(config, **overrides)
    result = run(config)
    os.makedirs(args.out, exist_ok=True)
    json_path = os.path.join(args.out, f"{config.experiment}_result.json")
    csv_path = os.path.join(args.out, f"{config.experiment}_result.csv")
    _atomic_write(json_path, result.to_json())
    _atomic_write(csv_path, result.to_csv())
    _print_summary(result)
    _emit({"command": "simulate", "experiment": config.experiment,
           "config": result.config, "rows": len(result.rows),
           "files": [json_path, csv_path]})
    return EXIT_OK


def _print_summary(result) -> None:
    if not result.rows:
        return
    columns = []
    for row in result.rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    widths = {c: max(len(str(c)), *(len(_fmt(r.get(c))) for r in result.rows))
              for c in columns}
    line = "  ".join(str(c).ljust(widths[c]) for c in columns)
    print(line, file=sys.stderr)
    for row in result.rows:
        print("  ".join(_fmt(row.get(c)).ljust(widths[c]) for c in columns),
              file=sys.stderr)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def cmd_frontier(args) -> int:
    if args.build:
        if not args.out:
            raise _UsageError("--build requires --out PATH")
        grid = np.array([float(g) for g in args.gamma_grid.split(",")])
        table = build_frontier(grid, n_sim=args.n_sim, reps=args.reps,
                               seed=args.seed, workers=args.workers)
        table.save_csv(args.out)
        _emit({"command": "frontier", "built": args.out,
               "config": {"gamma_grid": grid.tolist(), "n_sim": args.n_sim,
                          "reps": args.reps, "seed": args.seed},
               "rows": len(table.gamma)})
        return EXIT_OK
    table = load_frontier_csv(args.table) if args.table else default_frontier_table()
    _emit({"command": "frontier",
           "provenance": {k: str(v) for k, v in table.provenance.items()},
           "gamma": table.gamma.tolist(),
           "kappa_star": table.kappa_star_values.tolist()})
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="hdlogit",
                     description="Dimensionality-corrected logistic regression inference")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a CSV dataset and report corrected inference")
    p_fit.add_argument("csv", help="training data: header row, one {0,1} outcome column")
    p_fit.add_argument("--outcome", required=True, help="name of the outcome column")
    p_fit.add_argument("--level", type=float, default=0.95)
    p_fit.add_argument("--method", choices=("corrected", "classical", "both"),
                       default="both")
    p_fit.add_argument("--covariance", choices=(IDENTITY_COV, EMPIRICAL_COV),
                       default=EMPIRICAL_COV,
                       help="error scaling for non-isotropic designs (default empirical)")
    p_fit.add_argument("--standardize", action="store_true",
                       help="center and scale the feature columns first")
    p_fit.add_argument("--test-csv", default=None,
                       help="optional test rows (feature columns only) for prediction CIs")
    p_fit.set_defaults(fn=cmd_fit)

    p_solve = sub.add_parser("solve", help="solve the fixed-point system directly")
    p_solve.add_argument("--kappa", type=float, required=True)
    p_solve.add_argument("--gamma", type=float, default=None)
    p_solve.add_argument("--eta", type=float, default=None)
    p_solve.add_argument("--order", type=int, default=60,
                         help="Gauss-Hermite nodes per axis")
    p_solve.add_argument("--tol", type=float, default=1e-10)
    p_solve.set_defaults(fn=cmd_solve)

    p_sim = sub.add_parser("simulate", help="run a Monte-Carlo experiment from a config")
    p_sim.add_argument("config", help="flat key=value config file")
    p_sim.add_argument("--out", default=".", help="output directory")
    p_sim.add_argument("--jobs", type=int, default=None, help="worker processes")
    p_sim.add_argument("--plot-data", action="store_true",
                       help="retain raw per-replication records in the JSON output")
    p_sim.set_defaults(fn=cmd_simulate)

    p_fr = sub.add_parser("frontier", help="show or rebuild the separability frontier table")
    p_fr.add_argument("--table", default=None, help="show a specific table CSV")
    p_fr.add_argument("--build", action="store_true", help="rebuild by Monte Carlo")
    p_fr.add_argument("--out", default=None, help="where to write the built table")
    p_fr.add_argument("--gamma-grid",
                      default="0.05,0.25,0.5,0.75,1.0,1.5,2.0,2.5,3.0,4.0,5.0,6.0")
    p_fr.add_argument("--n-sim", type=int, default=1000)
    p_fr.add_argument("--reps", type=int, default=100)
    p_fr.add_argument("--seed", type=int, default=0)
    p_fr.add_argument("--workers", type=int, default=1)
    p_fr.set_defaults(fn=cmd_frontier)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        return _emit_error(exc, EXIT_USAGE)
    try:
        return args.fn(args)
    except _UsageError as exc:
        return _emit_error(exc, EXIT_USAGE)
    except _NUMERICAL_ERRORS as exc:
        if isinstance(exc, SeparableDataError):
            exc = SeparableDataError("data linearly separable; MLE does not exist")
        return _emit_error(exc, EXIT_NUMERICAL)
    except _DATA_ERRORS as exc:
        return _emit_error(exc, EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
