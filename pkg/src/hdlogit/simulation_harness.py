"""Monte-Carlo experiments: coverage, null p-values, estimator convergence,
runtime, bootstrap baseline, and false-discovery calibration.

Every experiment is driven by a flat :class:`ExperimentConfig` and returns
an :class:`ExperimentResult` holding tidy rows (one per grid point per
method) plus full drop accounting: a replication is never silently
discarded, it is counted as dropped with a reason (separable data or a
solver failure near the frontier). Replications run in a process pool when
``jobs > 1``; each replication derives its own random stream from
(seed, grid index, rep index), so results are identical for any worker
count.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.special import expit
from scipy.stats import kstest

from .data_model import Dataset, simulate_dataset
from .inference import (CLASSICAL, CORRECTED, classical_inference,
                        classical_prediction_bands, coefficient_inference,
                        corrected_prediction_bands, bh_procedure)
from .logistic_mle import SeparableDataError, fit_mle
from .probe_frontier import probe_frontier_gamma
from .sloe_estimator import corrupted_signal_strength, sloe_logits
from .state_evolution import (InconsistentEtaError, NoConvergenceError,
                              OutsideExistenceRegionError, solve_eta, solve_gamma)

BOOTSTRAP = "BOOTSTRAP"

EXPERIMENTS = ("coverage", "null_pvalues", "sloe_convergence", "runtime",
               "bootstrap", "fdr")

_SOLVER_ERRORS = (NoConvergenceError, OutsideExistenceRegionError, InconsistentEtaError)


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat description of one Monte-Carlo experiment."""

    experiment: str
    n_grid: tuple = (1000,)
    kappa_grid: tuple = (0.1,)
    gamma_sq_grid: tuple = (1.0,)
    feature_family: str = "gaussian"
    reps: int = 100
    level: float = 0.9
    methods: tuple = (CORRECTED, CLASSICAL)
    seed: int = 0
    jobs: int = 1
    test_size: int = 1000
    bootstrap_b: int = 200
    q_grid: tuple = (0.1, 0.2, 0.3)
    subsample_reps: int = 11
    keep_raw: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; "
                             f"choose from {EXPERIMENTS}")
        for name in ("n_grid", "kappa_grid", "gamma_sq_grid", "methods", "q_grid"):
            val = getattr(self, name)
            if not isinstance(val, tuple):
                object.__setattr__(self, name, tuple(val))
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must be non-empty")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if self.feature_family not in ("gaussian", "gwas"):
            raise ValueError("feature_family must be 'gaussian' or 'gwas'")
        for m in self.methods:
            if m not in (CORRECTED, CLASSICAL, BOOTSTRAP):
                raise ValueError(f"unknown method {m!r}")
        for n in self.n_grid:
            for kappa in self.kappa_grid:
                if int(round(kappa * n)) < 8:
                    raise ValueError(
                        f"grid point n={n}, kappa={kappa} gives d < 8")

    @staticmethod
    def from_mapping(mapping: dict) -> "ExperimentConfig":
        """Build a config from string-valued keys (the config-file format)."""
        known = {f.name: f for f in fields(ExperimentConfig)}
        aliases = {"n": "n_grid", "kappa": "kappa_grid", "gamma_sq": "gamma_sq_grid"}
        kwargs = {}
        for raw_key, raw_val in mapping.items():
            key = aliases.get(raw_key, raw_key)
            if key not in known:
                raise ValueError(f"unknown config key {raw_key!r}")
            kwargs[key] = _coerce(key, raw_val)
        if "experiment" not in kwargs:
            raise ValueError("config must set 'experiment'")
        return ExperimentConfig(**kwargs)

    def resolved(self) -> dict:
        return asdict(self)


def _coerce(key: str, val):
    if not isinstance(val, str):
        return val
    items = [v.strip() for v in val.split(",") if v.strip()]
    if key in ("n_grid",):
        return tuple(int(v) for v in items)
    if key in ("kappa_grid", "gamma_sq_grid", "q_grid"):
        return tuple(float(v) for v in items)
    if key in ("methods",):
        return tuple(v.upper() for v in items)
    if key in ("experiment", "feature_family"):
        return val.strip().lower()
    if key in ("keep_raw",):
        return val.strip().lower() in ("1", "true", "yes")
    if key in ("level",):
        return float(val)
    return int(val)


def parse_config_file(path) -> ExperimentConfig:
    """Read `key = value` lines ('#' starts a comment, lists are comma-separated)."""
    mapping = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = line.split("=", 1)
            mapping[key.strip()] = val.strip()
    return ExperimentConfig.from_mapping(mapping)


@dataclass
class ExperimentResult:
    """Tidy rows plus raw per-rep records and the resolved configuration."""

    experiment: str
    config: dict
    rows: list
    raw: list = field(default_factory=list)

    def to_json(self) -> str:
        payload = {"experiment": self.experiment, "config": self.config,
                   "rows": self.rows}
        if self.config.get("keep_raw"):
            payload["raw"] = self.raw
        return json.dumps(payload, indent=2, sort_keys=True, default=_json_default)

    def to_csv(self) -> str:
        if not self.rows:
            return ""
        columns = []
        for row in self.rows:
            for key in row:
                if key not in columns:
                    columns.append(key)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _csv_cell(row.get(k)) for k in columns})
        return buf.getvalue()


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def _rep_rng_key(config: ExperimentConfig, grid_index: int, rep: int) -> list:
    return [config.seed, grid_index, rep]


def _map_tasks(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks, chunksize=1))
    return [fn(t) for t in tasks]


def _binomial_se(p: float, count: int) -> float:
    if count <= 0:
        return float("nan")
    return float(np.sqrt(max(p * (1.0 - p), 0.0) / count))


def run(config: ExperimentConfig) -> ExperimentResult:
    """Dispatch on the experiment name."""
    runner = {
        "coverage": run_coverage,
        "null_pvalues": run_null_pvalues,
        "sloe_convergence": run_sloe_convergence,
        "runtime": run_runtime,
        "bootstrap": run_bootstrap_baseline,
        "fdr": run_fdr_calibration,
    }[config.experiment]
    return runner(config)


# ---------------------------------------------------------------------------
# Coverage of prediction intervals


def _coverage_rep(task):
    config, grid_index, n, kappa, gamma_sq, rep = task
    d = int(round(kappa * n))
    key = _rep_rng_key(config, grid_index, rep)
    data, truth = simulate_dataset(n, d, np.sqrt(gamma_sq), config.feature_family,
                                   seed=key)
    out = {"rep": rep, "status": "ok"}
    try:
        fit = fit_mle(data)
    except SeparableDataError:
        out["status"] = "separable"
        return out
    if not fit.converged:
        out["status"] = "solver_failure"
        return out
    test_n = min(n, config.test_size)
    test_data, _ = simulate_dataset(test_n, d, 0.0, config.feature_family,
                                    seed=key + [1])
    X_test = test_data.features
    mu_true = expit(X_test @ truth.beta)
    if CORRECTED in config.methods:
        try:
            est = corrupted_signal_strength(sloe_logits(fit, data))
            params = solve_eta(data.kappa, np.sqrt(est.eta_sq))
        except _SOLVER_ERRORS:
            out["status"] = "solver_failure"
            return out
        lo, hi, llo, lhi = corrected_prediction_bands(fit, params, X_test, config.level)
        out["CORRECTED"] = {"coverage": float(np.mean((lo <= mu_true) & (mu_true <= hi))),
                            "width": float(np.mean(hi - lo)),
                            "eta_sq": est.eta_sq, "alpha": params.alpha}
    if CLASSICAL in config.methods:
        lo, hi, llo, lhi = classical_prediction_bands(fit, X_test, config.level)
        out["CLASSICAL"] = {"coverage": float(np.mean((lo <= mu_true) & (mu_true <= hi))),
                            "width": float(np.mean(hi - lo))}
    return out


def run_coverage(config: ExperimentConfig) -> ExperimentResult:
    """Coverage of prediction intervals for the true test-point probabilities.

    A kappa-curve (at fixed n, gamma_sq) is terminated once more than 10% of
    its replications were separable; later kappa points on that curve are
    reported as terminated without being run.
    """
    rows, raw = [], []
    grid_index = 0
    for n in config.n_grid:
        for gamma_sq in config.gamma_sq_grid:
            terminated = False
            for kappa in sorted(config.kappa_grid):
                grid_index += 1
                base = {"experiment": "coverage", "n": n, "kappa": kappa,
                        "gamma_sq": gamma_sq, "family": config.feature_family,
                        "level": config.level, "reps_total": config.reps}
                if terminated:
                    for method in config.methods:
                        rows.append({**base, "method": method, "status": "terminated"})
                    continue
                tasks = [(config, grid_index, n, kappa, gamma_sq, rep)
                         for rep in range(config.reps)]
                results = _map_tasks(_coverage_rep, tasks, config.jobs)
                raw.extend({"grid": dict(base), **r} for r in results)
                n_sep = sum(r["status"] == "separable" for r in results)
                n_solver = sum(r["status"] == "solver_failure" for r in results)
                used = [r for r in results if r["status"] == "ok"]
                sep_frac = n_sep / config.reps
                test_n = min(n, config.test_size)
                for method in config.methods:
                    row = {**base, "method": method, "status": "ok",
                           "reps_used": len(used), "dropped_separable": n_sep,
                           "dropped_solver": n_solver,
                           "separable_fraction": sep_frac}
                    if used and method in used[0]:
                        cov = float(np.mean([r[method]["coverage"] for r in used]))
                        row["coverage"] = cov
                        row["coverage_se"] = _binomial_se(cov, len(used) * test_n)
                        row["mean_ci_width"] = float(np.mean([r[method]["width"]
                                                              for r in used]))
                    rows.append(row)
                if sep_frac > 0.10:
                    terminated = True
    return ExperimentResult("coverage", config.resolved(), rows, raw)


# ---------------------------------------------------------------------------
# Null p-value distribution


def _pvalue_rep(task):
    config, grid_index, n, kappa, gamma_sq, rep = task
    d = int(round(kappa * n))
    key = _rep_rng_key(config, grid_index, rep)
    data, truth = simulate_dataset(n, d, np.sqrt(gamma_sq), config.feature_family,
                                   seed=key)
    null_mask = truth.beta == 0.0
    out = {"rep": rep, "status": "ok"}
    try:
        fit = fit_mle(data)
    except SeparableDataError:
        out["status"] = "separable"
        return out
    if not fit.converged:
        out["status"] = "solver_failure"
        return out
    if CORRECTED in config.methods:
        try:
            est = corrupted_signal_strength(sloe_logits(fit, data))
            params = solve_eta(data.kappa, np.sqrt(est.eta_sq))
        except _SOLVER_ERRORS:
            out["status"] = "solver_failure"
            return out
        report = coefficient_inference(fit, params, config.level)
        out["CORRECTED"] = report.p_values()[null_mask]
    if CLASSICAL in config.methods:
        report = classical_inference(fit, config.level)
        out["CLASSICAL"] = report.p_values()[null_mask]
    return out


def run_null_pvalues(config: ExperimentConfig) -> ExperimentResult:
    """Pool p-values of the true-zero coefficients and test them for uniformity."""
    rows, raw = [], []
    grid_index = 10_000
    for n in config.n_grid:
        for kappa in config.kappa_grid:
            for gamma_sq in config.gamma_sq_grid:
                grid_index += 1
                tasks = [(config, grid_index, n, kappa, gamma_sq, rep)
                         for rep in range(config.reps)]
                results = _map_tasks(_pvalue_rep, tasks, config.jobs)
                used = [r for r in results if r["status"] == "ok"]
                n_sep = sum(r["status"] == "separable" for r in results)
                n_solver = sum(r["status"] == "solver_failure" for r in results)
                for method in config.methods:
                    pooled = (np.concatenate([r[method] for r in used])
                              if used else np.array([]))
                    row = {"experiment": "null_pvalues", "n": n, "kappa": kappa,
                           "gamma_sq": gamma_sq, "family": config.feature_family,
                           "method": method, "reps_total": config.reps,
                           "reps_used": len(used), "dropped_separable": n_sep,
                           "dropped_solver": n_solver,
                           "n_pvalues": int(pooled.size)}
                    if pooled.size:
                        ks = kstest(pooled, "uniform")
                        row["ks_stat"] = float(ks.statistic)
                        row["ks_pvalue"] = float(ks.pvalue)
                        if config.keep_raw:
                            raw.append({"method": method, "kappa": kappa,
                                        "p_values": pooled.tolist()})
                    rows.append(row)
    return ExperimentResult("null_pvalues", config.resolved(), rows, raw)


# ---------------------------------------------------------------------------
# Convergence of the fast estimator


def _convergence_rep(task):
    config, grid_index, n, kappa, gamma_sq, eta_sq_true, rep = task
    d = int(round(kappa * n))
    key = _rep_rng_key(config, grid_index, rep)
    data, truth = simulate_dataset(n, d, np.sqrt(gamma_sq), config.feature_family,
                                   seed=key)
    out = {"rep": rep, "status": "ok"}
    try:
        fit = fit_mle(data)
    except SeparableDataError:
        out["status"] = "separable"
        return out
    if not fit.converged:
        out["status"] = "solver_failure"
        return out
    eta_sq_sloe = corrupted_signal_strength(sloe_logits(fit, data)).eta_sq
    norm_sq = float(fit.beta_hat @ fit.beta_hat)  # beta^T Sigma beta with Sigma = I
    out["sq_sloe_vs_limit"] = (eta_sq_sloe - eta_sq_true) ** 2
    out["sq_norm_vs_limit"] = (norm_sq - eta_sq_true) ** 2
    out["sq_sloe_vs_norm"] = (eta_sq_sloe - norm_sq) ** 2
    return out


def run_sloe_convergence(config: ExperimentConfig) -> ExperimentResult:
    """Mean squared gaps between the fast estimator, the fitted norm, and the limit.

    The limiting corrupted signal strength is computed from the fixed-point
    system at the exact signal strength of the simulated coefficient vector
    (which differs from the nominal gamma_sq when 8 does not divide d).
    """
    kappa = config.kappa_grid[0]
    gamma_sq = config.gamma_sq_grid[0]
    rows, raw = [], []
    grid_index = 20_000
    for n in config.n_grid:
        grid_index += 1
        d = int(round(kappa * n))
        _, truth = simulate_dataset(n, d, np.sqrt(gamma_sq), config.feature_family,
                                    seed=[config.seed, grid_index])
        params = solve_gamma(d / n, np.sqrt(truth.gamma_sq))
        tasks = [(config, grid_index, n, kappa, gamma_sq, params.eta_sq, rep)
                 for rep in range(config.reps)]
        results = _map_tasks(_convergence_rep, tasks, config.jobs)
        raw.extend(results)
        used = [r for r in results if r["status"] == "ok"]
        row = {"experiment": "sloe_convergence", "n": n, "kappa": kappa,
               "gamma_sq": gamma_sq, "family": config.feature_family,
               "method": CORRECTED, "eta_sq_limit": params.eta_sq,
               "reps_total": config.reps, "reps_used": len(used),
               "dropped_separable": sum(r["status"] == "separable" for r in results),
               "dropped_solver": sum(r["status"] == "solver_failure" for r in results)}
        for key in ("sq_sloe_vs_limit", "sq_norm_vs_limit", "sq_sloe_vs_norm"):
            row["mean_" + key] = float(np.mean([r[key] for r in used])) if used else None
        rows.append(row)
    return ExperimentResult("sloe_convergence", config.resolved(), rows, raw)


# ---------------------------------------------------------------------------
# Runtime comparison


def run_runtime(config: ExperimentConfig) -> ExperimentResult:
    """Median wall time of the fast pipeline vs the frontier-probing pipeline.

    Replications run serially regardless of ``jobs`` so the timings are not
    distorted by contention. Data generation is excluded for both methods;
    each pipeline includes its own MLE fit, signal-strength estimate, and
    fixed-point solve.
    """
    kappa = config.kappa_grid[0]
    gamma_sq = config.gamma_sq_grid[0]
    rows, raw = [], []
    grid_index = 30_000
    for n in config.n_grid:
        grid_index += 1
        d = int(round(kappa * n))
        sloe_times, probe_times = [], []
        for rep in range(config.reps):
            key = _rep_rng_key(config, grid_index, rep)
            data, _ = simulate_dataset(n, d, np.sqrt(gamma_sq),
                                       config.feature_family, seed=key)
            t0 = time.perf_counter()
            fit = fit_mle(data)
            est = corrupted_signal_strength(sloe_logits(fit, data))
            solve_eta(data.kappa, np.sqrt(est.eta_sq))
            t1 = time.perf_counter()
            sloe_times.append(t1 - t0)

            t2 = time.perf_counter()
            fit_mle(data)
            probe_frontier_gamma(data, subsample_reps=config.subsample_reps,
                                 seed=config.seed + rep)
            t3 = time.perf_counter()
            probe_times.append(t3 - t2)
            raw.append({"n": n, "rep": rep, "sloe_s": t1 - t0, "probe_s": t3 - t2})
        med_sloe = float(np.median(sloe_times))
        med_probe = float(np.median(probe_times))
        rows.append({"experiment": "runtime", "n": n, "kappa": kappa,
                     "gamma_sq": gamma_sq, "family": config.feature_family,
                     "reps_total": config.reps, "reps_used": config.reps,
                     "median_sloe_s": med_sloe, "median_probe_s": med_probe,
                     "speedup": med_probe / med_sloe if med_sloe > 0 else None})
    return ExperimentResult("runtime", config.resolved(), rows, raw)


# ---------------------------------------------------------------------------
# Multiplier bootstrap baseline


def _bootstrap_rep(task):
    config, grid_index, n, kappa, gamma_sq, rep = task
    d = int(round(kappa * n))
    key = _rep_rng_key(config, grid_index, rep)
    data, truth = simulate_dataset(n, d, np.sqrt(gamma_sq), config.feature_family,
                                   seed=key)
    out = {"rep": rep, "status": "ok"}
    try:
        fit = fit_mle(data)
    except SeparableDataError:
        out["status"] = "separable"
        return out
    if not fit.converged:
        out["status"] = "solver_failure"
        return out
    test_n = min(n, config.test_size)
    test_data, _ = simulate_dataset(test_n, d, 0.0, config.feature_family,
                                    seed=key + [1])
    X_test = test_data.features
    mu_true = expit(X_test @ truth.beta)
    delta = 1.0 - config.level

    rng = np.random.default_rng(key + [2])
    replicate_probs = []
    dropped = 0
    for _ in range(config.bootstrap_b):
        weights = rng.poisson(1.0, size=n).astype(float)
        try:
            boot = fit_mle(data, weights=weights, init_beta=fit.beta_hat,
                           lp_confirm=False)
        except SeparableDataError:
            dropped += 1
            continue
        if not boot.converged:
            dropped += 1
            continue
        replicate_probs.append(expit(X_test @ boot.beta_hat))
    out["bootstrap_dropped"] = dropped
    if replicate_probs:
        P = np.vstack(replicate_probs)
        lo = np.quantile(P, delta / 2.0, axis=0)
        hi = np.quantile(P, 1.0 - delta / 2.0, axis=0)
        out[BOOTSTRAP] = {"coverage": float(np.mean((lo <= mu_true) & (mu_true <= hi))),
                          "width": float(np.mean(hi - lo)),
                          "replicates_used": len(replicate_probs)}
    if CORRECTED in config.methods:
        try:
            est = corrupted_signal_strength(sloe_logits(fit, data))
            params = solve_eta(data.kappa, np.sqrt(est.eta_sq))
            lo, hi, _, _ = corrected_prediction_bands(fit, params, X_test, config.level)
            out[CORRECTED] = {"coverage": float(np.mean((lo <= mu_true) & (mu_true <= hi))),
                              "width": float(np.mean(hi - lo))}
        except _SOLVER_ERRORS:
            out["status"] = "solver_failure"
    return out


def run_bootstrap_baseline(config: ExperimentConfig) -> ExperimentResult:
    """Percentile intervals from Poisson(1)-weighted refits, vs corrected CIs.

    Separable bootstrap replicates are dropped (and counted); the percentile
    interval is taken over the surviving replicates.
    """
    rows, raw = [], []
    grid_index = 40_000
    for n in config.n_grid:
        for kappa in config.kappa_grid:
            for gamma_sq in config.gamma_sq_grid:
                grid_index += 1
                tasks = [(config, grid_index, n, kappa, gamma_sq, rep)
                         for rep in range(config.reps)]
                results = _map_tasks(_bootstrap_rep, tasks, config.jobs)
                raw.extend(results)
                used = [r for r in results if r["status"] == "ok"]
                base = {"experiment": "bootstrap", "n": n, "kappa": kappa,
                        "gamma_sq": gamma_sq, "family": config.feature_family,
                        "level": config.level, "bootstrap_b": config.bootstrap_b,
                        "reps_total": config.reps, "reps_used": len(used),
                        "dropped_separable": sum(r["status"] == "separable"
                                                 for r in results),
                        "dropped_solver": sum(r["status"] == "solver_failure"
                                              for r in results)}
                test_n = min(n, config.test_size)
                for method in (BOOTSTRAP, CORRECTED):
                    per = [r[method] for r in used if method in r]
                    row = {**base, "method": method}
                    if per:
                        cov = float(np.mean([p["coverage"] for p in per]))
                        row["coverage"] = cov
                        row["coverage_se"] = _binomial_se(cov, len(per) * test_n)
                        row["mean_ci_width"] = float(np.mean([p["width"] for p in per]))
                    if method == BOOTSTRAP and used:
                        row["mean_replicates_dropped"] = float(
                            np.mean([r["bootstrap_dropped"] for r in used]))
                    rows.append(row)
    return ExperimentResult("bootstrap", config.resolved(), rows, raw)


# ---------------------------------------------------------------------------
# False discovery calibration


def _fdr_rep(task):
    config, grid_index, n, kappa, gamma_sq, rep = task
    d = int(round(kappa * n))
    key = _rep_rng_key(config, grid_index, rep)
    data, truth = simulate_dataset(n, d, np.sqrt(gamma_sq), config.feature_family,
                                   seed=key)
    null_mask = truth.beta == 0.0
    out = {"rep": rep, "status": "ok"}
    try:
        fit = fit_mle(data)
    except SeparableDataError:
        out["status"] = "separable"
        return out
    if not fit.converged:
        out["status"] = "solver_failure"
        return out
    p_by_method = {}
    if CORRECTED in config.methods:
        try:
            est = corrupted_signal_strength(sloe_logits(fit, data))
            params = solve_eta(data.kappa, np.sqrt(est.eta_sq))
        except _SOLVER_ERRORS:
            out["status"] = "solver_failure"
            return out
        p_by_method[CORRECTED] = coefficient_inference(fit, params, config.level).p_values()
    if CLASSICAL in config.methods:
        p_by_method[CLASSICAL] = classical_inference(fit, config.level).p_values()
    for method, p in p_by_method.items():
        per_q = {}
        for q in config.q_grid:
            selected = bh_procedure(p, q)
            false = int(null_mask[selected].sum()) if selected.size else 0
            per_q[q] = {"selected": int(selected.size), "false": false}
        out[method] = per_q
    return out


def run_fdr_calibration(config: ExperimentConfig) -> ExperimentResult:
    """Empirical false-discovery proportion of BH selection at each target q.

    The proportion is pooled across replications: total false selections
    over total selections (0 when nothing is selected).
    """
    rows, raw = [], []
    grid_index = 50_000
    for n in config.n_grid:
        for kappa in config.kappa_grid:
            for gamma_sq in config.gamma_sq_grid:
                grid_index += 1
                tasks = [(config, grid_index, n, kappa, gamma_sq, rep)
                         for rep in range(config.reps)]
                results = _map_tasks(_fdr_rep, tasks, config.jobs)
                raw.extend(results)
                used = [r for r in results if r["status"] == "ok"]
                base = {"experiment": "fdr", "n": n, "kappa": kappa,
                        "gamma_sq": gamma_sq, "family": config.feature_family,
                        "reps_total": config.reps, "reps_used": len(used),
                        "dropped_separable": sum(r["status"] == "separable"
                                                 for r in results),
                        "dropped_solver": sum(r["status"] == "solver_failure"
                                              for r in results)}
                for method in config.methods:
                    if method == BOOTSTRAP:
                        continue
                    for q in config.q_grid:
                        sel = sum(r[method][q]["selected"] for r in used)
                        false = sum(r[method][q]["false"] for r in used)
                        rows.append({**base, "method": method, "q": q,
                                     "selections": sel, "false_selections": false,
                                     "fdp": (false / sel) if sel else 0.0})
    return ExperimentResult("fdr", config.resolved(), rows, raw)
