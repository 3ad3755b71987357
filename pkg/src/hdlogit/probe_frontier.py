"""Separability-frontier baseline for estimating the signal strength.

For a fixed signal strength gamma there is a sharp aspect-ratio threshold
kappa_star(gamma) above which simulated data are separable with high
probability. The frontier is tabulated once by Monte Carlo (bisecting over
kappa until the empirical separation frequency crosses 1/2) and shipped as
a versioned CSV. The probe estimator subsamples a real dataset to find the
size at which it starts separating, and inverts the table to read off
gamma.

Separability of a single instance is decided in two stages: a Newton fit
that converges to an interior stationary point with moderate norm certifies
non-separability outright (the log-likelihood is strictly concave), and
everything else falls through to the exact LP.
"""

from __future__ import annotations

import csv
import importlib.resources
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .data_model import Dataset, gen_gaussian, gen_outcomes, make_beta
from .logistic_mle import SeparableDataError, _separable_lp, check_separable, fit_mle
from . import state_evolution
from .sloe_estimator import PROBE_FRONTIER, SignalStrength

MONTE_CARLO = "MONTE_CARLO"
USER_SUPPLIED = "USER_SUPPLIED"

TABLE_VERSION = "1"
_CERT_MAX_LOGIT = 25.0  # residuals cannot underflow below this, so the gradient is honest


class AlreadySeparableError(RuntimeError):
    """The full dataset is separable; there is nothing to probe."""


class FrontierOutOfRangeError(RuntimeError):
    """The requested gamma or kappa_star falls outside the tabulated range."""


@dataclass(frozen=True)
class FrontierTable:
    """Monotone table gamma -> kappa_star with build provenance."""

    gamma: np.ndarray
    kappa_star_values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        k = np.asarray(self.kappa_star_values, dtype=float)
        if g.ndim != 1 or g.shape != k.shape or g.shape[0] < 2:
            raise ValueError("table needs matching gamma/kappa_star vectors, length >= 2")
        if not np.all(np.diff(g) > 0):
            raise ValueError("gamma grid must be strictly ascending")
        if not np.all(np.diff(k) < 0):
            raise ValueError("kappa_star must be strictly decreasing in gamma")
        if np.any(k <= 0) or np.any(k >= 1):
            raise ValueError("kappa_star values must lie in (0, 1)")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "kappa_star_values", k)

    def kappa_star(self, gamma: float) -> float:
        """Interpolated frontier height at the given signal strength."""
        if gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if gamma > self.gamma[-1]:
            raise FrontierOutOfRangeError(
                f"gamma={gamma:.4g} beyond tabulated range (max {self.gamma[-1]:.4g})")
        # below the smallest tabulated gamma the curve is essentially flat
        return float(np.interp(gamma, self.gamma, self.kappa_star_values))

    def gamma_from_kappa_star(self, kappa_star: float) -> float:
        """Inverse lookup: the signal strength whose frontier sits at kappa_star."""
        k = self.kappa_star_values
        if kappa_star >= k[0]:
            return float(self.gamma[0])
        if kappa_star < k[-1]:
            raise FrontierOutOfRangeError(
                f"kappa_star={kappa_star:.4g} below tabulated range (min {k[-1]:.4g})")
        return float(np.interp(-kappa_star, -k, self.gamma))

    def save_csv(self, path) -> None:
        prov = dict(self.provenance)
        meta = " ".join(f"{key}={prov[key]}" for key in sorted(prov))
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# hdlogit frontier table v{TABLE_VERSION} {meta}\n")
            w = csv.writer(fh)
            w.writerow(["gamma", "kappa_star"])
            for g, k in zip(self.gamma, self.kappa_star_values):
                w.writerow([repr(float(g)), repr(float(k))])


def load_frontier_csv(path) -> FrontierTable:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith("# hdlogit frontier table"):
            raise ValueError(f"{path}: not a frontier table file")
        prov = {"source_header": first.strip()}
        reader = csv.DictReader(fh)
        g, k = [], []
        for row in reader:
            g.append(float(row["gamma"]))
            k.append(float(row["kappa_star"]))
    return FrontierTable(np.array(g), np.array(k), prov)


@lru_cache(maxsize=1)
def default_frontier_table() -> FrontierTable:
    """The Monte-Carlo table shipped with the package."""
    ref = importlib.resources.files("hdlogit") / "resources" / "frontier_default.csv"
    with importlib.resources.as_file(ref) as path:
        return load_frontier_csv(path)


def separable_fast(X: np.ndarray, y: np.ndarray) -> bool:
    """Exact separability decision with a cheap certificate path.

    A converged Newton fit whose logits all stay moderate is a genuine
    interior stationary point of the strictly concave log-likelihood (no
    residual has underflowed, so the tiny gradient is meaningful), which
    proves the MLE exists and the data are not separable. Diverging or
    borderline fits are settled by the LP.
    """
    try:
        fit = fit_mle(Dataset(X, y), tol=1e-6, max_iter=50, lp_confirm=False)
        if fit.converged and np.max(np.abs(fit.logits)) <= _CERT_MAX_LOGIT:
            return False
    except SeparableDataError:
        pass
    return _separable_lp(X, y)


def _separation_frequency(gamma: float, kappa: float, n_sim: int, reps: int,
                          seed_key: tuple) -> float:
    d = max(1, int(round(kappa * n_sim)))
    hits = 0
    for rep in range(reps):
        rng_key = list(seed_key) + [rep]
        X = gen_gaussian(n_sim, d, rng_key)
        beta = make_beta(d, gamma)
        y, _ = gen_outcomes(X, beta, rng_key + [1])
        hits += separable_fast(X, y)
    return hits / reps


def _bisect_kappa_star(gamma: float, n_sim: int, reps: int, seed: int,
                       gamma_index: int, tol_kappa: float = 0.01) -> float:
    """Bisection over kappa for the 1/2 crossing of the separation frequency."""
    lo, hi = 0.02, 0.56
    step = 0
    while hi - lo > tol_kappa:
        mid = 0.5 * (lo + hi)
        # fewer replicates while the bracket is wide, full count near the end
        stage_reps = reps if (hi - lo) <= 4 * tol_kappa else max(10, reps // 5)
        freq = _separation_frequency(gamma, mid, n_sim, stage_reps,
                                     (seed, gamma_index, step))
        if freq >= 0.5:
            hi = mid
        else:
            lo = mid
        step += 1
    return 0.5 * (lo + hi)


def _isotonic_decreasing(values: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators projection onto non-increasing sequences."""
    vals = list(map(float, values))
    weights = [1.0] * len(vals)
    blocks = []
    for v, w in zip(vals, weights):
        blocks.append([v, w])
        while len(blocks) > 1 and blocks[-2][0] < blocks[-1][0]:
            v2, w2 = blocks.pop()
            v1, w1 = blocks.pop()
            blocks.append([(v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2])
    out = []
    for v, w in blocks:
        out.extend([v] * int(w))
    return np.array(out)


def build_frontier(gamma_grid, n_sim: int = 1000, reps: int = 100, seed: int = 0,
                   workers: int = 1) -> FrontierTable:
    """Tabulate kappa_star(gamma) by Monte Carlo over a gamma grid.

    For each gamma the crossing point of the empirical separation frequency
    through 1/2 is located by bisection over kappa; the resulting curve is
    then projected onto strictly decreasing values.
    """
    gamma_grid = np.asarray(gamma_grid, dtype=float)
    if gamma_grid.ndim != 1 or np.any(gamma_grid <= 0) or not np.all(np.diff(gamma_grid) > 0):
        raise ValueError("gamma_grid must be positive and strictly ascending")
    args = [(float(g), n_sim, reps, seed, i) for i, g in enumerate(gamma_grid)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_bisect_row, args))
    else:
        raw = [_bisect_row(a) for a in args]
    smoothed = _isotonic_decreasing(np.array(raw))
    # break exact ties so the table stays strictly decreasing
    smoothed = smoothed - 1e-9 * np.arange(len(smoothed))
    provenance = {"provenance": MONTE_CARLO, "n_sim": n_sim, "reps": reps,
                  "seed": seed, "version": TABLE_VERSION}
    return FrontierTable(gamma_grid, smoothed, provenance)


def _bisect_row(args) -> float:
    gamma, n_sim, reps, seed, index = args
    return _bisect_kappa_star(gamma, n_sim, reps, seed, index)


def probe_frontier_gamma(data: Dataset, table: FrontierTable | None = None,
                         subsample_reps: int = 11, seed: int = 0) -> SignalStrength:
    """Estimate gamma by locating the subsample size where the data separate.

    Bisection over the subsample size n' finds the point where the fraction
    of separable subsamples (without replacement) crosses 1/2; the implied
    aspect ratio d/n' is then inverted through the frontier table. The
    corrupted signal strength is derived by solving the fixed-point system
    at the estimated gamma.
    """
    if table is None:
        table = default_frontier_table()
    X, y = data.features, data.outcomes
    n, d = X.shape
    if check_separable(data):
        raise AlreadySeparableError("full data are separable; probe cannot shrink them")
    rng = np.random.default_rng(seed)

    def sep_freq(n_sub: int) -> float:
        hits = 0
        for _ in range(subsample_reps):
            idx = rng.choice(n, size=n_sub, replace=False)
            hits += separable_fast(X[idx], y[idx])
        return hits / subsample_reps

    lo = min(n, max(d + 2, int(np.ceil(d / 0.56))))
    hi = n
    if lo >= hi or sep_freq(lo) < 0.5:
        # even the most aggressive subsample rarely separates: flat signal
        kappa_hat = min(d / lo, 0.5)
    else:
        precision = max(1, n // 200)
        while hi - lo > precision:
            mid = (lo + hi) // 2
            if sep_freq(mid) >= 0.5:
                lo = mid
            else:
                hi = mid
        kappa_hat = d / (0.5 * (lo + hi))
    kappa_hat = min(kappa_hat, 0.5)
    gamma_hat = table.gamma_from_kappa_star(kappa_hat)
    params = state_evolution.solve_gamma(data.kappa, gamma_hat,
                                         frontier=table, check_existence=False)
    diagnostics = {"gamma_hat": gamma_hat, "kappa_star_hat": kappa_hat,
                   "alpha": params.alpha, "sigma_star": params.sigma_star,
                   "lam": params.lam, "subsample_reps": subsample_reps}
    return SignalStrength(params.eta_sq, PROBE_FRONTIER, diagnostics=diagnostics)
