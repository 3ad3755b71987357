"""Dataset container, CSV ingestion, and synthetic data generators.

The feature distributions implemented here are the two simulation designs
used throughout the package: iid standard Gaussian columns, and
Hardy-Weinberg genotype columns taking values in {0, 1, 2} that are
standardized with their exact population moments. Coefficient vectors are
built as two signed blocks occupying the first quarter of the coordinates,
scaled so that the squared norm equals the requested signal strength.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


class DataError(ValueError):
    """Raised when an input file or array violates the data contract."""


@dataclass(frozen=True)
class Dataset:
    """Immutable design matrix plus binary outcome vector.

    Parameters
    ----------
    features : ndarray (n, d)
        Finite real feature matrix.
    outcomes : ndarray (n,)
        Entries exactly 0 or 1.
    standardized : bool
        True when every column has (empirical) mean ~0 and variance ~1.
    column_names : list of str, optional
        One name per feature column.
    """

    features: np.ndarray
    outcomes: np.ndarray
    standardized: bool = False
    column_names: list | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.outcomes, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("features must be a non-empty 2-D matrix")
        if not np.isfinite(X).all():
            raise DataError("features contain NaN or Inf")
        if y.shape != (X.shape[0],):
            raise DataError("outcomes must be a vector with one entry per row")
        if not np.isin(y, (0.0, 1.0)).all():
            raise DataError("outcomes must be exactly 0 or 1")
        if self.column_names is not None and len(self.column_names) != X.shape[1]:
            raise DataError("column_names length must match feature count")
        if self.standardized:
            mu = X.mean(axis=0)
            var = X.var(axis=0)
            if np.max(np.abs(mu)) > 1e-8 or np.max(np.abs(var - 1.0)) > 1e-6:
                raise DataError("standardized=True but columns are not standardized")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "outcomes", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def kappa(self) -> float:
        """Aspect ratio d / n."""
        return self.features.shape[1] / self.features.shape[0]


@dataclass(frozen=True)
class TruthSpec:
    """Ground truth of a simulated instance: coefficients and row probabilities."""

    beta: np.ndarray
    gamma_sq: float
    mu: np.ndarray = field(repr=False)


def standardize_columns(X: np.ndarray) -> np.ndarray:
    """Center each column and scale to unit (population) variance.

    Constant columns are rejected: they cannot be scaled, and an intercept
    column would be silently destroyed by centering.
    """
    X = np.asarray(X, dtype=float)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    if np.any(sd <= 0):
        bad = int(np.argmax(sd <= 0))
        raise DataError(f"column {bad} is constant and cannot be standardized")
    return (X - mu) / sd


def load_csv(path, outcome_column: str, standardize: bool = False) -> Dataset:
    """Read a UTF-8, comma-separated file with a header row into a Dataset.

    The named outcome column must contain only 0/1 values and is removed
    from the features. All other cells must parse as finite numbers;
    missing values are a hard error.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if outcome_column not in header:
            raise DataError(f"{path}: no column named {outcome_column!r}")
        y_col = header.index(outcome_column)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}:{lineno}: non-finite cell")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    M = np.asarray(rows, dtype=float)
    y = M[:, y_col]
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError(f"{path}: outcome column {outcome_column!r} has values outside {{0, 1}}")
    X = np.delete(M, y_col, axis=1)
    if X.shape[1] == 0:
        raise DataError(f"{path}: no feature columns besides the outcome")
    names = [h for i, h in enumerate(header) if i != y_col]
    if standardize:
        X = standardize_columns(X)
    return Dataset(X, y, standardized=standardize, column_names=names)


def gen_gaussian(n: int, d: int, seed) -> np.ndarray:
    """n x d matrix of iid standard normal draws, reproducible from the seed."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d))


def hardy_weinberg_frequencies(d: int, lo: float = 0.25, hi: float = 0.75) -> np.ndarray:
    """Deterministic per-column allele frequencies, evenly spaced on [lo, hi]."""
    if d == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, d)


def gen_gwas(n: int, d: int, p_range=(0.25, 0.75), seed=None) -> np.ndarray:
    """Genotype-like features in {0, 1, 2}, standardized by exact moments.

    Column j draws entries with P(0) = (1-p_j)^2, P(1) = 2 p_j (1-p_j),
    P(2) = p_j^2, where the allele frequencies p_j are evenly spaced over
    ``p_range``. Each column is then centered by its exact mean 2 p_j and
    scaled by its exact standard deviation sqrt(2 p_j (1-p_j)), so the
    population variance of each standardized column is exactly 1.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    lo, hi = float(p_range[0]), float(p_range[1])
    if not (0.0 < lo <= hi < 1.0):
        raise ValueError("p_range must satisfy 0 < lo <= hi < 1")
    p = hardy_weinberg_frequencies(d, lo, hi)
    rng = np.random.default_rng(seed)
    u = rng.random((n, d))
    # genotype = #{successes in 2 Bernoulli(p) trials}, via the CDF of u
    thresh0 = (1.0 - p) ** 2
    thresh1 = thresh0 + 2.0 * p * (1.0 - p)
    G = (u >= thresh0).astype(float) + (u >= thresh1)
    return (G - 2.0 * p) / np.sqrt(2.0 * p * (1.0 - p))


def make_beta(d: int, gamma: float) -> np.ndarray:
    """Block coefficient vector with ||beta||^2 = gamma^2 when 8 divides d.

    The first floor(d/8) coordinates get +2*gamma/sqrt(d), the next block up
    to floor(d/4) gets -2*gamma/sqrt(d), the rest are zero. For d not
    divisible by 8 the block boundaries are floored, which perturbs the
    squared norm by O(1/d).
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    beta = np.zeros(d)
    k1, k2 = d // 8, d // 4
    beta[:k1] = 2.0 * gamma / np.sqrt(d)
    beta[k1:k2] = -2.0 * gamma / np.sqrt(d)
    return beta


def gen_outcomes(features: np.ndarray, beta: np.ndarray, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw Y_i ~ Bernoulli(g(x_i . beta)) and return (outcomes, mu).

    Logits are clipped to +-36 before the sigmoid so mu never rounds to
    exactly 0 or 1 in double precision.
    """
    X = np.asarray(features, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if X.shape[1] != beta.shape[0]:
        raise ValueError("feature/coefficient dimensions do not conform")
    mu = expit(np.clip(X @ beta, -36.0, 36.0))
    rng = np.random.default_rng(seed)
    y = (rng.random(X.shape[0]) < mu).astype(float)
    return y, mu


def simulate_dataset(n: int, d: int, gamma: float, family: str = "gaussian",
                     seed=None) -> tuple[Dataset, TruthSpec]:
    """One synthetic instance: features, block coefficients, outcomes.

    ``family`` is "gaussian" or "gwas". The two sub-draws (features,
    outcomes) use independent child streams of the seed, so the instance is
    reproducible as a whole.
    """
    root = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    s_x, s_y = root.spawn(2)
    if family == "gaussian":
        X = gen_gaussian(n, d, s_x)
    elif family == "gwas":
        X = gen_gwas(n, d, seed=s_x)
    else:
        raise ValueError(f"unknown feature family {family!r}")
    beta = make_beta(d, gamma)
    y, mu = gen_outcomes(X, beta, s_y)
    gamma_sq = float(beta @ beta)  # exact signal strength of this instance
    return Dataset(X, y), TruthSpec(beta, gamma_sq, mu)
