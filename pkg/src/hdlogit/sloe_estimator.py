"""Corrupted signal strength estimators.

The target is the variance of the fitted logits in the fixed-aspect-ratio
limit. The exact leave-one-out estimator refits the model n times and takes
the variance of the held-out logits. The fast estimator replaces each
refit by a rank-one downdate of the full-data curvature matrix: with
W_i = x_i^T A^{-1} x_i and t_i the full-data logit,

    S_i = t_i - W_i / (1 - g'(t_i) W_i) * (y_i - g(t_i)),

which is the Sherman-Morrison form of x_i^T (A - g'(t_i) x_i x_i^T)^{-1} x_i
applied to the Newton correction for removing row i. One factorization of A
serves all n rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import expit

from .data_model import Dataset
from .logistic_mle import (DEFAULT_MAX_ITER, DEFAULT_TOL, MleFit, NotConvergedError,
                           SeparableDataError, fit_mle)

LEVERAGE_EPS = 1e-12

SLOE = "SLOE"
LOO_EXACT = "LOO_EXACT"
PROBE_FRONTIER = "PROBE_FRONTIER"


class LeverageAtOneError(RuntimeError):
    """A row's weighted leverage reached 1; the rank-one downdate is degenerate."""

    def __init__(self, index: int):
        super().__init__(f"leverage of row {index} is numerically 1")
        self.index = index


class SeparableSubproblemError(RuntimeError):
    """A leave-one-out subproblem has no MLE."""

    def __init__(self, index: int):
        super().__init__(f"data without row {index} are linearly separable")
        self.index = index


@dataclass(frozen=True)
class SignalStrength:
    """Estimated corrupted signal strength with estimator provenance."""

    eta_sq: float
    method: str
    loo_logits: np.ndarray | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)


def sloe_logits(fit: MleFit, data: Dataset) -> np.ndarray:
    """Rank-one-update approximation of the leave-one-out logits."""
    if not fit.converged:
        raise NotConvergedError("sloe_logits requires a converged fit")
    X = data.features
    t = fit.logits
    mu = expit(t)
    gp = mu * (1.0 - mu)
    W = np.einsum("ij,ji->i", X, cho_solve(fit.hessian_chol, X.T))
    denom = 1.0 - gp * W
    if np.any(denom <= LEVERAGE_EPS):
        raise LeverageAtOneError(int(np.argmax(denom <= LEVERAGE_EPS)))
    return t - (W / denom) * (data.outcomes - mu)


def loo_logits_exact(data: Dataset, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER,
                     fit: MleFit | None = None) -> np.ndarray:
    """Held-out logits from n full Newton refits, warm-started at the full fit.

    This is the oracle the fast estimator approximates; it costs n refits.
    """
    if fit is None:
        fit = fit_mle(data, tol, max_iter)
    X = data.features
    y = data.outcomes
    n = data.n
    S = np.empty(n)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        mask[i] = False
        sub = Dataset(X[mask], y[mask])
        try:
            sub_fit = fit_mle(sub, tol, max_iter, init_beta=fit.beta_hat)
        except SeparableDataError:
            raise SeparableSubproblemError(i) from None
        if not sub_fit.converged:
            raise SeparableSubproblemError(i)
        S[i] = float(X[i] @ sub_fit.beta_hat)
        mask[i] = True
    return S


def corrupted_signal_strength(S: np.ndarray, method: str = SLOE,
                              diagnostics: dict | None = None) -> SignalStrength:
    """Population variance (divide by n) of the leave-one-out logits."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 1 or S.shape[0] < 2:
        raise ValueError("need at least two logits to form a variance")
    m = S.mean()
    eta_sq = float(np.mean(S * S) - m * m)
    return SignalStrength(eta_sq, method, loo_logits=S, diagnostics=diagnostics or {})


def estimate_eta_sloe(data: Dataset, fit: MleFit | None = None) -> SignalStrength:
    """Convenience wrapper: fit if needed, then the fast estimator."""
    if fit is None:
        fit = fit_mle(data)
    S = sloe_logits(fit, data)
    return corrupted_signal_strength(S, method=SLOE)
