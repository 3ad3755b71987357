"""Logistic-regression MLE via Newton iterations with step-halving.

The fit keeps the positive-definite curvature matrix A = sum_i w_i g'(t_i)
x_i x_i^T and its Cholesky factor. Every downstream quantity that formally
involves the (negative-definite) log-likelihood Hessian is expressed
against A, which removes sign ambiguity and allows triangular solves.

Separability (non-existence of the MLE) is decided exactly by a linear
program: the data admit a direction b with (2y_i - 1) x_i . b >= 0 for all
rows and > 0 for at least one row if and only if the maximum of
sum_i (2y_i - 1) x_i . b over the box |b_j| <= 1 subject to the sign
constraints is positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.optimize import linprog
from scipy.special import expit

from .data_model import Dataset

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
MAX_HALVINGS = 30
DIVERGENCE_NORM = 1e3
LOGIT_GUARD = 30.0  # above this the residuals underflow and a tiny score proves nothing


class SeparableDataError(RuntimeError):
    """The outcomes are linearly separable, so the MLE does not exist."""


class SingularHessianError(RuntimeError):
    """The design is rank deficient; the curvature matrix has no Cholesky factor."""


class NotConvergedError(RuntimeError):
    """An operation that needs a converged fit received an unconverged one."""


@dataclass(frozen=True)
class MleFit:
    """Converged (or diagnosed) maximum-likelihood fit.

    ``hessian_chol`` is an opaque factorization handle for the positive
    definite curvature matrix A; use :func:`quadratic_form` or
    :meth:`solve` rather than touching it directly.
    """

    beta_hat: np.ndarray
    logits: np.ndarray
    hessian_chol: object
    converged: bool
    iterations: int
    grad_norm: float
    separable: bool = False

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Return A^{-1} rhs via two triangular solves."""
        if self.hessian_chol is None:
            raise NotConvergedError("no factorization available on an unconverged fit")
        return cho_solve(self.hessian_chol, rhs)


def log_likelihood(logits: np.ndarray, y: np.ndarray, weights=None) -> float:
    """Bernoulli log-likelihood, numerically safe for large |logits|."""
    per_row = y * logits - np.logaddexp(0.0, logits)
    if weights is not None:
        per_row = weights * per_row
    return float(np.sum(per_row))


def _separable_lp(X: np.ndarray, y: np.ndarray, method: str = "auto") -> bool:
    """Exact LP decision for complete or quasi-complete separation."""
    A = (2.0 * y - 1.0)[:, None] * X
    c = -A.sum(axis=0)
    n = X.shape[0]
    if method == "auto":
        method = "highs" if X.size <= 150_000 else "highs-ipm"
    res = linprog(c, A_ub=-A, b_ub=np.zeros(n), bounds=(-1.0, 1.0), method=method)
    if res.status == 3:  # unbounded cannot happen with the box; be conservative
        return True
    if res.status != 0:
        if method != "highs":
            return _separable_lp(X, y, method="highs")
        raise RuntimeError(f"separability LP failed: {res.message}")
    val = -res.fun
    if method == "highs-ipm" and 1e-10 < val <= 1e-4:
        # interior-point verdict is ambiguous near zero; settle with simplex
        return _separable_lp(X, y, method="highs")
    return val > 1e-8


def check_separable(data: Dataset) -> bool:
    """True iff some direction weakly separates the classes (strictly somewhere)."""
    return _separable_lp(data.features, data.outcomes)


def fit_mle(data: Dataset, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
            *, weights: np.ndarray | None = None, init_beta: np.ndarray | None = None,
            lp_confirm: bool = True) -> MleFit:
    """Fit the logistic MLE by Newton's method with a step-halving line search.

    Convergence is declared when the infinity norm of the score drops to
    ``tol``. When the iterates' norm exceeds a divergence threshold the data
    are (by default) checked for separability with the exact LP and a
    :class:`SeparableDataError` is raised if it confirms; passing
    ``lp_confirm=False`` trusts the divergence signal directly, which is the
    cheap mode used inside bootstrap loops.

    ``weights`` is an internal hook for nonnegative per-row multipliers
    (bootstrap); rows with zero weight drop out of the fit entirely.
    """
    X = data.features
    y = data.outcomes
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != y.shape or np.any(weights < 0):
            raise ValueError("weights must be a nonnegative vector with one entry per row")
        active = weights > 0
        if not active.all():
            sub = Dataset(X[active], y[active])
            return fit_mle(sub, tol, max_iter, weights=weights[active],
                           init_beta=init_beta, lp_confirm=lp_confirm)
    n, d = X.shape
    if d >= n:
        raise SeparableDataError(
            f"d={d} >= n={n}: separation is generic and the MLE is refused")

    beta = np.zeros(d) if init_beta is None else np.asarray(init_beta, dtype=float).copy()
    t = X @ beta
    divergence_checked = False
    iterations = 0
    for iterations in range(max_iter + 1):
        mu = expit(t)
        resid = (y - mu) if weights is None else weights * (y - mu)
        grad = X.T @ resid
        grad_norm = float(np.max(np.abs(grad)))
        w = mu * (1.0 - mu)
        if weights is not None:
            w = weights * w
        try:
            chol = cho_factor(X.T @ (w[:, None] * X))
        except LinAlgError:
            if iterations == 0:
                raise SingularHessianError("rank-deficient design matrix") from None
            # curvature underflow after the iterates blew up: separable regime
            raise SeparableDataError(
                "curvature matrix lost rank during iteration; data look separable"
            ) from None
        if grad_norm <= tol:
            if float(np.max(np.abs(t))) > LOGIT_GUARD:
                # the score may be an underflow artifact; settle it exactly
                if not lp_confirm or _separable_lp(X, y):
                    raise SeparableDataError(
                        "score vanished with extreme logits: data linearly "
                        "separable, MLE does not exist")
            return MleFit(beta, t, chol, True, iterations, grad_norm)
        if iterations == max_iter:
            break
        step = cho_solve(chol, grad)
        ll0 = log_likelihood(t, y, weights)
        scale = 1.0
        for _ in range(MAX_HALVINGS):
            cand = beta + scale * step
            t_cand = X @ cand
            if log_likelihood(t_cand, y, weights) >= ll0:
                break
            scale *= 0.5
        beta, t = cand, t_cand
        if not divergence_checked and np.linalg.norm(beta) > DIVERGENCE_NORM:
            divergence_checked = True
            if not lp_confirm or _separable_lp(X, y):
                raise SeparableDataError(
                    "iterates diverged: data linearly separable, MLE does not exist")
    return MleFit(beta, t, None, False, iterations, grad_norm)


def quadratic_form(fit: MleFit, v: np.ndarray) -> float:
    """v^T A^{-1} v against the fitted curvature matrix (no explicit inverse)."""
    if not fit.converged:
        raise NotConvergedError("quadratic_form requires a converged fit")
    v = np.asarray(v, dtype=float)
    return float(v @ cho_solve(fit.hessian_chol, v))


def standard_se(fit: MleFit) -> np.ndarray:
    """Classical Wald standard errors sqrt(diag(A^{-1})) from observed information."""
    if not fit.converged:
        raise NotConvergedError("standard_se requires a converged fit")
    d = fit.beta_hat.shape[0]
    inv = cho_solve(fit.hessian_chol, np.eye(d))
    return np.sqrt(np.diag(inv))
