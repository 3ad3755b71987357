"""Confidence intervals and p-values, classical and dimensionality-corrected.

The corrected report divides the fitted coefficients by the bias inflation
alpha and uses sigma_star / (alpha sqrt(n)) as the coefficient standard
error, so that every interval is an ordinary Wald interval around the
debiased estimate. For non-isotropic designs the errors are rescaled
through the empirical feature covariance: coefficient j picks up
sqrt((Sigma^-1)_jj) and a test point x picks up sqrt(x^T Sigma^-1 x)
(which reduces to 1 and ||x|| respectively when Sigma = I). The isotropic
scaling is the default and is the correct one for the simulation designs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, ndtr, ndtri

from .data_model import Dataset
from .logistic_mle import MleFit, NotConvergedError, quadratic_form, standard_se
from .state_evolution import CorrectionParams

CORRECTED = "CORRECTED"
CLASSICAL = "CLASSICAL"
BOOTSTRAP = "BOOTSTRAP"

IDENTITY_COV = "identity"
EMPIRICAL_COV = "empirical"


@dataclass(frozen=True)
class InferenceReport:
    """Per-coefficient and per-test-point inference records."""

    method: str
    level: float
    coefficients: list
    test_points: list = field(default_factory=list)
    params: CorrectionParams | None = None

    def p_values(self) -> np.ndarray:
        return np.array([c["p_value"] for c in self.coefficients])

    def to_dict(self) -> dict:
        out = {"method": self.method, "level": self.level,
               "coefficients": self.coefficients, "test_points": self.test_points}
        if self.params is not None:
            p = self.params
            out["correction"] = {"alpha": p.alpha, "sigma_star": p.sigma_star,
                                 "lambda": p.lam, "kappa": p.kappa,
                                 "gamma_sq": p.gamma_sq, "eta_sq": p.eta_sq,
                                 "residual_norm": p.residual_norm}
        return out


def _normal_quantile(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must lie in (0, 1)")
    return float(ndtri(0.5 + level / 2.0))


def _two_sided_p(z: np.ndarray) -> np.ndarray:
    return 2.0 * ndtr(-np.abs(z))


def _fit_kappa(fit: MleFit) -> float:
    return fit.beta_hat.shape[0] / fit.logits.shape[0]


class CovarianceScaling:
    """Error rescaling through the (ridge-regularized) empirical feature covariance."""

    def __init__(self, data: Dataset):
        X = data.features
        d = data.d
        sigma = np.cov(X, rowvar=False, ddof=0).reshape(d, d)
        ridge = 1e-8 * np.trace(sigma) / d
        self._chol = cho_factor(sigma + ridge * np.eye(d))
        self.tau_coef = np.sqrt(np.diag(cho_solve(self._chol, np.eye(d))))

    def tau_point(self, x: np.ndarray) -> float:
        return float(np.sqrt(x @ cho_solve(self._chol, x)))


def _resolve_scaling(covariance, data, d):
    """Returns (per-coefficient tau vector, per-point tau function)."""
    if covariance == IDENTITY_COV:
        return np.ones(d), lambda x: float(np.linalg.norm(x))
    if covariance == EMPIRICAL_COV:
        if data is None:
            raise ValueError("empirical covariance scaling needs the dataset")
        scaling = CovarianceScaling(data)
        return scaling.tau_coef, scaling.tau_point
    raise ValueError(f"unknown covariance mode {covariance!r}")


def _names(data, d):
    if data is not None and data.column_names is not None:
        return list(data.column_names)
    return [f"x{j}" for j in range(d)]


def _require_compatible(fit: MleFit, params: CorrectionParams) -> None:
    if not fit.converged:
        raise NotConvergedError("inference requires a converged fit")
    if abs(_fit_kappa(fit) - params.kappa) > 1e-9:
        raise ValueError(
            f"correction params solved at kappa={params.kappa:.6g} but the fit "
            f"has kappa={_fit_kappa(fit):.6g}")


def coefficient_inference(fit: MleFit, params: CorrectionParams, level: float,
                          *, data: Dataset | None = None,
                          covariance: str = IDENTITY_COV) -> InferenceReport:
    """Corrected Wald intervals and p-values for every coefficient.

    The debiased estimate is beta_hat / alpha and its standard error is
    sigma_star * tau_j / (alpha sqrt(n)); the Z statistic and two-sided
    p-value are exactly dual to the interval (the interval excludes zero
    iff p < 1 - level).
    """
    _require_compatible(fit, params)
    z_crit = _normal_quantile(level)
    n = fit.logits.shape[0]
    d = fit.beta_hat.shape[0]
    tau, _ = _resolve_scaling(covariance, data, d)
    debiased = fit.beta_hat / params.alpha
    se = params.sigma_star * tau / (params.alpha * np.sqrt(n))
    z = debiased / se
    p = _two_sided_p(z)
    names = _names(data, d)
    coefficients = [
        {"name": names[j], "beta_hat": float(fit.beta_hat[j]),
         "beta_debiased": float(debiased[j]), "se_corrected": float(se[j]),
         "ci_lo": float(debiased[j] - z_crit * se[j]),
         "ci_hi": float(debiased[j] + z_crit * se[j]),
         "z": float(z[j]), "p_value": float(p[j])}
        for j in range(d)
    ]
    return InferenceReport(CORRECTED, level, coefficients, params=params)


def prediction_inference(fit: MleFit, params: CorrectionParams, x: np.ndarray,
                         level: float, *, data: Dataset | None = None,
                         covariance: str = IDENTITY_COV) -> dict:
    """Corrected interval for the logit and probability at a test point."""
    _require_compatible(fit, params)
    x = np.asarray(x, dtype=float)
    if not np.isfinite(x).all():
        raise ValueError("test point must be finite")
    z_crit = _normal_quantile(level)
    n = fit.logits.shape[0]
    _, tau_point = _resolve_scaling(covariance, data, x.shape[0])
    logit_hat = float(x @ fit.beta_hat)
    logit_debiased = logit_hat / params.alpha
    se = params.sigma_star * tau_point(x) / (params.alpha * np.sqrt(n))
    lo, hi = logit_debiased - z_crit * se, logit_debiased + z_crit * se
    return {"logit_hat": logit_hat, "logit_debiased": logit_debiased,
            "logit_ci": (lo, hi), "prob_hat": float(expit(logit_debiased)),
            "prob_ci": (float(expit(lo)), float(expit(hi)))}


def classical_inference(fit: MleFit, level: float,
                        *, data: Dataset | None = None) -> InferenceReport:
    """Textbook Wald intervals from the observed information."""
    if not fit.converged:
        raise NotConvergedError("inference requires a converged fit")
    z_crit = _normal_quantile(level)
    d = fit.beta_hat.shape[0]
    se = standard_se(fit)
    z = fit.beta_hat / se
    p = _two_sided_p(z)
    names = _names(data, d)
    coefficients = [
        {"name": names[j], "beta_hat": float(fit.beta_hat[j]),
         "beta_debiased": float(fit.beta_hat[j]), "se_corrected": float(se[j]),
         "ci_lo": float(fit.beta_hat[j] - z_crit * se[j]),
         "ci_hi": float(fit.beta_hat[j] + z_crit * se[j]),
         "z": float(z[j]), "p_value": float(p[j])}
        for j in range(d)
    ]
    return InferenceReport(CLASSICAL, level, coefficients)


def corrected_prediction_bands(fit: MleFit, params: CorrectionParams,
                               X_test: np.ndarray, level: float,
                               *, data: Dataset | None = None,
                               covariance: str = IDENTITY_COV):
    """Vectorized corrected probability intervals for a matrix of test points.

    Returns (prob_lo, prob_hi, logit_lo, logit_hi) arrays; row i corresponds
    to X_test[i] and matches :func:`prediction_inference` on that point.
    """
    _require_compatible(fit, params)
    X_test = np.asarray(X_test, dtype=float)
    z_crit = _normal_quantile(level)
    n = fit.logits.shape[0]
    center = X_test @ fit.beta_hat / params.alpha
    if covariance == IDENTITY_COV:
        tau = np.linalg.norm(X_test, axis=1)
    else:
        _, tau_point = _resolve_scaling(covariance, data, X_test.shape[1])
        tau = np.array([tau_point(row) for row in X_test])
    se = params.sigma_star * tau / (params.alpha * np.sqrt(n))
    lo, hi = center - z_crit * se, center + z_crit * se
    return expit(lo), expit(hi), lo, hi


def classical_prediction_bands(fit: MleFit, X_test: np.ndarray, level: float):
    """Vectorized delta-method probability intervals at test points."""
    if not fit.converged:
        raise NotConvergedError("inference requires a converged fit")
    X_test = np.asarray(X_test, dtype=float)
    z_crit = _normal_quantile(level)
    center = X_test @ fit.beta_hat
    solved = fit.solve(X_test.T)
    se = np.sqrt(np.einsum("ij,ji->i", X_test, solved))
    lo, hi = center - z_crit * se, center + z_crit * se
    return expit(lo), expit(hi), lo, hi


def classical_prediction(fit: MleFit, x: np.ndarray, level: float) -> dict:
    """Delta-method interval on the logit, mapped through the sigmoid."""
    if not fit.converged:
        raise NotConvergedError("inference requires a converged fit")
    x = np.asarray(x, dtype=float)
    z_crit = _normal_quantile(level)
    logit_hat = float(x @ fit.beta_hat)
    se = float(np.sqrt(quadratic_form(fit, x)))
    lo, hi = logit_hat - z_crit * se, logit_hat + z_crit * se
    return {"logit_hat": logit_hat, "logit_debiased": logit_hat,
            "logit_ci": (lo, hi), "prob_hat": float(expit(logit_hat)),
            "prob_ci": (float(expit(lo)), float(expit(hi)))}


def bh_procedure(p_values, q: float) -> np.ndarray:
    """Benjamini-Hochberg step-up selection at target rate q.

    Returns the selected indices in ascending order; ties in the p-values
    are broken by index so the output is deterministic.
    """
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1:
        raise ValueError("p_values must be a vector")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    if not 0.0 <= q < 1.0:
        raise ValueError("q must lie in [0, 1)")
    m = p.shape[0]
    if m == 0 or q == 0.0:
        return np.array([], dtype=int)
    order = np.lexsort((np.arange(m), p))
    sorted_p = p[order]
    thresh = q * np.arange(1, m + 1) / m
    passing = np.nonzero(sorted_p <= thresh)[0]
    if passing.size == 0:
        return np.array([], dtype=int)
    k = passing[-1] + 1
    return np.sort(order[:k])
