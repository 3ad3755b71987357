"""Dimensionality-corrected inference for logistic regression.

When the number of features d is a non-negligible fraction of the sample
size n, the logistic MLE is biased away from zero and the textbook Wald
intervals are too narrow. This package fits the MLE, estimates the
corrupted signal strength of the fitted logits with a fast leave-one-out
approximation, solves the fixed-point system for the bias and variance
constants, and emits corrected confidence intervals and p-values for
coefficients and predictions.
"""

from .data_model import (DataError, Dataset, TruthSpec, gen_gaussian, gen_gwas,
                         gen_outcomes, load_csv, make_beta, simulate_dataset,
                         standardize_columns)
from .logistic_mle import (MleFit, NotConvergedError, SeparableDataError,
                           SingularHessianError, check_separable, fit_mle,
                           quadratic_form, standard_se)
from .sloe_estimator import (LeverageAtOneError, SeparableSubproblemError,
                             SignalStrength, corrupted_signal_strength,
                             estimate_eta_sloe, loo_logits_exact, sloe_logits)
from .state_evolution import (BivariateGaussianSpec, CorrectionParams,
                              InconsistentEtaError, NoConvergenceError,
                              OutsideExistenceRegionError, SolutionCache,
                              expect_bivariate, prox_logistic, solve_eta,
                              solve_gamma)
from .inference import (InferenceReport, bh_procedure, classical_inference,
                        classical_prediction, classical_prediction_bands,
                        coefficient_inference, corrected_prediction_bands,
                        prediction_inference)
from .probe_frontier import (AlreadySeparableError, FrontierOutOfRangeError,
                             FrontierTable, build_frontier,
                             default_frontier_table, load_frontier_csv,
                             probe_frontier_gamma)

__version__ = "0.1.0"

__all__ = [
    "DataError", "Dataset", "TruthSpec", "gen_gaussian", "gen_gwas",
    "gen_outcomes", "load_csv", "make_beta", "simulate_dataset",
    "standardize_columns",
    "MleFit", "NotConvergedError", "SeparableDataError", "SingularHessianError",
    "check_separable", "fit_mle", "quadratic_form", "standard_se",
    "LeverageAtOneError", "SeparableSubproblemError", "SignalStrength",
    "corrupted_signal_strength", "estimate_eta_sloe", "loo_logits_exact",
    "sloe_logits",
    "BivariateGaussianSpec", "CorrectionParams", "InconsistentEtaError",
    "NoConvergenceError", "OutsideExistenceRegionError", "SolutionCache",
    "expect_bivariate", "prox_logistic", "solve_eta", "solve_gamma",
    "InferenceReport", "bh_procedure", "classical_inference",
    "classical_prediction", "classical_prediction_bands",
    "coefficient_inference", "corrected_prediction_bands",
    "prediction_inference",
    "AlreadySeparableError", "FrontierOutOfRangeError", "FrontierTable",
    "build_frontier", "default_frontier_table", "load_frontier_csv",
    "probe_frontier_gamma",
    "__version__",
]
