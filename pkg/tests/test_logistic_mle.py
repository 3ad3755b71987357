import numpy as np
import pytest
from scipy.linalg import cho_factor
from scipy.special import expit

from hdlogit import (Dataset, MleFit, SeparableDataError, SingularHessianError,
                     NotConvergedError, check_separable, fit_mle, quadratic_form,
                     simulate_dataset, standard_se)
from hdlogit.logistic_mle import log_likelihood


def symmetric_four_points():
    X = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    y = np.array([1.0, 1.0, 0.0, 0.0])
    return Dataset(X, y)


def gradient_ascent_oracle(X, y, steps=1_000_000, lr=0.5):
    """Independent slow solver: fixed-step ascent on the mean log-likelihood."""
    beta = np.zeros(X.shape[1])
    n = X.shape[0]
    for _ in range(steps):
        beta = beta + lr * (X.T @ (y - expit(X @ beta))) / n
    return beta


class TestFitMle:
    def test_symmetric_data_has_zero_mle(self):
        fit = fit_mle(symmetric_four_points())
        assert fit.converged
        assert fit.beta_hat[0] == 0.0
        assert fit.grad_norm <= 1e-8

    def test_separated_threshold_raises(self):
        X = np.array([[1.0], [2.0], [-1.0], [-2.0]])
        y = np.array([1.0, 1.0, 0.0, 0.0])
        with pytest.raises(SeparableDataError):
            fit_mle(Dataset(X, y))

    def test_matches_gradient_ascent_oracle(self):
        data, _ = simulate_dataset(200, 5, 1.0, seed=17)
        fit = fit_mle(data, tol=1e-12)
        oracle = gradient_ascent_oracle(data.features, data.outcomes)
        assert np.max(np.abs(fit.beta_hat - oracle)) < 1e-5

    def test_first_order_optimality(self):
        data, _ = simulate_dataset(300, 10, 1.0, seed=23)
        fit = fit_mle(data, tol=1e-10)
        score = data.features.T @ (data.outcomes - expit(fit.logits))
        assert np.max(np.abs(score)) <= 1e-10

    def test_logits_match_beta(self):
        data, _ = simulate_dataset(150, 6, 0.5, seed=2)
        fit = fit_mle(data)
        assert np.max(np.abs(fit.logits - data.features @ fit.beta_hat)) <= 1e-10

    def test_deterministic(self):
        data, _ = simulate_dataset(150, 6, 0.5, seed=3)
        a = fit_mle(data)
        b = fit_mle(data)
        assert np.array_equal(a.beta_hat, b.beta_hat)

    def test_refused_when_d_not_less_than_n(self):
        data, _ = simulate_dataset(5, 6, 0.0, seed=1)
        with pytest.raises(SeparableDataError, match="generic"):
            fit_mle(data)

    def test_rank_deficient_design_raises(self):
        rng = np.random.default_rng(4)
        col = rng.standard_normal(30)
        X = np.column_stack([col, col])  # duplicate column
        y = (rng.random(30) < 0.5).astype(float)
        with pytest.raises(SingularHessianError):
            fit_mle(Dataset(X, y))

    def test_max_iter_returns_diagnostics(self):
        data, _ = simulate_dataset(400, 20, 1.0, seed=5)
        fit = fit_mle(data, tol=1e-14, max_iter=1)
        assert not fit.converged
        assert fit.iterations == 1
        assert fit.grad_norm > 0

    def test_loglik_nondecreasing_over_iterations(self):
        data, _ = simulate_dataset(300, 15, 1.5, seed=6)
        lls = []
        for iters in range(1, 6):
            fit = fit_mle(data, tol=1e-15, max_iter=iters)
            lls.append(log_likelihood(fit.logits, data.outcomes))
        assert all(b >= a - 1e-12 for a, b in zip(lls, lls[1:]))

    def test_unit_weights_match_unweighted(self):
        data, _ = simulate_dataset(200, 8, 1.0, seed=7)
        a = fit_mle(data)
        b = fit_mle(data, weights=np.ones(data.n))
        assert np.allclose(a.beta_hat, b.beta_hat, atol=1e-12)

    def test_zero_weight_drops_row(self):
        data, _ = simulate_dataset(120, 4, 1.0, seed=8)
        w = np.ones(data.n)
        w[17] = 0.0
        weighted = fit_mle(data, weights=w)
        dropped = Dataset(np.delete(data.features, 17, axis=0),
                          np.delete(data.outcomes, 17))
        plain = fit_mle(dropped)
        assert np.allclose(weighted.beta_hat, plain.beta_hat, atol=1e-10)


class TestCheckSeparable:
    def test_one_dimensional_split(self):
        X = np.array([[0.5], [1.5], [-0.5], [-1.5]])
        y = np.array([1.0, 1.0, 0.0, 0.0])
        assert check_separable(Dataset(X, y))

    def test_symmetric_four_points_not_separable(self):
        assert not check_separable(symmetric_four_points())

    def test_null_model_rarely_separable(self):
        # kappa = 0.002: separation probability is negligible
        hits = 0
        for seed in range(100):
            data, _ = simulate_dataset(1000, 2, 0.0, seed=seed)
            hits += check_separable(data)
        assert hits <= 1

    def test_agrees_with_fit_mle(self):
        rng = np.random.default_rng(11)
        for trial in range(20):
            n = 40
            X = rng.standard_normal((n, 4))
            y = (rng.random(n) < expit(X @ np.full(4, 1.5))).astype(float)
            data = Dataset(X, y)
            separable = check_separable(data)
            try:
                fit = fit_mle(data)
                assert not separable, trial
                assert fit.converged
            except SeparableDataError:
                assert separable, trial


class TestQuadraticForm:
    def test_zero_vector(self):
        data, _ = simulate_dataset(100, 3, 0.5, seed=9)
        fit = fit_mle(data)
        assert quadratic_form(fit, np.zeros(3)) == 0.0

    def test_single_row_scalar_algebra(self):
        # A = x^2 g'(t) for one row, so the form at x is 1/g'(t)
        x, beta = 1.7, 0.3
        t = x * beta
        gp = expit(t) * (1 - expit(t))
        A = np.array([[x * x * gp]])
        fit = MleFit(np.array([beta]), np.array([t]), cho_factor(A),
                     True, 1, 0.0)
        assert quadratic_form(fit, np.array([x])) == pytest.approx(1 / gp, rel=1e-12)

    def test_matches_dense_inverse(self):
        data, _ = simulate_dataset(200, 4, 1.0, seed=10)
        fit = fit_mle(data)
        mu = expit(fit.logits)
        A = data.features.T @ ((mu * (1 - mu))[:, None] * data.features)
        v = np.random.default_rng(0).standard_normal(4)
        dense = v @ np.linalg.inv(A) @ v
        assert quadratic_form(fit, v) == pytest.approx(dense, rel=1e-10)

    def test_requires_converged_fit(self):
        data, _ = simulate_dataset(300, 10, 1.0, seed=12)
        fit = fit_mle(data, tol=1e-14, max_iter=1)
        with pytest.raises(NotConvergedError):
            quadratic_form(fit, np.zeros(10))


class TestStandardSe:
    def test_symmetric_closed_form(self):
        # beta = 0, so A = sum x_i^2 / 4 = 1 and the lone se is exactly 1
        fit = fit_mle(symmetric_four_points())
        assert standard_se(fit)[0] == pytest.approx(1.0, rel=1e-12)

    def test_wald_z_scale_invariant(self):
        data, _ = simulate_dataset(300, 5, 1.0, seed=13)
        fit1 = fit_mle(data, tol=1e-12)
        scaled = Dataset(2.5 * data.features, data.outcomes)
        fit2 = fit_mle(scaled, tol=1e-12)
        z1 = fit1.beta_hat / standard_se(fit1)
        z2 = fit2.beta_hat / standard_se(fit2)
        assert np.allclose(z1, z2, rtol=1e-6)

    def test_matches_dense_inverse_diagonal(self):
        data, _ = simulate_dataset(250, 6, 1.0, seed=14)
        fit = fit_mle(data)
        mu = expit(fit.logits)
        A = data.features.T @ ((mu * (1 - mu))[:, None] * data.features)
        dense = np.sqrt(np.diag(np.linalg.inv(A)))
        assert np.allclose(standard_se(fit), dense, rtol=1e-10)
