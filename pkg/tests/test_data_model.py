import numpy as np
import pytest

from hdlogit import (DataError, Dataset, gen_gaussian, gen_gwas, gen_outcomes,
                     load_csv, make_beta, simulate_dataset, standardize_columns)


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestLoadCsv:
    def test_smallest_well_formed_file(self, tmp_path):
        p = write_csv(tmp_path / "tiny.csv", "x,y\n1.0,0\n2.0,1\n3.0,1\n")
        data = load_csv(p, outcome_column="y")
        assert (data.n, data.d) == (3, 1)
        assert data.column_names == ["x"]
        assert data.outcomes.tolist() == [0.0, 1.0, 1.0]

    def test_non_binary_outcome_rejected(self, tmp_path):
        p = write_csv(tmp_path / "bad.csv", "x,y\n1.0,0\n2.0,2\n")
        with pytest.raises(DataError, match="outside"):
            load_csv(p, outcome_column="y")

    def test_heart_disease_shape_gives_kappa(self, tmp_path):
        # same shape as the clinical example: 136 rows, 20 predictors
        rng = np.random.default_rng(0)
        X = rng.standard_normal((136, 20))
        y = rng.integers(0, 2, size=136)
        header = ",".join([f"f{j}" for j in range(20)] + ["disease"])
        rows = "\n".join(
            ",".join([repr(float(v)) for v in X[i]] + [str(int(y[i]))])
            for i in range(136))
        p = write_csv(tmp_path / "heart.csv", header + "\n" + rows + "\n")
        data = load_csv(p, outcome_column="disease")
        assert (data.n, data.d) == (136, 20)
        assert data.kappa == pytest.approx(20 / 136)
        assert abs(data.kappa - 0.147) < 0.001

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            load_csv("/nonexistent/path.csv", outcome_column="y")

    def test_non_numeric_cell(self, tmp_path):
        p = write_csv(tmp_path / "nn.csv", "x,y\nfoo,0\n1.0,1\n")
        with pytest.raises(DataError, match="non-numeric"):
            load_csv(p, outcome_column="y")

    def test_missing_value_is_hard_error(self, tmp_path):
        p = write_csv(tmp_path / "mv.csv", "x,z,y\n1.0,,0\n2.0,3.0,1\n")
        with pytest.raises(DataError):
            load_csv(p, outcome_column="y")

    def test_constant_column_rejected_under_standardize(self, tmp_path):
        p = write_csv(tmp_path / "cc.csv", "x,c,y\n1.0,5,0\n2.0,5,1\n3.0,5,1\n")
        with pytest.raises(DataError, match="constant"):
            load_csv(p, outcome_column="y", standardize=True)

    def test_standardize_centers_and_scales(self, tmp_path):
        rng = np.random.default_rng(1)
        vals = rng.normal(3.0, 2.5, size=50)
        body = "\n".join(f"{float(v)!r},{i % 2}" for i, v in enumerate(vals))
        p = write_csv(tmp_path / "s.csv", "x,y\n" + body + "\n")
        data = load_csv(p, outcome_column="y", standardize=True)
        assert data.standardized
        assert abs(data.features.mean()) < 1e-12
        assert data.features.var() == pytest.approx(1.0, abs=1e-12)


class TestDatasetInvariants:
    def test_rejects_nonfinite_features(self):
        with pytest.raises(DataError):
            Dataset(np.array([[1.0], [np.nan]]), np.array([0.0, 1.0]))

    def test_rejects_nonbinary_outcomes(self):
        with pytest.raises(DataError):
            Dataset(np.ones((2, 1)), np.array([0.0, 0.5]))

    def test_rejects_false_standardized_flag(self):
        X = np.array([[10.0], [20.0], [30.0]])
        with pytest.raises(DataError):
            Dataset(X, np.array([0.0, 1.0, 0.0]), standardized=True)

    def test_kappa_is_exact_ratio(self):
        X = np.random.default_rng(0).standard_normal((40, 10))
        data = Dataset(X, np.zeros(40) + (np.arange(40) % 2))
        assert data.kappa == 10 / 40

    def test_features_are_immutable(self):
        data = Dataset(np.ones((3, 2)), np.array([0.0, 1.0, 0.0]))
        with pytest.raises(ValueError):
            data.features[0, 0] = 5.0


class TestStandardize:
    def test_idempotent_within_1e10(self):
        rng = np.random.default_rng(7)
        X = rng.normal(5.0, 3.0, size=(200, 4))
        once = standardize_columns(X)
        twice = standardize_columns(once)
        assert np.max(np.abs(twice - once)) <= 1e-10


class TestGenGaussian:
    def test_law_of_large_numbers(self):
        X = gen_gaussian(100_000, 1, seed=11)
        assert abs(X.mean()) < 4 / np.sqrt(100_000)
        assert abs(X.var() - 1.0) < 0.05

    def test_deterministic(self):
        a = gen_gaussian(50, 3, seed=5)
        b = gen_gaussian(50, 3, seed=5)
        assert np.array_equal(a, b)

    def test_columns_uncorrelated(self):
        # Monte-Carlo bound: |corr| of two iid N(0,1) columns at n=1e4
        X = gen_gaussian(10_000, 2, seed=13)
        corr = np.corrcoef(X[:, 0], X[:, 1])[0, 1]
        assert abs(corr) < 0.05

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            gen_gaussian(0, 3, seed=1)


class TestGenGwas:
    def test_hardy_weinberg_frequencies_at_half(self):
        X = gen_gwas(100_000, 1, p_range=(0.5, 0.5), seed=3)
        levels, counts = np.unique(X, return_counts=True)
        assert len(levels) == 3
        freqs = counts / X.shape[0]
        assert np.max(np.abs(freqs - np.array([0.25, 0.5, 0.25]))) < 0.01

    def test_exact_moment_standardization_levels(self):
        # p = 0.25: raw variance 2 p (1-p) = 0.375, mean 2p = 0.5
        X = gen_gwas(5_000, 1, p_range=(0.25, 0.25), seed=4)
        expected = (np.array([0.0, 1.0, 2.0]) - 0.5) / np.sqrt(0.375)
        levels = np.unique(X)
        assert np.allclose(levels, expected[: len(levels)], atol=1e-12)

    def test_column_mean_obeys_clt_bound(self):
        # exact-moment standardization leaves an O(1/sqrt(n)) empirical mean
        X = gen_gwas(100_000, 3, seed=5)
        assert np.max(np.abs(X.mean(axis=0))) < 4 / np.sqrt(100_000)
        assert np.max(np.abs(X.var(axis=0) - 1.0)) < 0.05

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            gen_gwas(10, 2, p_range=(0.0, 0.5), seed=1)


class TestMakeBeta:
    def test_d8_literal_construction(self):
        beta = make_beta(8, 1.0)
        expected = np.array([2 / np.sqrt(8), -2 / np.sqrt(8), 0, 0, 0, 0, 0, 0])
        assert np.allclose(beta, expected, atol=1e-15)

    def test_zero_gamma_gives_zero_vector(self):
        assert not make_beta(17, 0.0).any()

    def test_norm_identity(self):
        beta = make_beta(800, np.sqrt(5.0))
        assert abs(beta @ beta - 5.0) < 1e-10

    @pytest.mark.parametrize("d", [8, 16, 64, 256])
    def test_norm_exact_when_divisible_by_8(self, d):
        beta = make_beta(d, 1.7)
        assert beta @ beta == pytest.approx(1.7**2, abs=1e-12)

    def test_floored_blocks_for_awkward_d(self):
        beta = make_beta(10, 1.0)
        assert (beta[:1] > 0).all() and (beta[1:2] < 0).all()
        assert not beta[2:].any()


class TestGenOutcomes:
    def test_zero_beta_gives_half_probabilities(self):
        X = gen_gaussian(100, 3, seed=1)
        y, mu = gen_outcomes(X, np.zeros(3), seed=2)
        assert np.all(mu == 0.5)

    def test_probabilities_strictly_inside_unit_interval(self):
        X = gen_gaussian(100, 2, seed=1) * 50  # extreme logits
        y, mu = gen_outcomes(X, np.array([10.0, -10.0]), seed=2)
        assert np.all(mu > 0) and np.all(mu < 1)

    def test_outcome_mean_tracks_mu_mean(self):
        n = 100_000
        X = gen_gaussian(n, 4, seed=6)
        y, mu = gen_outcomes(X, make_beta(4, 1.0), seed=7)
        assert abs(y.mean() - mu.mean()) < 4 / np.sqrt(n)

    def test_deterministic(self):
        X = gen_gaussian(50, 2, seed=1)
        y1, _ = gen_outcomes(X, np.array([1.0, -1.0]), seed=9)
        y2, _ = gen_outcomes(X, np.array([1.0, -1.0]), seed=9)
        assert np.array_equal(y1, y2)


class TestSimulateDataset:
    def test_signal_variance_matches_gamma_sq(self):
        # var(beta . X) over many rows should sit near gamma^2 for both families
        for family in ("gaussian", "gwas"):
            data, truth = simulate_dataset(100_000, 64, 1.0, family, seed=21)
            logits = data.features @ truth.beta
            assert abs(np.var(logits) - 1.0) < 0.05, family

    def test_exact_gamma_recorded(self):
        _, truth = simulate_dataset(100, 64, np.sqrt(5.0), seed=3)
        assert truth.gamma_sq == pytest.approx(5.0, abs=1e-10)

    def test_mu_matches_model(self):
        data, truth = simulate_dataset(500, 16, 1.0, seed=4)
        from scipy.special import expit
        assert np.allclose(truth.mu, expit(data.features @ truth.beta), atol=1e-12)
