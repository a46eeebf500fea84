import numpy as np
import pytest

from statarb import factors as fa
from statarb.errors import (AlignmentError, ContractError,
                            DegenerateSeriesError, InsufficientWindowError)


class TestStandardize:
    def test_simple_row(self):
        Y, std = fa.standardize(np.array([[1.0, 2.0, 3.0]]))
        np.testing.assert_allclose(Y, [[-1.0, 0.0, 1.0]])
        assert std.means[0] == pytest.approx(2.0)
        assert std.stds[0] == pytest.approx(1.0)

    def test_constant_row_names_ticker(self):
        with pytest.raises(DegenerateSeriesError, match="T01"):
            fa.standardize(np.array([[1.0, 2.0], [5.0, 5.0]]), ("T00", "T01"))

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        R = rng.normal(0, 0.02, (5, 100))
        once, _ = fa.standardize(R)
        twice, _ = fa.standardize(once)
        np.testing.assert_allclose(twice, once, atol=1e-12)

    def test_moments(self):
        rng = np.random.default_rng(5)
        Y, _ = fa.standardize(rng.normal(3.0, 2.0, (4, 500)))
        np.testing.assert_allclose(Y.mean(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(Y.std(axis=1, ddof=1), 1.0, atol=1e-10)


class TestCorrelationMatrix:
    def test_identical_rows(self):
        row = np.array([1.0, -2.0, 0.5, 1.5, -1.0])
        Y, _ = fa.standardize(np.vstack([row, row]))
        C = fa.correlation_matrix(Y)
        assert C[0, 1] == pytest.approx(1.0)

    def test_orthogonal_rows(self):
        r1 = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
        r2 = np.array([1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0])
        Y, _ = fa.standardize(np.vstack([r1, r2]))
        C = fa.correlation_matrix(Y)
        assert abs(C[0, 1]) < 1e-12

    def test_pairwise_pearson_oracle(self):
        rng = np.random.default_rng(6)
        R = rng.normal(0, 0.02, (3, 60))
        Y, _ = fa.standardize(R)
        C = fa.correlation_matrix(Y)
        oracle = np.corrcoef(R)
        np.testing.assert_allclose(C, oracle, atol=1e-12)

    def test_unit_diagonal_and_symmetry(self):
        rng = np.random.default_rng(7)
        Y, _ = fa.standardize(rng.normal(0, 1, (6, 100)))
        C = fa.correlation_matrix(Y)
        np.testing.assert_allclose(np.diag(C), 1.0, atol=1e-10)
        np.testing.assert_allclose(C, C.T, atol=0)

    def test_short_window_rejected(self):
        with pytest.raises(InsufficientWindowError):
            fa.correlation_matrix(np.zeros((5, 5)))


class TestSymmetricEigen:
    def test_analytic_two_by_two(self):
        eig = fa.symmetric_eigen(np.array([[1.0, 0.8], [0.8, 1.0]]))
        np.testing.assert_allclose(eig.eigenvalues, [1.8, 0.2], atol=1e-10)
        np.testing.assert_allclose(eig.eigenvectors[:, 0],
                                   [np.sqrt(2) / 2, np.sqrt(2) / 2], atol=1e-10)

    def test_identity(self):
        eig = fa.symmetric_eigen(np.eye(4))
        np.testing.assert_allclose(eig.eigenvalues, 1.0)

    def test_reconstruction_oracle(self):
        rng = np.random.default_rng(8)
        A = rng.normal(size=(10, 10))
        M = A @ A.T / 10          # symmetric PSD
        eig = fa.symmetric_eigen(M)
        rebuilt = eig.eigenvectors @ np.diag(eig.eigenvalues) @ eig.eigenvectors.T
        np.testing.assert_allclose(rebuilt, M, atol=1e-8)

    def test_orthonormal_columns(self):
        rng = np.random.default_rng(9)
        A = rng.normal(size=(8, 8))
        eig = fa.symmetric_eigen(A + A.T)
        gram = eig.eigenvectors.T @ eig.eigenvectors
        np.testing.assert_allclose(gram, np.eye(8), atol=1e-10)

    def test_descending_order_and_trace(self):
        rng = np.random.default_rng(10)
        A = rng.normal(size=(7, 7))
        M = A @ A.T
        eig = fa.symmetric_eigen(M)
        assert np.all(np.diff(eig.eigenvalues) <= 1e-12)
        assert eig.eigenvalues.sum() == pytest.approx(np.trace(M), abs=1e-8)

    def test_sign_convention(self):
        rng = np.random.default_rng(11)
        A = rng.normal(size=(6, 6))
        eig = fa.symmetric_eigen(A @ A.T)
        for i in range(6):
            total = eig.eigenvectors[:, i].sum()
            if total == 0:
                col = eig.eigenvectors[:, i]
                assert col[np.flatnonzero(col)[0]] > 0
            else:
                assert total >= 0

    def test_non_symmetric_rejected(self):
        with pytest.raises(ContractError):
            fa.symmetric_eigen(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_indefinite_allowed_without_clamp(self):
        M = np.array([[0.0, 1.0], [1.0, 0.0]])
        eig = fa.symmetric_eigen(M)
        np.testing.assert_allclose(eig.eigenvalues, [1.0, -1.0], atol=1e-12)

    def test_clamp_rejects_substantial_negatives(self):
        M = np.array([[0.0, 1.0], [1.0, 0.0]])
        with pytest.raises(ContractError, match="negative eigenvalue"):
            fa.symmetric_eigen(M, clamp_psd=True)

    def test_perron_frobenius_positive_matrix(self):
        # all-positive correlation-like matrices only
        rng = np.random.default_rng(12)
        for _ in range(5):
            base = rng.uniform(0.1, 0.9)
            d = 8
            C = np.full((d, d), base)
            np.fill_diagonal(C, 1.0)
            eig = fa.symmetric_eigen(C)
            first = eig.eigenvectors[:, 0]
            assert np.all(first > 0) or np.all(first < 0)


class TestExplainedFraction:
    def test_first_component(self):
        assert fa.explained_fraction(np.array([1.8, 0.2]), 1) == pytest.approx(0.9)

    def test_full_spectrum(self):
        lam = np.array([3.0, 2.0, 1.0])
        assert fa.explained_fraction(lam, 3) == pytest.approx(1.0)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            fa.explained_fraction(np.array([1.0]), 2)


class TestSelectR:
    def test_variance_target(self):
        assert fa.select_r(np.array([1.8, 0.2]), "variance_target", alpha=0.9) == 1

    def test_fixed(self):
        lam = np.linspace(2.0, 0.1, 60)
        assert fa.select_r(lam, "fixed", r=15) == 15

    def test_variance_target_needs_more(self):
        lam = np.array([0.5, 0.3, 0.15, 0.05])
        assert fa.select_r(lam, "variance_target", alpha=0.55) == 2
        assert fa.select_r(lam, "variance_target", alpha=1.0) == 4

    def test_exact_boundary_counts(self):
        lam = np.array([9.0, 1.0])
        assert fa.select_r(lam, "variance_target", alpha=0.9) == 1


class TestEigenportfolios:
    def test_unit_vol_weights(self):
        std = fa.Standardization(means=np.zeros(2), stds=np.ones(2))
        eig = fa.symmetric_eigen(np.array([[1.0, 0.8], [0.8, 1.0]]))
        Q = fa.eigenportfolio_weights(std, eig, 1)
        np.testing.assert_allclose(Q, [[0.70710678, 0.70710678]], atol=1e-8)

    def test_vol_scaling_halves_coordinate(self):
        std = fa.Standardization(means=np.zeros(2), stds=np.array([2.0, 1.0]))
        eig = fa.symmetric_eigen(np.array([[1.0, 0.8], [0.8, 1.0]]))
        Q = fa.eigenportfolio_weights(std, eig, 1)
        assert Q[0, 0] == pytest.approx(Q[0, 1] / 2.0)

    def test_algebraic_identity_oracle(self):
        rng = np.random.default_rng(13)
        R = rng.normal(0.001, 0.02, (4, 80))
        Y, std = fa.standardize(R)
        eig = fa.symmetric_eigen(fa.correlation_matrix(Y))
        fs = fa.eigenportfolio_factors(std, eig, 2, R)
        # Q R differs from f^T Y only by the constant sum f_k mean_k / sigma_k
        for i in range(2):
            f = eig.eigenvectors[:, i]
            direct = f @ Y + float((f / std.stds) @ std.means)
            np.testing.assert_allclose(fs.factor_returns[i], direct, atol=1e-12)

    def test_factor_covariance_diagonal_on_window(self):
        rng = np.random.default_rng(14)
        R = rng.normal(0, 0.02, (5, 200))
        Y, std = fa.standardize(R)
        eig = fa.symmetric_eigen(fa.correlation_matrix(Y))
        fs = fa.eigenportfolio_factors(std, eig, 5, R)
        F = fs.factor_returns
        cov = np.cov(F, ddof=1)
        off = cov - np.diag(np.diag(cov))
        assert np.abs(off).max() < 1e-8

    def test_trace_preservation(self):
        rng = np.random.default_rng(15)
        R = rng.normal(0, 0.02, (5, 300))
        Y, std = fa.standardize(R)
        eig = fa.symmetric_eigen(fa.correlation_matrix(Y))
        pcs = eig.eigenvectors.T @ Y
        total = np.var(pcs, axis=1, ddof=1).sum()
        assert total == pytest.approx(np.var(Y, axis=1, ddof=1).sum(), abs=1e-8)


class TestIndexFactorSet:
    def test_three_funds(self):
        fs = fa.index_factor_set(np.zeros((3, 10)), fa.PROVIDER_EXISTING_ETF)
        assert fs.factor_returns.shape == (3, 10)
        assert fs.provider == "existing_etf"
        np.testing.assert_array_equal(fs.component_weights, np.eye(3))

    def test_fourteen_sectors(self):
        fs = fa.index_factor_set(np.zeros((14, 10)), fa.PROVIDER_SECTOR_ETF)
        assert fs.factor_returns.shape[0] == 14

    def test_single_factor(self):
        fs = fa.index_factor_set(np.zeros(10), fa.PROVIDER_EXISTING_ETF)
        assert fs.factor_returns.shape == (1, 10)

    def test_misaligned(self):
        with pytest.raises(AlignmentError):
            fa.index_factor_set(np.zeros((2, 9)), fa.PROVIDER_EXISTING_ETF, n_days=10)
