import numpy as np
import pytest

from statarb import regression as rg
from statarb.errors import InsufficientWindowError, SingularDesignError


class TestFitOls:
    def test_exact_single_factor(self):
        rng = np.random.default_rng(1)
        F = rng.normal(0, 0.02, (1, 60))
        model = rg.fit_ols(2.0 * F[0], F)
        assert model.betas[0] == pytest.approx(2.0, abs=1e-12)
        assert model.alpha == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(model.residuals, 0.0, atol=1e-12)

    def test_constant_target(self):
        rng = np.random.default_rng(2)
        X = rng.normal(0, 0.02, (3, 50))
        model = rg.fit_ols(np.full(50, 0.7), X)
        assert model.alpha == pytest.approx(0.7, abs=1e-10)
        np.testing.assert_allclose(model.betas, 0.0, atol=1e-9)

    def test_covariance_ratio_oracle(self):
        rng = np.random.default_rng(3)
        F = rng.normal(0, 0.02, (1, 120))
        y = 0.004 + 1.3 * F[0] + rng.normal(0, 0.01, 120)
        model = rg.fit_ols(y, F)
        oracle = np.cov(y, F[0], ddof=1)[0, 1] / np.var(F[0], ddof=1)
        assert model.betas[0] == pytest.approx(oracle, abs=1e-10)

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(4)
        X = rng.normal(0, 0.02, (4, 120))
        y = rng.normal(0, 0.03, 120)
        model = rg.fit_ols(y, X)
        assert abs(model.residuals.sum()) < 1e-9
        for row in X:
            assert abs(row @ model.residuals) < 1e-9

    def test_predict_reproduces_fit(self):
        rng = np.random.default_rng(5)
        X = rng.normal(0, 0.02, (2, 80))
        y = rng.normal(0, 0.03, 80)
        model = rg.fit_ols(y, X)
        np.testing.assert_allclose(model.predict(X), y - model.residuals,
                                   atol=1e-14)

    def test_noise_free_beta_recovery(self):
        rng = np.random.default_rng(6)
        X = rng.normal(0, 0.02, (3, 100))
        beta = np.array([0.5, -1.2, 2.0])
        y = 0.001 + beta @ X
        model = rg.fit_ols(y, X)
        np.testing.assert_allclose(model.betas, beta, atol=1e-8)
        assert model.alpha == pytest.approx(0.001, abs=1e-10)

    def test_rank_deficient(self):
        rng = np.random.default_rng(7)
        row = rng.normal(0, 0.02, 60)
        with pytest.raises(SingularDesignError):
            rg.fit_ols(rng.normal(0, 1, 60), np.vstack([row, row]))

    def test_short_window(self):
        with pytest.raises(InsufficientWindowError):
            rg.fit_ols(np.zeros(3), np.zeros((3, 3)))


class TestCumulativeResiduals:
    def test_running_sum(self):
        model = rg.FactorModel(alpha=0.0, betas=np.zeros(1),
                               residuals=np.array([1.0, -1.0]))
        np.testing.assert_allclose(rg.cumulative_residuals(model).I, [1.0, 0.0])

    def test_all_zero(self):
        model = rg.FactorModel(alpha=0.0, betas=np.zeros(1),
                               residuals=np.zeros(5))
        np.testing.assert_allclose(rg.cumulative_residuals(model).I, 0.0)

    def test_in_sample_path_ends_at_zero(self):
        rng = np.random.default_rng(8)
        X = rng.normal(0, 0.02, (2, 120))
        y = rng.normal(0, 0.03, 120)
        model = rg.fit_ols(y, X)
        I = rg.cumulative_residuals(model).I
        assert abs(I[-1]) < 1e-9
        assert len(I) == 120


class TestResidualPath:
    def test_constant_betas_match_manual(self):
        rng = np.random.default_rng(9)
        X = rng.normal(0, 0.02, (2, 40))
        y = rng.normal(0, 0.03, 40)
        betas = np.array([0.5, -0.25])
        I = rg.residual_path(y, betas, X)
        np.testing.assert_allclose(I, np.cumsum(y - betas @ X), atol=1e-15)

    def test_time_varying_betas(self):
        rng = np.random.default_rng(10)
        X = rng.normal(0, 0.02, (2, 30))
        B = rng.normal(0, 0.5, (2, 30))
        y = rng.normal(0, 0.03, 30)
        manual = np.cumsum(y - np.array([B[:, t] @ X[:, t] for t in range(30)]))
        np.testing.assert_allclose(rg.residual_path(y, B, X), manual, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            rg.residual_path(np.zeros(5), np.zeros((2, 4)), np.zeros((2, 5)))
