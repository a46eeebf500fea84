import math

import numpy as np
import pytest

from statarb import ou
from statarb.errors import DegenerateSeriesError, NonMeanRevertingError

TABLE_PARAMS = ou.OuParams.from_ksm(kappa=6.0443, mu=0.2278, sigma=0.3459)


class TestFitAr1:
    def test_constant_series_degenerate(self):
        with pytest.raises(DegenerateSeriesError):
            ou.fit_ar1(np.full(100, 3.0))

    def test_monte_carlo_recovery(self):
        rng = np.random.default_rng(17)
        n = 100_000
        phi1 = 0.9
        x = np.empty(n)
        x[0] = 0.0
        shocks = rng.standard_normal(n)
        for t in range(1, n):
            x[t] = phi1 * x[t - 1] + shocks[t]
        fit = ou.fit_ar1(x)
        assert abs(fit.phi1 - phi1) < 0.01

    def test_alternating_sequence(self):
        x = np.tile([1.0, -1.0], 50)
        fit = ou.fit_ar1(x)
        # lag-1 autocorrelation of a +-1 alternation is -(W-1)/W
        assert fit.phi1 == pytest.approx(-(len(x) - 1) / len(x), abs=1e-12)

    def test_ols_variant(self):
        rng = np.random.default_rng(18)
        x = np.cumsum(rng.standard_normal(500)) * 0.1
        yw = ou.fit_ar1(x, method="yule_walker")
        ols = ou.fit_ar1(x, method="ols")
        assert abs(yw.phi1 - ols.phi1) < 0.05
        with pytest.raises(ValueError):
            ou.fit_ar1(x, method="mle")

    def test_too_short(self):
        with pytest.raises(ValueError):
            ou.fit_ar1(np.arange(10.0))


class TestAr1ToOu:
    def test_exact_log_inverse(self):
        fit = ou.Ar1Fit(phi0=0.0, phi1=math.exp(-1.0), resid_var=0.01)
        params = ou.ar1_to_ou(fit, dt=1 / 252)
        assert params.kappa == pytest.approx(252.0, abs=1e-9)
        assert params.mu == pytest.approx(0.0)

    def test_mu_from_phi0(self):
        for phi1 in (0.2, 0.5, 0.9, 0.99):
            fit = ou.Ar1Fit(phi0=(1 - phi1) * 0.2278, phi1=phi1, resid_var=0.01)
            assert ou.ar1_to_ou(fit).mu == pytest.approx(0.2278, rel=1e-12)

    def test_non_mean_reverting_rejected(self):
        for phi1 in (-0.1, 0.0, 1.0, 1.1):
            with pytest.raises(NonMeanRevertingError):
                ou.ar1_to_ou(ou.Ar1Fit(phi0=0.0, phi1=phi1, resid_var=0.01))

    def test_table_parameter_roundtrip_via_simulation(self):
        # simulate with a realistic fitted triple, refit, compare
        path = ou.simulate_ou(TABLE_PARAMS, x0=TABLE_PARAMS.mu, n_steps=100_000,
                              seed=99)
        recovered = ou.ar1_to_ou(ou.fit_ar1(path))
        assert abs(recovered.kappa - TABLE_PARAMS.kappa) / TABLE_PARAMS.kappa < 0.10
        assert abs(recovered.mu - TABLE_PARAMS.mu) / abs(TABLE_PARAMS.mu) < 0.05
        assert abs(recovered.sigma - TABLE_PARAMS.sigma) / TABLE_PARAMS.sigma < 0.05

    def test_analytic_roundtrip(self):
        rng = np.random.default_rng(20)
        dt = 1 / 252
        for _ in range(100):
            kappa = rng.uniform(0.5, 60.0)
            mu = rng.uniform(-1.0, 1.0)
            sigma = rng.uniform(0.05, 2.0)
            phi1 = math.exp(-kappa * dt)
            sigma_eq = sigma / math.sqrt(2 * kappa)
            fit = ou.Ar1Fit(phi0=mu * (1 - phi1), phi1=phi1,
                            resid_var=sigma_eq**2 * (1 - phi1**2))
            p = ou.ar1_to_ou(fit, dt=dt)
            assert p.kappa == pytest.approx(kappa, rel=1e-10)
            assert p.mu == pytest.approx(mu, rel=1e-10, abs=1e-12)
            assert p.sigma == pytest.approx(sigma, rel=1e-10)


class TestSScore:
    def test_at_mean(self):
        assert ou.s_score(TABLE_PARAMS.mu, TABLE_PARAMS) == 0.0

    def test_one_sigma(self):
        g = ou.s_score(TABLE_PARAMS.mu + TABLE_PARAMS.sigma_eq, TABLE_PARAMS)
        assert g == pytest.approx(1.0, rel=1e-12)

    def test_zero_level_table_values(self):
        # sigma_eq = sqrt(0.3459^2 / (2 * 6.0443)) ~ 0.09949
        assert TABLE_PARAMS.sigma_eq == pytest.approx(0.09949, abs=5e-6)
        assert ou.s_score(0.0, TABLE_PARAMS) == pytest.approx(-2.290, abs=5e-4)

    def test_affine_invariance(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            c = rng.uniform(-3, 3)
            g = ou.s_score(TABLE_PARAMS.mu + c * TABLE_PARAMS.sigma_eq, TABLE_PARAMS)
            assert g == pytest.approx(c, rel=1e-12, abs=1e-12)


class TestSimulateOu:
    def test_zero_vol_at_mean(self):
        params = ou.OuParams.from_ksm(5.0, 0.3, 0.0)
        path = ou.simulate_ou(params, x0=0.3, n_steps=50, seed=1)
        np.testing.assert_allclose(path, 0.3)

    def test_zero_vol_exponential_decay(self):
        kappa, mu, x0 = 7.0, 0.1, 1.0
        params = ou.OuParams.from_ksm(kappa, mu, 0.0)
        path = ou.simulate_ou(params, x0=x0, n_steps=100, dt=1 / 252, seed=1)
        t = np.arange(101) / 252
        np.testing.assert_allclose(path, mu + (x0 - mu) * np.exp(-kappa * t),
                                   atol=1e-12)

    def test_long_run_variance(self):
        params = ou.OuParams.from_ksm(6.0, 0.0, 0.3)
        path = ou.simulate_ou(params, x0=0.0, n_steps=1_000_000, seed=2)
        target = params.sigma_eq**2
        assert abs(np.var(path) - target) / target < 0.05

    def test_deterministic_given_seed(self):
        a = ou.simulate_ou(TABLE_PARAMS, 0.0, 100, seed=5)
        b = ou.simulate_ou(TABLE_PARAMS, 0.0, 100, seed=5)
        np.testing.assert_array_equal(a, b)

    def test_needs_steps(self):
        with pytest.raises(ValueError):
            ou.simulate_ou(TABLE_PARAMS, 0.0, 0)


class TestAcfPacf:
    def test_white_noise_band(self):
        rng = np.random.default_rng(23)
        acf, _ = ou.acf_pacf(rng.standard_normal(100_000), max_lag=10)
        assert acf[0] == 1.0
        assert np.all(np.abs(acf[1:]) < 0.02)

    def test_ar1_acf_decay(self):
        rng = np.random.default_rng(24)
        phi1 = 0.9
        n = 200_000
        x = np.empty(n)
        x[0] = 0.0
        eps = rng.standard_normal(n)
        for t in range(1, n):
            x[t] = phi1 * x[t - 1] + eps[t]
        acf, pacf = ou.acf_pacf(x, max_lag=6)
        np.testing.assert_allclose(acf[1:], phi1 ** np.arange(1, 7), atol=0.02)
        assert pacf[1] == pytest.approx(phi1, abs=0.02)
        assert np.all(np.abs(pacf[2:]) < 0.02)

    def test_degenerate(self):
        with pytest.raises(DegenerateSeriesError):
            ou.acf_pacf(np.zeros(100), max_lag=5)

    def test_lag_bounds(self):
        with pytest.raises(ValueError):
            ou.acf_pacf(np.arange(10.0), max_lag=5)


class TestMeanReversionDays:
    def test_one_day(self):
        assert ou.mean_reversion_days(ou.OuParams.from_ksm(252.0, 0, 1)) == 1.0

    def test_inclusion_boundary(self):
        assert ou.mean_reversion_days(ou.OuParams.from_ksm(4.0, 0, 1)) == 63.0

    def test_banks_row(self):
        tau = ou.mean_reversion_days(ou.OuParams.from_ksm(22.56, 0, 1))
        assert tau == pytest.approx(11.17, abs=5e-3)


class TestEligibility:
    def test_cutoff(self):
        assert ou.is_eligible(ou.OuParams.from_ksm(4.01, 0, 1))
        assert not ou.is_eligible(ou.OuParams.from_ksm(4.0, 0, 1))
        assert not ou.is_eligible(ou.OuParams.from_ksm(2.0, 0, 1))


class TestOuParams:
    def test_sigma_eq_consistency_enforced(self):
        with pytest.raises(ValueError):
            ou.OuParams(kappa=4.0, mu=0.0, sigma=1.0, sigma_eq=0.9)

    def test_invalid_kappa(self):
        with pytest.raises(NonMeanRevertingError):
            ou.OuParams.from_ksm(-1.0, 0.0, 1.0)
