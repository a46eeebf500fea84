"""Ornstein-Uhlenbeck modelling of cumulative residuals.

The residual path I_k is treated as a discretely observed OU process through
its AR(1) representation:

    I_{k+1} = phi0 + phi1 * I_k + zeta,   zeta ~ N(0, var)

with the exact parameter map

    kappa = -ln(phi1) / dt
    mu    = phi0 / (1 - phi1)
    sigma = sqrt(var * 2 * kappa / (1 - phi1**2))

and the equilibrium deviation sigma_eq = sigma / sqrt(2 * kappa).  The same
exact discretization drives the simulator, so estimator round trips are
unbiased by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSeriesError, NonMeanRevertingError

TRADING_DAYS = 252
DT = 1.0 / TRADING_DAYS

# Daily eligibility cutoff: mean reversion within ~60 trading days.
KAPPA_MIN = 4.0


@dataclass(frozen=True)
class Ar1Fit:
    phi0: float
    phi1: float
    resid_var: float  # sample variance of the one-step prediction errors


@dataclass(frozen=True)
class OuParams:
    kappa: float      # per year
    mu: float
    sigma: float      # per sqrt(year)
    sigma_eq: float   # sigma / sqrt(2 kappa)

    def __post_init__(self):
        if self.kappa <= 0 or self.sigma < 0:
            raise NonMeanRevertingError(
                f"invalid OU parameters kappa={self.kappa}, sigma={self.sigma}"
            )
        expected = self.sigma / math.sqrt(2.0 * self.kappa)
        if abs(self.sigma_eq - expected) > 1e-12 * max(1.0, abs(expected)):
            raise ValueError(
                f"sigma_eq={self.sigma_eq} inconsistent with sigma={self.sigma}, "
                f"kappa={self.kappa}"
            )

    @classmethod
    def from_ksm(cls, kappa: float, mu: float, sigma: float) -> "OuParams":
        if kappa <= 0:
            raise NonMeanRevertingError(f"kappa must be positive, got {kappa}")
        return cls(kappa=kappa, mu=mu, sigma=sigma,
                   sigma_eq=sigma / math.sqrt(2.0 * kappa))


def fit_ar1(I: np.ndarray, method: str = "yule_walker") -> Ar1Fit:
    """Fit a lag-1 autoregression to the path I.

    `yule_walker` (default) uses the method of moments: phi1 is the lag-1
    sample autocorrelation.  `ols` regresses I_k on I_{k-1}, a lower-bias
    alternative kept behind this flag for sensitivity checks.
    """
    I = np.asarray(I, dtype=float)
    if I.ndim != 1 or len(I) < 30:
        raise ValueError(f"need a 1-d path of length >= 30, got shape {I.shape}")
    centered = I - I.mean()
    gamma0 = float(centered @ centered) / len(I)
    if gamma0 <= 0.0 or not np.isfinite(gamma0):
        raise DegenerateSeriesError("residual path has no variance")

    if method == "yule_walker":
        gamma1 = float(centered[1:] @ centered[:-1]) / len(I)
        phi1 = gamma1 / gamma0
        phi0 = float(I.mean()) * (1.0 - phi1)
    elif method == "ols":
        x, y = I[:-1], I[1:]
        vx = float(np.var(x))
        if vx <= 0.0:
            raise DegenerateSeriesError("lagged path has no variance")
        phi1 = float(np.cov(x, y, bias=True)[0, 1]) / vx
        phi0 = float(y.mean() - phi1 * x.mean())
    else:
        raise ValueError(f"unknown AR(1) method {method!r}")

    zeta = I[1:] - phi0 - phi1 * I[:-1]
    resid_var = float(np.var(zeta, ddof=1))
    return Ar1Fit(phi0=phi0, phi1=phi1, resid_var=resid_var)


def ar1_to_ou(fit: Ar1Fit, dt: float = DT) -> OuParams:
    """Map AR(1) coefficients to OU parameters via the exact discretization."""
    if not (0.0 < fit.phi1 < 1.0):
        raise NonMeanRevertingError(f"phi1={fit.phi1} outside (0, 1)")
    kappa = -math.log(fit.phi1) / dt
    mu = fit.phi0 / (1.0 - fit.phi1)
    sigma = math.sqrt(fit.resid_var * 2.0 * kappa / (1.0 - fit.phi1**2))
    sigma_eq = sigma / math.sqrt(2.0 * kappa)
    return OuParams(kappa=kappa, mu=mu, sigma=sigma, sigma_eq=sigma_eq)


def s_score(I_now: float, params: OuParams) -> float:
    """Deviation of the current residual value in equilibrium units."""
    return (I_now - params.mu) / params.sigma_eq


def is_eligible(params: OuParams, kappa_min: float = KAPPA_MIN) -> bool:
    """Daily trading filter: fast enough mean reversion."""
    return params.kappa > kappa_min


def mean_reversion_days(params: OuParams) -> float:
    """Characteristic correction horizon tau = 252 / kappa in trading days."""
    return TRADING_DAYS / params.kappa


def simulate_ou(
    params: OuParams,
    x0: float,
    n_steps: int,
    dt: float = DT,
    seed: int | np.random.SeedSequence | np.random.Generator = 0,
) -> np.ndarray:
    """Exact-discretization OU path of length n_steps + 1 starting at x0.

    X_{t+dt} = mu + (X_t - mu) e^{-kappa dt} + sigma_eq sqrt(1 - e^{-2 kappa dt}) Z
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    phi = math.exp(-params.kappa * dt)
    shock = params.sigma_eq * math.sqrt(1.0 - phi * phi)
    path = np.empty(n_steps + 1)
    path[0] = x0
    z = rng.standard_normal(n_steps)
    x = x0
    for t in range(n_steps):
        x = params.mu + (x - params.mu) * phi + shock * z[t]
        path[t + 1] = x
    return path


def acf_pacf(I: np.ndarray, max_lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample autocorrelations and partial autocorrelations up to max_lag.

    Index j of either array is the lag-j value; lag 0 is 1 by convention.
    PACF follows the Durbin-Levinson recursion.
    """
    I = np.asarray(I, dtype=float)
    n = len(I)
    if max_lag < 1 or max_lag >= n / 2:
        raise ValueError(f"max_lag must be in [1, n/2), got {max_lag} for n={n}")
    centered = I - I.mean()
    gamma0 = float(centered @ centered) / n
    if gamma0 <= 0.0:
        raise DegenerateSeriesError("series has no variance")

    acf = np.empty(max_lag + 1)
    acf[0] = 1.0
    for j in range(1, max_lag + 1):
        acf[j] = float(centered[j:] @ centered[:-j]) / n / gamma0

    pacf = np.empty(max_lag + 1)
    pacf[0] = 1.0
    phi_prev = np.zeros(0)
    for k in range(1, max_lag + 1):
        if k == 1:
            phi_k = np.array([acf[1]])
        else:
            num = acf[k] - float(phi_prev @ acf[k - 1:0:-1])
            den = 1.0 - float(phi_prev @ acf[1:k])
            alpha = num / den
            phi_k = np.empty(k)
            phi_k[:-1] = phi_prev - alpha * phi_prev[::-1]
            phi_k[-1] = alpha
        pacf[k] = phi_k[-1]
        phi_prev = phi_k
    return acf, pacf
