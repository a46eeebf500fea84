"""Systematic factor construction.

Three providers feed the replication regressions: eigenportfolios of the
returns correlation matrix, existing index funds, and artificial sector
funds.  Eigenportfolio i holds f_i^(k) / sigma_k currency units of stock k,
so its return is the i-th principal component of the standardized panel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateSeriesError, InsufficientWindowError, AlignmentError

# Tiny negative eigenvalues of a PSD matrix are numerical noise; clamp them.
EIGENVALUE_FLOOR = -1e-10

PROVIDER_PCA = "pca"
PROVIDER_EXISTING_ETF = "existing_etf"
PROVIDER_SECTOR_ETF = "sector_etf"
PROVIDER_LSTM = "lstm"


@dataclass(frozen=True)
class Standardization:
    means: np.ndarray   # per-stock sample mean of returns
    stds: np.ndarray    # per-stock sample std (ddof=1)


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray    # descending
    eigenvectors: np.ndarray   # orthonormal columns, sign-fixed


@dataclass(frozen=True)
class FactorSet:
    provider: str
    factor_returns: np.ndarray              # r x n
    component_weights: np.ndarray | None    # r x n_instruments, money per factor


def standardize(returns: np.ndarray,
                tickers: tuple[str, ...] | None = None) -> tuple[np.ndarray, Standardization]:
    """Per-row zero-mean unit-std normalization of a d x n returns matrix."""
    R = np.asarray(returns, dtype=float)
    means = R.mean(axis=1)
    stds = R.std(axis=1, ddof=1)
    bad = np.flatnonzero(stds <= 0)
    if bad.size:
        names = [tickers[i] if tickers else f"row {i}" for i in bad]
        raise DegenerateSeriesError(f"zero-variance returns for {', '.join(names)}")
    Y = (R - means[:, None]) / stds[:, None]
    return Y, Standardization(means=means, stds=stds)


def correlation_matrix(Y: np.ndarray) -> np.ndarray:
    """Sample correlation (1/(n-1)) Y Y^T of a standardized d x n matrix."""
    Y = np.asarray(Y, dtype=float)
    d, n = Y.shape
    if n <= d:
        raise InsufficientWindowError(f"need n > d for a stable estimate, got n={n}, d={d}")
    C = (Y @ Y.T) / (n - 1)
    return 0.5 * (C + C.T)


def symmetric_eigen(M: np.ndarray, clamp_psd: bool = False) -> EigenDecomposition:
    """Spectral decomposition with descending eigenvalues and fixed signs.

    Each eigenvector is flipped so its coordinate sum is >= 0 (ties broken on
    the first nonzero coordinate), which pins the whole downstream pipeline
    to one orientation across platforms.  With clamp_psd, tiny negative
    eigenvalues of a nominally PSD input (correlation matrices) are zeroed
    and substantial ones rejected.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.T).max() > 1e-10 * scale:
        raise ContractError("matrix is not symmetric within 1e-10")

    values, vectors = np.linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(values)[::-1]
    values = values[order]
    vectors = vectors[:, order]

    if clamp_psd:
        if np.any(values < EIGENVALUE_FLOOR * scale * M.shape[0]):
            raise ContractError(
                f"matrix has significantly negative eigenvalue {values.min()}")
        values = np.where(values < 0, 0.0, values)

    for i in range(vectors.shape[1]):
        col = vectors[:, i]
        total = col.sum()
        if total < 0:
            vectors[:, i] = -col
        elif total == 0:
            nonzero = np.flatnonzero(col)
            if nonzero.size and col[nonzero[0]] < 0:
                vectors[:, i] = -col
    return EigenDecomposition(eigenvalues=values, eigenvectors=vectors)


def explained_fraction(eigenvalues: np.ndarray, k: int) -> float:
    lam = np.asarray(eigenvalues, dtype=float)
    if not 1 <= k <= lam.size:
        raise ValueError(f"k must be in [1, {lam.size}], got {k}")
    total = lam.sum()
    if total <= 0:
        raise DegenerateSeriesError("spectrum has no total variance")
    return float(lam[:k].sum() / total)


def select_r(eigenvalues: np.ndarray, mode: str, *,
             r: int | None = None, alpha: float | None = None) -> int:
    """Number of factors: `fixed` returns r, `variance_target` the smallest k
    whose cumulative explained fraction reaches alpha."""
    lam = np.asarray(eigenvalues, dtype=float)
    if mode == "fixed":
        if r is None or not 1 <= r <= lam.size:
            raise ValueError(f"fixed r must be in [1, {lam.size}], got {r}")
        return int(r)
    if mode == "variance_target":
        if alpha is None or not 0 < alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {alpha}")
        cum = np.cumsum(lam) / lam.sum()
        return int(min(np.searchsorted(cum, alpha - 1e-15) + 1, lam.size))
    raise ValueError(f"unknown mode {mode!r}")


def eigenportfolio_weights(std: Standardization,
                           eig: EigenDecomposition, r: int) -> np.ndarray:
    """Money weights Q[i, k] = f_i^(k) / sigma_k for the first r components."""
    if not 1 <= r <= eig.eigenvectors.shape[1]:
        raise ValueError(f"r={r} out of range")
    return eig.eigenvectors[:, :r].T / std.stds[None, :]


def eigenportfolio_factors(std: Standardization, eig: EigenDecomposition,
                           r: int, returns: np.ndarray) -> FactorSet:
    """Eigenportfolio return streams F = Q R with their component weights."""
    Q = eigenportfolio_weights(std, eig, r)
    F = Q @ np.asarray(returns, dtype=float)
    return FactorSet(provider=PROVIDER_PCA, factor_returns=F, component_weights=Q)


def index_factor_set(fund_returns: np.ndarray, provider: str,
                     n_days: int | None = None) -> FactorSet:
    """Wrap fund return rows as factors; each factor is one tradable instrument."""
    F = np.atleast_2d(np.asarray(fund_returns, dtype=float))
    if n_days is not None and F.shape[1] != n_days:
        raise AlignmentError(f"fund returns cover {F.shape[1]} days, panel has {n_days}")
    return FactorSet(provider=provider, factor_returns=F,
                     component_weights=np.eye(F.shape[0]))
