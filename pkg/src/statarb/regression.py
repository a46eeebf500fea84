"""Rolling multi-factor OLS of stock returns on a factor set.

Fitted with an intercept, the residuals dI sum to zero over the window, so
the cumulative residual path I ends at zero in sample; the current deviation
information lives in the fitted OU parameters of that path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientWindowError, SingularDesignError

# Reject designs whose normal equations are numerically unreliable.
MAX_CONDITION = 1e10


@dataclass(frozen=True)
class FactorModel:
    alpha: float            # fitted intercept, per day
    betas: np.ndarray       # one per factor row
    residuals: np.ndarray   # dI over the window
    window: tuple[int, int] = (0, 0)   # [start, stop) column span, informational

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.alpha + self.betas @ np.atleast_2d(np.asarray(X, dtype=float))


@dataclass(frozen=True)
class CumulativeResiduals:
    I: np.ndarray   # running sum of residuals


def fit_ols(y: np.ndarray, X: np.ndarray, *,
            window: tuple[int, int] = (0, 0)) -> FactorModel:
    """Least squares of y on the rows of X plus an intercept.

    X is r x W (one row per factor); solved through the normal equations
    with a condition guard, which is ample for W=120 and r <= 59.
    """
    y = np.asarray(y, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    r, W = X.shape
    if y.shape != (W,):
        raise ValueError(f"y has shape {y.shape}, X windows are {W} long")
    if W <= r + 1:
        raise InsufficientWindowError(f"window W={W} too short for r={r} factors")

    design = np.vstack([np.ones(W), X])          # (r+1) x W
    gram = design @ design.T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularDesignError(f"design condition number {cond:.3g}")
    coef = np.linalg.solve(gram, design @ y)
    residuals = y - design.T @ coef
    return FactorModel(alpha=float(coef[0]), betas=coef[1:],
                       residuals=residuals, window=window)


def cumulative_residuals(model: FactorModel) -> CumulativeResiduals:
    """I_k = sum of the first k residuals; I_W ~ 0 for an in-sample fit."""
    return CumulativeResiduals(I=np.cumsum(model.residuals))


def residual_path(y: np.ndarray, betas: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Cumulative residuals for externally supplied (possibly time-varying) betas.

    betas may be a vector (constant over the window) or an r x W matrix of
    per-day coefficients; no intercept is applied, the OU mean absorbs drift.
    """
    y = np.asarray(y, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    B = np.asarray(betas, dtype=float)
    if B.ndim == 1:
        fitted = B @ X
    else:
        if B.shape != X.shape:
            raise ValueError(f"betas {B.shape} do not match factors {X.shape}")
        fitted = np.einsum("rt,rt->t", B, X)
    return np.cumsum(y - fitted)
