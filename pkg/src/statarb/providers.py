"""Replication providers: per-day scores and frozen hedge weights.

A provider owns the factor machinery for one technique and answers, for a
given date index and stock, with the normalized residual score plus the
money weights of the replicating portfolio (per 1 currency unit of the main
stock).  Weights refer to the provider's instrument list: the panel stocks
for pca/lstm, the funds themselves for the index techniques.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from . import factors, lstm, ou, regression
from .errors import (AlignmentError, ConfigError, DegenerateSeriesError,
                     InsufficientWindowError, NonMeanRevertingError,
                     SingularDesignError)
from .marketdata import ReturnsPanel, relative_price

logger = logging.getLogger(__name__)

RESIDUAL_WINDOW = 120          # trading days for residual estimation
PCA_WINDOW = 252               # trailing window for the eigen fit
REFIT_EVERY = 252              # annual recalibration cadence


@dataclass(frozen=True)
class DayView:
    eligible: bool
    score: float                   # s-score; NaN when ineligible
    weights: np.ndarray | None     # money per instrument, frozen at open
    qm: float                      # total money in the replication leg
    params: ou.OuParams | None     # diagnostics
    alpha: float | None = None     # fitted intercept (OLS providers)
    betas: np.ndarray | None = None


INELIGIBLE = DayView(eligible=False, score=float("nan"), weights=None,
                     qm=0.0, params=None)


# Residual paths below this dispersion are replication round-off, not signal.
DEGENERATE_PATH_STD = 1e-12


def score_from_path(I: np.ndarray, *, kappa_min: float = ou.KAPPA_MIN,
                    ar1_method: str = "yule_walker") -> tuple[float, ou.OuParams] | None:
    """OU score of a cumulative-residual path, or None when ineligible."""
    if float(np.std(I)) <= DEGENERATE_PATH_STD:
        return None
    try:
        fit = ou.fit_ar1(I, method=ar1_method)
        params = ou.ar1_to_ou(fit)
    except (DegenerateSeriesError, NonMeanRevertingError):
        return None
    if not ou.is_eligible(params, kappa_min):
        return None
    return ou.s_score(float(I[-1]), params), params


class OlsFactorProvider:
    """Shared daily mechanics: regress the trailing window on factor rows.

    Subclasses supply, for any date index, the active factor return matrix
    (full panel columns) and the mapping from betas to instrument weights.
    """

    name = "ols"

    def __init__(self, panel: ReturnsPanel, *, window: int = RESIDUAL_WINDOW,
                 kappa_min: float = ou.KAPPA_MIN, ar1_method: str = "yule_walker"):
        self.panel = panel
        self.window = window
        self.kappa_min = kappa_min
        self.ar1_method = ar1_method
        self.instruments: tuple[str, ...] = ()
        self.instrument_prices: np.ndarray | None = None   # n_inst x (n+1)

    # -- subclass hooks -------------------------------------------------
    def prepare(self, trade_start: int, trade_end: int) -> None:
        raise NotImplementedError

    def factor_rows(self, t: int) -> np.ndarray:
        """Factor returns over all panel columns, active for date index t."""
        raise NotImplementedError

    def weights_from_betas(self, t: int, betas: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- common ----------------------------------------------------------
    def min_lookback(self) -> int:
        return self.window

    def day_view(self, t: int, stock_index: int) -> DayView:
        """Score and weights for panel date index t (fills at that close)."""
        lo, hi = t - self.window, t
        if lo < 0:
            raise InsufficientWindowError(f"date index {t} lacks {self.window} days of history")
        F = self.factor_rows(t)[:, lo:hi]
        y = self.panel.returns[stock_index, lo:hi]
        try:
            model = regression.fit_ols(y, F, window=(lo, hi))
        except (SingularDesignError, InsufficientWindowError):
            return INELIGIBLE
        I = np.cumsum(model.residuals)
        scored = score_from_path(I, kappa_min=self.kappa_min, ar1_method=self.ar1_method)
        if scored is None:
            return INELIGIBLE
        score, params = scored
        weights = self.weights_from_betas(t, model.betas)
        return DayView(eligible=True, score=score, weights=weights,
                       qm=float(weights.sum()), params=params,
                       alpha=model.alpha, betas=model.betas)


class PcaProvider(OlsFactorProvider):
    """Eigenportfolio factors, refit once per 252 trading days."""

    name = factors.PROVIDER_PCA

    def __init__(self, panel: ReturnsPanel, *, r_mode: str = "fixed",
                 r: int | None = 15, alpha: float | None = None,
                 pca_window: int = PCA_WINDOW, refit_every: int = REFIT_EVERY,
                 **kw):
        super().__init__(panel, **kw)
        self.r_mode = r_mode
        self.r = r
        self.alpha = alpha
        self.pca_window = pca_window
        self.refit_every = refit_every
        self.instruments = panel.tickers
        self.instrument_prices = np.vstack(
            [relative_price(row) for row in panel.returns])
        self._segments: list[tuple[int, np.ndarray, np.ndarray]] = []
        # per segment: (start_t, Q, factor_returns over all columns)

    def min_lookback(self) -> int:
        return max(self.window, self.pca_window)

    def prepare(self, trade_start: int, trade_end: int) -> None:
        d = len(self.panel.tickers)
        if self.pca_window <= d:
            raise InsufficientWindowError(
                f"PCA window {self.pca_window} must exceed universe size {d}")
        if trade_start < self.min_lookback():
            raise ConfigError(
                f"trading start {trade_start} lacks {self.min_lookback()} days of lookback")
        self._segments = []
        for s in range(trade_start, trade_end + 1, self.refit_every):
            sub = self.panel.returns[:, s - self.pca_window:s]
            Y, std = factors.standardize(sub, self.panel.tickers)
            eig = factors.symmetric_eigen(factors.correlation_matrix(Y),
                                          clamp_psd=True)
            r = factors.select_r(eig.eigenvalues, self.r_mode, r=self.r, alpha=self.alpha)
            fs = factors.eigenportfolio_factors(std, eig, r, self.panel.returns)
            self._segments.append((s, fs.component_weights, fs.factor_returns))
            logger.info("PCA refit at t=%d with r=%d", s, r)

    def _segment(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        active = None
        for s, Q, F in self._segments:
            if s <= t:
                active = (Q, F)
            else:
                break
        if active is None:
            raise ConfigError(f"no PCA fit active at date index {t}")
        return active

    def factor_rows(self, t: int) -> np.ndarray:
        return self._segment(t)[1]

    def weights_from_betas(self, t: int, betas: np.ndarray) -> np.ndarray:
        Q = self._segment(t)[0]
        return betas @ Q


class IndexFundProvider(OlsFactorProvider):
    """Existing or artificial funds as factors; one instrument per factor."""

    def __init__(self, panel: ReturnsPanel, fund_names: tuple[str, ...],
                 fund_returns: np.ndarray, provider_name: str, **kw):
        super().__init__(panel, **kw)
        fund_returns = np.atleast_2d(np.asarray(fund_returns, dtype=float))
        if fund_returns.shape[1] != panel.n_days:
            raise AlignmentError(
                f"fund returns cover {fund_returns.shape[1]} days, panel has {panel.n_days}")
        if fund_returns.shape[0] != len(fund_names):
            raise AlignmentError("one name per fund row required")
        self.name = provider_name
        self._factor_set = factors.index_factor_set(fund_returns, provider_name,
                                                    n_days=panel.n_days)
        self.instruments = tuple(fund_names)
        self.instrument_prices = np.vstack(
            [relative_price(row) for row in fund_returns])

    def prepare(self, trade_start: int, trade_end: int) -> None:
        if trade_start < self.min_lookback():
            raise ConfigError(
                f"trading start {trade_start} lacks {self.min_lookback()} days of lookback")

    def factor_rows(self, t: int) -> np.ndarray:
        return self._factor_set.factor_returns

    def weights_from_betas(self, t: int, betas: np.ndarray) -> np.ndarray:
        return np.asarray(betas, dtype=float)


class LstmProvider:
    """Per-stock stacked networks retrained annually, states carried daily.

    The network for stock i maps the other stocks' same-day returns to a
    weight vector; residuals over the trailing window use each day's own
    weights (no intercept, the OU mean absorbs drift).
    """

    name = factors.PROVIDER_LSTM

    def __init__(self, panel: ReturnsPanel, *, train_config: lstm.TrainConfig,
                 train_len: int = 756, warmup: int = 120,
                 retrain_every: int = REFIT_EVERY, window: int = RESIDUAL_WINDOW,
                 kappa_min: float = ou.KAPPA_MIN, ar1_method: str = "yule_walker",
                 seed: int = 0):
        self.panel = panel
        self.train_config = train_config
        self.train_len = train_len
        self.warmup = max(warmup, window)
        self.retrain_every = retrain_every
        self.window = window
        self.kappa_min = kappa_min
        self.ar1_method = ar1_method
        self.seed = seed
        self.instruments = panel.tickers
        self.instrument_prices = np.vstack(
            [relative_price(row) for row in panel.returns])
        self._others = {
            i: [j for j in range(len(panel.tickers)) if j != i]
            for i in range(len(panel.tickers))
        }
        # segment k -> (start_t, {stock: betas over columns [start-warmup, seg_end)})
        self._segments: list[tuple[int, int, dict[int, np.ndarray]]] = []
        self.loss_traces: dict[tuple[int, int], list[float]] = {}
        # fraction of |beta| > 0.99 per (segment, stock): tanh-head saturation
        self.saturation: dict[tuple[int, int], float] = {}

    def min_lookback(self) -> int:
        return self.train_len + self.warmup

    def _child_seed(self, segment: int, stock: int) -> int:
        seq = np.random.SeedSequence(self.seed, spawn_key=(segment, stock))
        return int(seq.generate_state(1)[0])

    def prepare(self, trade_start: int, trade_end: int) -> None:
        if trade_start < self.min_lookback():
            raise ConfigError(
                f"trading start {trade_start} lacks {self.min_lookback()} days "
                f"of training history plus warm-up")
        self._segments = []
        R = self.panel.returns
        for k, s in enumerate(range(trade_start, trade_end + 1, self.retrain_every)):
            seg_end = min(s + self.retrain_every, trade_end + 1)
            betas_by_stock: dict[int, np.ndarray] = {}
            for i in range(len(self.panel.tickers)):
                others = self._others[i]
                cfg = dataclasses.replace(self.train_config,
                                          seed=self._child_seed(k, i))
                model, trace = lstm.train_arrays(
                    R[others, s - self.train_len:s], R[i, s - self.train_len:s], cfg)
                self.loss_traces[(k, i)] = trace
                betas = lstm.forward_betas(model, R[others, s - self.warmup:seg_end])
                betas_by_stock[i] = betas
                saturated = float(np.mean(np.abs(betas) > 0.99))
                self.saturation[(k, i)] = saturated
                if saturated > 0.05:
                    logger.warning("LSTM head saturating for %s (%.1f%% of weights)",
                                   self.panel.tickers[i], 100 * saturated)
            self._segments.append((s, seg_end, betas_by_stock))
            logger.info("LSTM retrain %d at t=%d for %d stocks", k, s,
                        len(self.panel.tickers))

    def _segment(self, t: int) -> tuple[int, int, dict[int, np.ndarray]]:
        active = None
        for seg in self._segments:
            if seg[0] <= t:
                active = seg
            else:
                break
        if active is None:
            raise ConfigError(f"no trained LSTM active at date index {t}")
        return active

    def day_view(self, t: int, stock_index: int) -> DayView:
        start, _, betas_by_stock = self._segment(t)
        betas = betas_by_stock[stock_index]         # [out, columns from start-warmup)
        offset = start - self.warmup
        lo, hi = t - self.window, t
        if lo < offset:
            raise InsufficientWindowError(f"warm-up does not cover date index {t}")
        others = self._others[stock_index]
        X = self.panel.returns[others, lo:hi]
        B = betas[:, lo - offset:hi - offset]
        y = self.panel.returns[stock_index, lo:hi]
        I = regression.residual_path(y, B, X)
        scored = score_from_path(I, kappa_min=self.kappa_min, ar1_method=self.ar1_method)
        if scored is None:
            return INELIGIBLE
        score, params = scored
        weights = np.zeros(len(self.panel.tickers))
        weights[others] = B[:, -1]
        return DayView(eligible=True, score=score, weights=weights,
                       qm=float(weights.sum()), params=params,
                       alpha=None, betas=B[:, -1])
