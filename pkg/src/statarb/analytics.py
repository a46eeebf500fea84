"""Performance metrics: annualized Sharpe tables, sector curves, grid search.

Sector sub-portfolios restrict the ledger to one sector's tickers; their
starting capital is the sector's share of E0, held flat (banked profits
still accrue interest), so a sector with no trades shows zero daily returns
and a -inf Sharpe under a positive risk-free rate.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .backtest import BacktestEngine, BacktestResult, SimConfig
from .errors import BankruptcyError, ConfigError
from .marketdata import ReturnsPanel, Universe
from .signals import Thresholds

PORTFOLIO = "PORTFOLIO"

# Below this, a return series is treated as constant when applying the
# zero-volatility conventions.
SIGMA_FLOOR = 1e-12


def annualized_sharpe(daily_returns: np.ndarray, r_f: float) -> float:
    """S = (252 mean - r_f) / (sqrt(252) std); sign(num)*inf when std is 0.

    An exactly-zero numerator with zero volatility reports 0 (the portfolio
    matched the risk-free growth); an empty series reports NaN.
    """
    r = np.asarray(daily_returns, dtype=float)
    if r.size == 0:
        return float("nan")
    numerator = 252.0 * float(r.mean()) - r_f
    sigma = float(r.std(ddof=1)) if r.size > 1 else 0.0
    if sigma < SIGMA_FLOOR:
        if abs(numerator) < SIGMA_FLOOR:
            return 0.0
        return math.copysign(math.inf, numerator)
    return numerator / (math.sqrt(252.0) * sigma)


def equity_returns(curve: np.ndarray) -> np.ndarray:
    curve = np.asarray(curve, dtype=float)
    return curve[1:] / curve[:-1] - 1.0


@dataclass(frozen=True)
class SectorCurves:
    sectors: tuple[str, ...]
    rel_equity: dict[str, np.ndarray]   # E_t / E_0 per sector
    rel_cash: dict[str, np.ndarray]


def sector_curves(result: BacktestResult, universe: Universe) -> SectorCurves:
    """Relative equity/cash paths of each sector's sub-portfolio."""
    cfg = result.config
    n = len(result.dates)
    growth = math.exp(cfg.r_f * cfg.dt)
    members: dict[str, list[str]] = {}
    for t in universe.tickers:
        members.setdefault(universe.sector(t), []).append(t)

    sector_of = {t: universe.sector(t) for t in universe.tickers}
    profit_at: dict[str, np.ndarray] = {s: np.zeros(n) for s in members}
    flow_at: dict[str, np.ndarray] = {s: np.zeros(n) for s in members}
    for tr in result.trades:
        s = sector_of[tr.ticker]
        profit_at[s][tr.k_close] += tr.profit
        flow_at[s][tr.k_open] += tr.open_flow
        flow_at[s][tr.k_close] += tr.close_flow

    rel_e: dict[str, np.ndarray] = {}
    rel_c: dict[str, np.ndarray] = {}
    for s, tickers in members.items():
        e0_s = cfg.e0 * len(tickers) / cfg.n_traders
        banked = np.zeros(n)
        cash_banked = np.zeros(n)
        for k in range(1, n):
            banked[k] = banked[k - 1] * growth + profit_at[s][k]
            cash_banked[k] = cash_banked[k - 1] * growth + flow_at[s][k]
        rel_e[s] = (e0_s + banked) / e0_s
        rel_c[s] = (e0_s + cash_banked) / e0_s
    return SectorCurves(sectors=tuple(sorted(members)), rel_equity=rel_e,
                        rel_cash=rel_c)


@dataclass(frozen=True)
class SharpeReport:
    rows: tuple[tuple[int, str, float], ...]   # (year, group, value)

    def value(self, year: int, group: str) -> float:
        for y, g, v in self.rows:
            if y == year and g == group:
                return v
        raise KeyError((year, group))


def sector_report(result: BacktestResult, universe: Universe) -> SharpeReport:
    """Per-year Sharpe for each sector sub-portfolio and the whole book.

    The PORTFOLIO row is the metric of the aggregate equity curve, not an
    average of the sector rows.
    """
    cfg = result.config
    curves = sector_curves(result, universe)
    years = sorted({d.year for d in result.dates[1:]})
    year_of_step = np.array([d.year for d in result.dates[1:]])

    rows: list[tuple[int, str, float]] = []
    portfolio_returns = equity_returns(result.equity)
    for year in years:
        mask = year_of_step == year
        for sector in curves.sectors:
            r = equity_returns(curves.rel_equity[sector])[mask]
            rows.append((year, sector, annualized_sharpe(r, cfg.r_f)))
        rows.append((year, PORTFOLIO,
                     annualized_sharpe(portfolio_returns[mask], cfg.r_f)))
    return SharpeReport(rows=tuple(rows))


@dataclass(frozen=True)
class GridResult:
    open_values: np.ndarray
    close_values: np.ndarray
    profits: np.ndarray            # [n_open, n_close], E_T - E0
    best: tuple[int, int]          # row-major argmax, first cell wins ties

    @property
    def best_thresholds(self) -> tuple[float, float]:
        return (float(self.open_values[self.best[0]]),
                float(self.close_values[self.best[1]]))


def threshold_axis(lo: float, hi: float, step: float) -> np.ndarray:
    if step <= 0 or hi < lo:
        raise ConfigError(f"bad axis [{lo}, {hi}] step {step}")
    count = int(round((hi - lo) / step)) + 1
    axis = lo + step * np.arange(count)
    return axis[axis <= hi + 1e-12]


def grid_search(panel: ReturnsPanel, provider, cfg: SimConfig,
                open_range: tuple[float, float, float],
                close_range: tuple[float, float, float],
                trade_start: int, trade_end: int,
                universe: Universe | None = None,
                threads: int = 1) -> GridResult:
    """Backtest every symmetric threshold pair over the optimization interval.

    Cells share the prepared provider read-only; a bankrupt cell records
    -E0 instead of aborting the sweep.
    """
    open_values = threshold_axis(*open_range)
    close_values = threshold_axis(*close_range)
    if open_values.min() <= 0:
        raise ConfigError("opening cut-offs must be positive")
    provider.prepare(trade_start, trade_end)

    def run_cell(pair: tuple[int, int]) -> float:
        i, j = pair
        th = Thresholds(g_ol=float(open_values[i]), g_os=float(open_values[i]),
                        g_cl=float(close_values[j]), g_cs=float(close_values[j]))
        engine = BacktestEngine(panel, provider, th, cfg, trade_start, trade_end,
                                universe)
        try:
            return engine.run().final_equity - cfg.e0
        except BankruptcyError:
            return -cfg.e0

    cells = [(i, j) for i in range(len(open_values)) for j in range(len(close_values))]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(run_cell, cells))
    else:
        values = [run_cell(c) for c in cells]

    profits = np.array(values).reshape(len(open_values), len(close_values))
    best_flat = int(np.argmax(profits))
    best = (best_flat // len(close_values), best_flat % len(close_values))
    return GridResult(open_values=open_values, close_values=close_values,
                      profits=profits, best=best)
