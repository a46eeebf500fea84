"""Day-by-day trading simulation over the universe.

Independent per-stock traders share one equity account.  A trade of stock i
opened at t0 and closed at t1 = t0 + dT realizes

    P = Lambda * [ s (R_i - Q R_M) - s e^{rf dT} (1 - Q)
                   - c ( e^{rf dT} |1 + Q| + |(1 + R_i) + Q (1 + R_M)| ) ]

with s = +1 for longs and -1 for shorts, Q the total money in the hedge leg
and Lambda frozen from the prior day's equity.  Equity compounds at the
risk-free rate and absorbs each profit at its close; cash additionally books
the open-leg flows, so both curves meet again after full liquidation.

The first output row is the pre-trade anchor (E = C = E0); decisions start
on the following trading day and fills happen at the deciding day's close.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import signals
from .errors import BankruptcyError, ConfigError, ContractError
from .marketdata import ReturnsPanel, Universe, relative_price
from .providers import DayView
from .signals import Action, Thresholds

logger = logging.getLogger(__name__)

DT = 1.0 / 252


@dataclass(frozen=True)
class SimConfig:
    cost: float = 0.001            # fraction per transaction leg
    r_f: float = 0.015             # per year
    e0: float = 100.0              # starting capital
    leverage: float = 2.0
    n_traders: int = 60            # divisor of the per-trade scale
    freeze_days: int = 60          # no opens in the final stretch
    dt: float = DT
    finance_residual: bool = True  # zero the unhedged-cash term when False

    def __post_init__(self):
        if self.cost < 0 or self.e0 <= 0 or self.n_traders < 1:
            raise ConfigError("need cost >= 0, e0 > 0, n_traders >= 1")


@dataclass
class OpenPosition:
    ticker: str
    direction: int                 # +1 long, -1 short
    t_open: int                    # panel date index of the fill
    k_open: int                    # trading-day ordinal
    lambda_at_open: float
    qm: float
    weights: np.ndarray            # frozen money per instrument
    entry_main: float              # main-stock relative price at open
    entry_instruments: np.ndarray  # instrument relative prices at open


@dataclass(frozen=True)
class TradeRecord:
    ticker: str
    t_open: int
    t_close: int
    direction: int
    profit: float
    lambda_at_open: float
    qm: float
    open_flow: float
    close_flow: float
    k_open: int
    k_close: int


@dataclass
class BacktestResult:
    dates: tuple                   # trading dates, row 0 is the anchor
    equity: np.ndarray             # E_t
    cash: np.ndarray               # C_t
    trades: list[TradeRecord]
    signal_log: list[tuple]        # (date, ticker, score, action)
    config: SimConfig
    ou_log: list[tuple] | None = None
    beta_log: list[tuple] | None = None

    @property
    def final_equity(self) -> float:
        return float(self.equity[-1])


def scale_factor(e_t: float, n: int, leverage: float) -> float:
    """Per-trade notional Lambda = (leverage / n) * equity."""
    if e_t <= 0:
        raise BankruptcyError(f"equity {e_t} exhausted")
    return (leverage / n) * e_t


def trade_profit(pos: OpenPosition, r_i: float, r_m: float, delta_years: float,
                 cfg: SimConfig) -> float:
    """Realized profit of one round trip, costs on both legs included."""
    s = float(pos.direction)
    growth = math.exp(cfg.r_f * delta_years)
    residual = growth * (1.0 - pos.qm) if cfg.finance_residual else 0.0
    close_notional = abs((1.0 + r_i) + pos.qm * (1.0 + r_m))
    costs = cfg.cost * (growth * abs(1.0 + pos.qm) + close_notional)
    return pos.lambda_at_open * (s * (r_i - pos.qm * r_m) - s * residual - costs)


def _open_flow(pos: OpenPosition, cfg: SimConfig) -> float:
    """Cash leaving the account at open: net principal plus the entry cost."""
    s = float(pos.direction)
    return -s * pos.lambda_at_open * (1.0 - pos.qm) \
        - cfg.cost * pos.lambda_at_open * abs(1.0 + pos.qm)


def _close_flow(pos: OpenPosition, r_i: float, r_m: float, cfg: SimConfig) -> float:
    """Cash returning at close: hedged P&L net of the exit cost."""
    s = float(pos.direction)
    close_notional = abs((1.0 + r_i) + pos.qm * (1.0 + r_m))
    return pos.lambda_at_open * (s * (r_i - pos.qm * r_m) - cfg.cost * close_notional)


class BacktestEngine:
    """Mutable day-stepping state; use run_backtest for the one-shot API."""

    def __init__(self, panel: ReturnsPanel, provider, thresholds: Thresholds,
                 cfg: SimConfig, trade_start: int, trade_end: int,
                 universe: Universe | None = None, collect_ou: bool = False,
                 collect_betas: bool = False):
        if not 0 <= trade_start < trade_end < len(panel.dates):
            raise ConfigError(f"bad trading range [{trade_start}, {trade_end}] "
                              f"for {len(panel.dates)} dates")
        self.panel = panel
        self.provider = provider
        self.th = thresholds
        self.cfg = cfg
        self.trade_start = trade_start
        self.trade_end = trade_end
        if universe is not None:
            unknown = [t for t in universe.tickers if t not in panel.tickers]
            if unknown:
                raise ConfigError(f"universe tickers missing from panel: {unknown}")
            self.traded = [panel.tickers.index(t) for t in universe.tickers]
        else:
            self.traded = list(range(len(panel.tickers)))

        self.n_steps = trade_end - trade_start            # decision days
        self.equity = np.empty(self.n_steps + 1)
        self.cash = np.empty(self.n_steps + 1)
        self.equity[0] = self.cash[0] = cfg.e0
        self.states = {i: signals.FLAT for i in self.traded}
        self.positions: dict[int, OpenPosition] = {}
        self.trades: list[TradeRecord] = []
        self.signal_log: list[tuple] = []
        self.collect_ou = collect_ou
        self.ou_log: list[tuple] = []   # (date, ticker, OuParams, score)
        self.collect_betas = collect_betas
        self.beta_log: list[tuple] = []   # (date, ticker, alpha, betas)
        self.main_prices = {i: relative_price(panel.returns[i]) for i in self.traded}

    def step(self, k: int) -> None:
        """Trading day k (1-based): scores from data through its close."""
        if not 1 <= k <= self.n_steps:
            raise ContractError(f"step {k} out of range")
        t = self.trade_start + k
        cfg = self.cfg
        growth = math.exp(cfg.r_f * cfg.dt)
        allow_open = k <= self.n_steps - cfg.freeze_days and k < self.n_steps
        force_close = k == self.n_steps
        lam = scale_factor(float(self.equity[k - 1]), cfg.n_traders, cfg.leverage)

        profits = 0.0
        flows = 0.0
        date = self.panel.dates[t]
        for i in self.traded:
            view = self.provider.day_view(t, i)
            state = self.states[i]
            if view.eligible:
                action = signals.decide(view.score, state, self.th)
            else:
                action = Action.HOLD
            if action in (Action.OPEN_LONG, Action.OPEN_SHORT) and not allow_open:
                action = Action.HOLD
            if force_close and action is Action.HOLD and state != signals.FLAT:
                action = Action.CLOSE_LONG if state == signals.LONG else Action.CLOSE_SHORT

            if action in (Action.OPEN_LONG, Action.OPEN_SHORT):
                pos = self._open(i, t, k, lam, view, action)
                flows += _open_flow(pos, cfg)
            elif action in (Action.CLOSE_LONG, Action.CLOSE_SHORT):
                profit, flow = self._close(i, t, k)
                profits += profit
                flows += flow
            self.states[i] = signals.apply(action, state)
            self.signal_log.append((date, self.panel.tickers[i],
                                    view.score, action.value))
            if self.collect_ou and view.params is not None:
                self.ou_log.append((date, self.panel.tickers[i],
                                    view.params, view.score))
            if self.collect_betas and view.betas is not None:
                self.beta_log.append((date, self.panel.tickers[i],
                                      view.alpha, view.betas))

        self.equity[k] = self.equity[k - 1] * growth + profits
        self.cash[k] = self.cash[k - 1] * growth + flows
        if self.equity[k] <= 0:
            raise BankruptcyError(f"equity {self.equity[k]:.4f} on {date}")

    def _open(self, i: int, t: int, k: int, lam: float, view: DayView,
              action: Action) -> OpenPosition:
        direction = signals.LONG if action is Action.OPEN_LONG else signals.SHORT
        pos = OpenPosition(
            ticker=self.panel.tickers[i], direction=direction, t_open=t, k_open=k,
            lambda_at_open=lam, qm=view.qm, weights=view.weights.copy(),
            entry_main=float(self.main_prices[i][t]),
            entry_instruments=self.provider.instrument_prices[:, t].copy(),
        )
        if i in self.positions:
            raise ContractError(f"{pos.ticker} already has an open position")
        self.positions[i] = pos
        return pos

    def _close(self, i: int, t: int, k: int) -> tuple[float, float]:
        pos = self.positions.pop(i, None)
        if pos is None:
            raise ContractError(f"close without open for {self.panel.tickers[i]}")
        r_i = float(self.main_prices[i][t] / pos.entry_main - 1.0)
        current = self.provider.instrument_prices[:, t]
        hedge_gain = float(pos.weights @ (current / pos.entry_instruments - 1.0))
        r_m = hedge_gain / pos.qm if abs(pos.qm) > 1e-12 else 0.0
        delta_years = (k - pos.k_open) * self.cfg.dt
        profit = trade_profit(pos, r_i, r_m, delta_years, self.cfg)
        flow = _close_flow(pos, r_i, r_m, self.cfg)
        self.trades.append(TradeRecord(
            ticker=pos.ticker, t_open=pos.t_open, t_close=t,
            direction=pos.direction, profit=profit,
            lambda_at_open=pos.lambda_at_open, qm=pos.qm,
            open_flow=_open_flow(pos, self.cfg), close_flow=flow,
            k_open=pos.k_open, k_close=k,
        ))
        return profit, flow

    def run(self) -> BacktestResult:
        for k in range(1, self.n_steps + 1):
            self.step(k)
        if self.positions:
            raise ContractError(f"{len(self.positions)} positions left open at T")
        dates = self.panel.dates[self.trade_start:self.trade_end + 1]
        return BacktestResult(dates=dates, equity=self.equity, cash=self.cash,
                              trades=self.trades, signal_log=self.signal_log,
                              config=self.cfg,
                              ou_log=self.ou_log if self.collect_ou else None,
                              beta_log=self.beta_log if self.collect_betas else None)


def run_backtest(panel: ReturnsPanel, provider, thresholds: Thresholds,
                 cfg: SimConfig, trade_start: int, trade_end: int,
                 universe: Universe | None = None, prepared: bool = False,
                 collect_ou: bool = False, collect_betas: bool = False) -> BacktestResult:
    """Prepare the provider and simulate [trade_start, trade_end] inclusive."""
    if not prepared:
        provider.prepare(trade_start, trade_end)
    engine = BacktestEngine(panel, provider, thresholds, cfg,
                            trade_start, trade_end, universe, collect_ou,
                            collect_betas)
    return engine.run()
