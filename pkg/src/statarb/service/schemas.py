"""Request/response models of the research service.

Every run is described declaratively; responses carry the output files as
named CSV payloads plus a manifest, so clients (the CLI included) just
materialize them.
"""

from __future__ import annotations

import datetime as dt
from typing import Literal

from pydantic import BaseModel, Field, model_validator


class DataSection(BaseModel):
    prices: list[str] = Field(min_length=1)   # CSV files or directories of them
    universe: str                             # ticker,sector CSV


class DatesSection(BaseModel):
    trade_start: dt.date
    trade_end: dt.date
    train_start: dt.date | None = None
    train_end: dt.date | None = None

    @model_validator(mode="after")
    def _ordered(self):
        if self.trade_end <= self.trade_start:
            raise ValueError("trade_end must come after trade_start")
        if self.train_start and self.train_end and self.train_end < self.train_start:
            raise ValueError("train_end before train_start")
        if self.train_end and self.train_end >= self.trade_start:
            raise ValueError("training range must end before trading starts")
        return self


class ProviderSection(BaseModel):
    name: Literal["pca", "existing_etf", "sector_etf", "lstm"]
    r_mode: Literal["fixed", "variance_target"] = "fixed"
    r: int = 15
    variance_target: float = 0.55
    pca_window: int = 252
    refit_every: int = 252
    residual_window: int = 120
    kappa_min: float = 4.0
    ar1_method: Literal["yule_walker", "ols"] = "yule_walker"
    fund_prices: list[str] = []
    funds: list[str] = []
    lstm_hidden: int = 64
    lstm_epochs: int = 200
    lstm_lr: float = 1e-3
    lstm_batch: int = 16
    lstm_window: int = 120
    lstm_l1_penalty: float = 1e-5
    lstm_train_len: int = 756
    lstm_warmup: int = 120
    lstm_clip_norm: float | None = None


class ThresholdSection(BaseModel):
    g_ol: float
    g_os: float
    g_cl: float
    g_cs: float


class SimSection(BaseModel):
    cost: float = 0.001
    r_f: float = 0.015
    e0: float = 100.0
    leverage: float = 2.0
    n_traders: int | None = None     # defaults to the universe size
    freeze_days: int = 60
    finance_residual: bool = True


class DiagnosticsSection(BaseModel):
    signals: bool = True
    ou: bool = False
    betas: bool = False


class BacktestRequest(BaseModel):
    data: DataSection
    dates: DatesSection
    provider: ProviderSection
    thresholds: ThresholdSection | None = None   # None: provider defaults
    sim: SimSection = SimSection()
    diagnostics: DiagnosticsSection = DiagnosticsSection()
    seed: int = 0
    threads: int = 1


class BacktestSummary(BaseModel):
    final_equity: float
    final_cash: float
    total_trades: int
    trading_days: int
    sharpe_by_year: dict[str, str]   # year -> formatted value (may be "-inf")


class RunResponse(BaseModel):
    files: dict[str, str]
    manifest: dict[str, str | int]


class BacktestResponse(RunResponse):
    summary: BacktestSummary


class GridSection(BaseModel):
    open_min: float
    open_max: float
    close_min: float
    close_max: float
    step: float


class GridSearchRequest(BacktestRequest):
    grid: GridSection


class GridSearchResponse(RunResponse):
    best_open: float
    best_close: float
    best_profit: float
    cells: int


class SynthSection(BaseModel):
    d: int
    n: int
    factor_vols: list[float] = [0.15]
    kappa: float | list[float] = 15.0
    mu: float | list[float] = 0.0
    sigma: float | list[float] = 0.3
    gbm_drift: float = 0.0
    start_date: dt.date = dt.date(2017, 1, 2)
    base_price: float = 100.0
    sectors: list[str] = []          # round-robin labels; empty -> all "other"


class SynthRequest(BaseModel):
    synthetic: SynthSection
    seed: int = 0


class TrainLstmRequest(BaseModel):
    data: DataSection
    target: str
    lstm_hidden: int = 64
    lstm_epochs: int = 200
    lstm_lr: float = 1e-3
    lstm_batch: int = 16
    lstm_window: int = 120
    lstm_l1_penalty: float = 1e-5
    lstm_clip_norm: float | None = None
    seed: int = 0


class TrainLstmResponse(RunResponse):
    final_loss: float
    epochs: int


class ReportRequest(BaseModel):
    equity_csv: str                  # file contents, not a path
    trades_csv: str
    universe_csv: str
    sim: SimSection = SimSection()


class ReportResponse(RunResponse):
    sharpe_by_year: dict[str, str]


class HealthResponse(BaseModel):
    status: str
    version: str
