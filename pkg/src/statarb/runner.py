"""Orchestration behind the service endpoints.

Each run_* function takes a request model, executes the engine and returns
the response with every output file rendered as CSV text.  All floats are
written with 10 significant digits and nothing time- or host-dependent goes
into the payloads, so identical requests produce byte-identical outputs.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import json
from bisect import bisect_left, bisect_right
from pathlib import Path

import numpy as np

from . import __version__, analytics, backtest, lstm, marketdata, providers, signals
from .errors import ConfigError, DataError
from .service import schemas

MANIFEST_VERSION = 1


def _fmt(value: float) -> str:
    return "%.10g" % value


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _manifest(command: str, request, seed: int) -> dict:
    canonical = json.dumps(request.model_dump(mode="json"), sort_keys=True)
    return {
        "command": command,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "seed": seed,
        "package_version": __version__,
        "manifest_version": MANIFEST_VERSION,
    }


def _check_files_exist(*paths: str) -> None:
    for p in paths:
        path = Path(p)
        if not path.exists():
            raise ConfigError(f"referenced file does not exist: {p}")


def _load_market(req: schemas.BacktestRequest):
    """Panel for the universe tickers (plus aligned fund rows when needed)."""
    _check_files_exist(req.data.universe)
    for p in req.data.prices:
        _check_files_exist(p)
    universe = marketdata.load_universe(req.data.universe)
    prices = marketdata.load_price_files(req.data.prices, tickers=universe.tickers)

    fund_names: tuple[str, ...] = ()
    if req.provider.name in ("existing_etf", "sector_etf"):
        if not req.provider.fund_prices:
            raise ConfigError("fund provider needs provider.fund_prices")
        for p in req.provider.fund_prices:
            _check_files_exist(p)
        fund_series = marketdata.load_price_files(req.provider.fund_prices)
        fund_names = tuple(req.provider.funds) or tuple(fund_series)
        missing = [f for f in fund_names if f not in fund_series]
        if missing:
            raise DataError(f"funds not found in fund files: {missing}")
        clash = set(fund_names) & set(universe.tickers)
        if clash:
            raise ConfigError(f"fund names clash with universe tickers: {sorted(clash)}")
        prices.update({f: fund_series[f] for f in fund_names})

    combined = marketdata.compute_returns(prices)
    lost = [t for t in universe.tickers if t not in combined.tickers]
    lost += [f for f in fund_names if f not in combined.tickers]
    if lost:
        raise DataError(f"series too thin to align: {lost}")

    stock_idx = [combined.tickers.index(t) for t in universe.tickers]
    panel = marketdata.ReturnsPanel(
        tickers=universe.tickers, dates=combined.dates,
        returns=combined.returns[stock_idx, :])
    fund_returns = None
    if fund_names:
        fund_idx = [combined.tickers.index(f) for f in fund_names]
        fund_returns = combined.returns[fund_idx, :]
    return panel, universe, fund_names, fund_returns


def _date_indices(panel: marketdata.ReturnsPanel,
                  dates: schemas.DatesSection) -> tuple[int, int]:
    start = bisect_left(panel.dates, dates.trade_start)
    end = bisect_right(panel.dates, dates.trade_end) - 1
    if start >= len(panel.dates) or end < 0 or end <= start:
        raise ConfigError(
            f"trading range [{dates.trade_start}, {dates.trade_end}] not covered "
            f"by panel [{panel.dates[0]}, {panel.dates[-1]}]")
    return start, end


def _build_provider(req: schemas.BacktestRequest, panel, fund_names, fund_returns):
    p = req.provider
    common = dict(window=p.residual_window, kappa_min=p.kappa_min,
                  ar1_method=p.ar1_method)
    if p.name == "pca":
        return providers.PcaProvider(
            panel, r_mode=p.r_mode, r=p.r, alpha=p.variance_target,
            pca_window=p.pca_window, refit_every=p.refit_every, **common)
    if p.name in ("existing_etf", "sector_etf"):
        return providers.IndexFundProvider(
            panel, fund_names, fund_returns, p.name, **common)
    if p.name == "lstm":
        train_config = lstm.TrainConfig(
            window=p.lstm_window, batch=p.lstm_batch, l1_penalty=p.lstm_l1_penalty,
            lr=p.lstm_lr, epochs=p.lstm_epochs, hidden=p.lstm_hidden,
            clip_norm=p.lstm_clip_norm)
        return providers.LstmProvider(
            panel, train_config=train_config, train_len=p.lstm_train_len,
            warmup=p.lstm_warmup, retrain_every=p.refit_every, seed=req.seed,
            **common)
    raise ConfigError(f"unknown provider {p.name}")


def _sim_config(sim: schemas.SimSection, universe_size: int) -> backtest.SimConfig:
    return backtest.SimConfig(
        cost=sim.cost, r_f=sim.r_f, e0=sim.e0, leverage=sim.leverage,
        n_traders=sim.n_traders or universe_size, freeze_days=sim.freeze_days,
        finance_residual=sim.finance_residual)


def _thresholds(req: schemas.BacktestRequest) -> signals.Thresholds:
    if req.thresholds is not None:
        t = req.thresholds
        return signals.Thresholds(t.g_ol, t.g_os, t.g_cl, t.g_cs)
    return signals.DEFAULT_THRESHOLDS[req.provider.name]


def render_equity_csv(result: backtest.BacktestResult) -> str:
    rows = [[d.isoformat(), _fmt(e), _fmt(c)]
            for d, e, c in zip(result.dates, result.equity, result.cash)]
    return _csv(["date", "E", "C"], rows)


def render_trades_csv(result: backtest.BacktestResult, panel_dates) -> str:
    rows = []
    for tr in result.trades:
        rows.append([
            tr.ticker, panel_dates[tr.t_open].isoformat(),
            panel_dates[tr.t_close].isoformat(), tr.direction, _fmt(tr.profit),
            _fmt(tr.lambda_at_open), _fmt(tr.qm), _fmt(tr.open_flow),
            _fmt(tr.close_flow), tr.k_open, tr.k_close,
        ])
    return _csv(["ticker", "t_open", "t_close", "direction", "profit",
                 "lambda", "qm", "open_flow", "close_flow", "k_open", "k_close"],
                rows)


def render_sectors_csv(result: backtest.BacktestResult,
                       universe: marketdata.Universe) -> str:
    curves = analytics.sector_curves(result, universe)
    rows = []
    for k, d in enumerate(result.dates):
        for sector in curves.sectors:
            rows.append([d.isoformat(), sector,
                         _fmt(curves.rel_equity[sector][k]),
                         _fmt(curves.rel_cash[sector][k])])
    return _csv(["date", "sector", "relE", "relC"], rows)


def render_sharpe_csv(report: analytics.SharpeReport) -> str:
    rows = [[year, group, _fmt(value)] for year, group, value in report.rows]
    return _csv(["year", "group", "S"], rows)


def render_signals_csv(result: backtest.BacktestResult) -> str:
    rows = [[ticker, d.isoformat(), _fmt(score), action]
            for d, ticker, score, action in result.signal_log]
    return _csv(["ticker", "date", "g", "action"], rows)


def render_ou_csv(result: backtest.BacktestResult) -> str:
    rows = [[ticker, d.isoformat(), _fmt(p.kappa), _fmt(p.mu), _fmt(p.sigma),
             _fmt(p.sigma_eq), _fmt(score)]
            for d, ticker, p, score in (result.ou_log or [])]
    return _csv(["ticker", "date", "kappa", "mu", "sigma", "sigma_eq", "s_score"],
                rows)


def render_betas_csv(result: backtest.BacktestResult) -> str:
    width = max((len(betas) for _, _, _, betas in (result.beta_log or [])),
                default=0)
    rows = []
    for d, ticker, alpha, betas in (result.beta_log or []):
        row = [ticker, d.isoformat(), _fmt(alpha) if alpha is not None else ""]
        row += [_fmt(b) for b in betas]
        row += [""] * (width - len(betas))
        rows.append(row)
    header = ["ticker", "date", "alpha"] + [f"beta_{j + 1}" for j in range(width)]
    return _csv(header, rows)


def _portfolio_sharpe(report: analytics.SharpeReport) -> dict[str, str]:
    return {str(year): _fmt(value) for year, group, value in report.rows
            if group == analytics.PORTFOLIO}


def run_backtest_request(req: schemas.BacktestRequest) -> schemas.BacktestResponse:
    panel, universe, fund_names, fund_returns = _load_market(req)
    start, end = _date_indices(panel, req.dates)
    provider = _build_provider(req, panel, fund_names, fund_returns)
    sim = _sim_config(req.sim, len(universe.tickers))
    result = backtest.run_backtest(panel, provider, _thresholds(req), sim,
                                   start, end, universe,
                                   collect_ou=req.diagnostics.ou,
                                   collect_betas=req.diagnostics.betas)
    report = analytics.sector_report(result, universe)

    files = {
        "equity.csv": render_equity_csv(result),
        "trades.csv": render_trades_csv(result, panel.dates),
        "sectors.csv": render_sectors_csv(result, universe),
        "sharpe.csv": render_sharpe_csv(report),
    }
    if req.diagnostics.signals:
        files["signals.csv"] = render_signals_csv(result)
    if req.diagnostics.ou:
        files["ou.csv"] = render_ou_csv(result)
    if req.diagnostics.betas:
        files["betas.csv"] = render_betas_csv(result)

    summary = schemas.BacktestSummary(
        final_equity=result.final_equity,
        final_cash=float(result.cash[-1]),
        total_trades=len(result.trades),
        trading_days=len(result.dates) - 1,
        sharpe_by_year=_portfolio_sharpe(report),
    )
    return schemas.BacktestResponse(files=files, summary=summary,
                                    manifest=_manifest("backtest", req, req.seed))


def run_grid_request(req: schemas.GridSearchRequest) -> schemas.GridSearchResponse:
    panel, universe, fund_names, fund_returns = _load_market(req)
    start, end = _date_indices(panel, req.dates)
    provider = _build_provider(req, panel, fund_names, fund_returns)
    sim = _sim_config(req.sim, len(universe.tickers))
    grid = analytics.grid_search(
        panel, provider, sim,
        (req.grid.open_min, req.grid.open_max, req.grid.step),
        (req.grid.close_min, req.grid.close_max, req.grid.step),
        start, end, universe, threads=req.threads)

    rows = []
    for i, go in enumerate(grid.open_values):
        for j, gc in enumerate(grid.close_values):
            rows.append([_fmt(go), _fmt(gc), _fmt(grid.profits[i, j]),
                         1 if (i, j) == grid.best else 0])
    files = {"grid.csv": _csv(["open", "close", "profit", "best"], rows)}
    best_open, best_close = grid.best_thresholds
    return schemas.GridSearchResponse(
        files=files, manifest=_manifest("gridsearch", req, req.seed),
        best_open=best_open, best_close=best_close,
        best_profit=float(grid.profits[grid.best]),
        cells=int(grid.profits.size))


def run_synth_request(req: schemas.SynthRequest) -> schemas.RunResponse:
    s = req.synthetic
    bad = [x for x in s.sectors
           if x not in marketdata.SECTORS and x != marketdata.OTHER_SECTOR]
    if bad:
        raise DataError(f"unknown sector labels: {bad}")

    def per_stock(v) -> list[float]:
        if isinstance(v, (int, float)):
            return [float(v)] * s.d
        if len(v) != s.d:
            raise ConfigError(f"per-stock list needs {s.d} entries, got {len(v)}")
        return [float(x) for x in v]

    idio = tuple(zip(per_stock(s.kappa), per_stock(s.mu), per_stock(s.sigma)))
    cfg = marketdata.SyntheticMarketConfig(
        d=s.d, n=s.n, factor_vols=tuple(s.factor_vols), idio_ou=idio,
        gbm_drift=s.gbm_drift, seed=req.seed, start_date=s.start_date,
        base_price=s.base_price)
    panel, truth = marketdata.generate_synthetic_market(cfg)
    prices = marketdata.synthetic_prices(cfg, panel)

    files: dict[str, str] = {}
    sector_rows = []
    for i, ticker in enumerate(panel.tickers):
        price_rows = [[ticker, d.isoformat(), repr(float(p))]
                      for d, p in zip(panel.dates, prices[ticker])]
        files[f"prices_{ticker}.csv"] = _csv(["ticker", "date", "adj_close"],
                                             price_rows)
        truth_rows = [[ticker, d.isoformat(), repr(float(v))]
                      for d, v in zip(panel.dates, truth[ticker])]
        files[f"truth_{ticker}.csv"] = _csv(["ticker", "date", "I_value"],
                                            truth_rows)
        sector = s.sectors[i % len(s.sectors)] if s.sectors else marketdata.OTHER_SECTOR
        sector_rows.append([ticker, sector])
    files["universe.csv"] = _csv(["ticker", "sector"], sector_rows)
    return schemas.RunResponse(files=files,
                               manifest=_manifest("synth", req, req.seed))


def run_train_request(req: schemas.TrainLstmRequest) -> schemas.TrainLstmResponse:
    _check_files_exist(req.data.universe)
    for p in req.data.prices:
        _check_files_exist(p)
    universe = marketdata.load_universe(req.data.universe)
    if req.target not in universe.tickers:
        raise ConfigError(f"target {req.target} not in universe")
    prices = marketdata.load_price_files(req.data.prices, tickers=universe.tickers)
    panel = marketdata.compute_returns(prices)
    if req.target not in panel.tickers:
        raise DataError(f"target {req.target} lost in alignment")

    cfg = lstm.TrainConfig(
        window=req.lstm_window, batch=req.lstm_batch,
        l1_penalty=req.lstm_l1_penalty, lr=req.lstm_lr, epochs=req.lstm_epochs,
        hidden=req.lstm_hidden, seed=req.seed, clip_norm=req.lstm_clip_norm)
    model, trace = lstm.train(panel, req.target, cfg)

    trace_rows = [[epoch, _fmt(value)] for epoch, value in enumerate(trace)]
    files = {
        "loss_trace.csv": _csv(["epoch", "loss"], trace_rows),
        "checkpoint.txt": _render_checkpoint(model),
    }
    return schemas.TrainLstmResponse(
        files=files, manifest=_manifest("train-lstm", req, req.seed),
        final_loss=trace[-1] if trace else float("nan"),
        epochs=len(trace))


def _render_checkpoint(model: lstm.StackedLstm) -> str:
    lines = [f"{lstm.CHECKPOINT_MAGIC} {lstm.CHECKPOINT_VERSION}",
             f"dims {model.in_dim} {model.layer1.hidden} {model.out_dim}"]
    for name, a in model.tensors():
        dims = " ".join(str(x) for x in a.shape)
        lines.append(f"tensor {name} {dims}")
        lines.append(" ".join(repr(float(v)) for v in a.reshape(-1)))
    return "\n".join(lines) + "\n"


def run_report_request(req: schemas.ReportRequest) -> schemas.ReportResponse:
    dates, equity, cash = _parse_equity_csv(req.equity_csv)
    trades = _parse_trades_csv(req.trades_csv, dates)
    universe = _parse_universe_csv(req.universe_csv)
    sim = _sim_config(req.sim, len(universe.tickers))
    result = backtest.BacktestResult(
        dates=tuple(dates), equity=equity, cash=cash, trades=trades,
        signal_log=[], config=sim)
    report = analytics.sector_report(result, universe)
    files = {
        "sharpe.csv": render_sharpe_csv(report),
        "sectors.csv": render_sectors_csv(result, universe),
    }
    return schemas.ReportResponse(
        files=files, manifest=_manifest("report", req, 0),
        sharpe_by_year=_portfolio_sharpe(report))


def _parse_equity_csv(text: str):
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["date", "E", "C"]:
        raise DataError(f"unexpected equity.csv header {header}")
    dates, es, cs = [], [], []
    for row in reader:
        dates.append(dt.date.fromisoformat(row[0]))
        es.append(float(row[1]))
        cs.append(float(row[2]))
    if len(dates) < 2:
        raise DataError("equity.csv has fewer than 2 rows")
    return dates, np.array(es), np.array(cs)


def _parse_trades_csv(text: str, dates) -> list[backtest.TradeRecord]:
    index_of = {d: k for k, d in enumerate(dates)}
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    expected = ["ticker", "t_open", "t_close", "direction", "profit", "lambda",
                "qm", "open_flow", "close_flow", "k_open", "k_close"]
    if header != expected:
        raise DataError(f"unexpected trades.csv header {header}")
    trades = []
    for row in reader:
        t_open = dt.date.fromisoformat(row[1])
        t_close = dt.date.fromisoformat(row[2])
        if t_open not in index_of or t_close not in index_of:
            raise DataError(f"trade dates {t_open}/{t_close} outside equity curve")
        trades.append(backtest.TradeRecord(
            ticker=row[0], t_open=index_of[t_open], t_close=index_of[t_close],
            direction=int(row[3]), profit=float(row[4]),
            lambda_at_open=float(row[5]), qm=float(row[6]),
            open_flow=float(row[7]), close_flow=float(row[8]),
            k_open=int(row[9]), k_close=int(row[10])))
    return trades


def _parse_universe_csv(text: str) -> marketdata.Universe:
    reader = csv.reader(io.StringIO(text))
    tickers, sector_of = [], {}
    for lineno, row in enumerate(reader, start=1):
        if not row or (lineno == 1 and row[0].strip().lower() == "ticker"):
            continue
        tickers.append(row[0].strip())
        sector_of[row[0].strip()] = row[1].strip()
    return marketdata.Universe(tickers=tuple(tickers), sector_of=sector_of)
