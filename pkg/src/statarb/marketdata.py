"""Price ingestion, panel alignment and synthetic market generation.

Input CSVs carry `ticker,date,adj_close` rows (ISO-8601 dates, UTF-8,
dividend-adjusted closes).  A ReturnsPanel is the aligned matrix of simple
daily returns over the common calendar; dt is one trading day = 1/252 years
throughout.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import ou
from .errors import AlignmentError, DataError, MissingTickerError, ParseError

logger = logging.getLogger(__name__)

# Ticker must cover at least this fraction of the union calendar to stay in a panel.
MIN_COVERAGE = 0.95

# Recognized industry labels of the exchange's sector indices, plus a catch-all.
SECTORS = (
    "architecture", "banks", "chemistry", "clothes", "energy", "food", "fuels",
    "games", "informatics", "media", "mining", "moto", "pharma", "real estate",
)
OTHER_SECTOR = "other"


@dataclass(frozen=True)
class Bar:
    date: dt.date
    adj_close: float

    def __post_init__(self):
        if self.adj_close <= 0:
            raise DataError(f"non-positive price {self.adj_close} on {self.date}")


@dataclass
class ReturnsPanel:
    """Aligned simple daily returns: returns[i, t] for tickers[i], step t.

    dates has length n+1; returns column t covers dates[t] -> dates[t+1].
    Panels are immutable after construction and safe to share read-only.
    """
    tickers: tuple[str, ...]
    dates: tuple[dt.date, ...]
    returns: np.ndarray
    excluded: tuple[str, ...] = ()

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=float)
        d, n = self.returns.shape
        if d != len(self.tickers):
            raise AlignmentError(f"{len(self.tickers)} tickers but {d} return rows")
        if n != len(self.dates) - 1:
            raise AlignmentError(f"{len(self.dates)} dates but {n} return columns")
        if np.any(self.returns <= -1.0):
            raise DataError("simple returns must stay above -1")
        self.returns.setflags(write=False)

    @property
    def n_days(self) -> int:
        return self.returns.shape[1]

    def row(self, ticker: str) -> np.ndarray:
        try:
            return self.returns[self.tickers.index(ticker)]
        except ValueError:
            raise MissingTickerError(ticker) from None


@dataclass(frozen=True)
class Universe:
    tickers: tuple[str, ...]
    sector_of: Mapping[str, str]

    def __post_init__(self):
        for t in self.tickers:
            sector = self.sector_of.get(t)
            if sector is None:
                raise DataError(f"ticker {t} has no sector label")
            if sector not in SECTORS and sector != OTHER_SECTOR:
                raise DataError(f"unknown sector {sector!r} for {t}")

    def sector(self, ticker: str) -> str:
        return self.sector_of[ticker]


@dataclass
class SyntheticMarketConfig:
    d: int
    n: int
    factor_vols: tuple[float, ...]
    idio_ou: tuple[tuple[float, float, float], ...]  # per stock (kappa, mu, sigma)
    gbm_drift: float = 0.0
    seed: int = 0
    betas: np.ndarray | None = None          # d x n_factors, defaults to all ones
    start_date: dt.date = dt.date(2017, 1, 2)
    base_price: float = 100.0

    def __post_init__(self):
        if self.d < 2 or self.n < 2:
            raise DataError(f"need d >= 2 and n >= 2, got d={self.d}, n={self.n}")
        if any(v <= 0 for v in self.factor_vols):
            raise DataError("factor vols must be positive")
        if len(self.idio_ou) == 1:
            self.idio_ou = tuple(self.idio_ou) * self.d
        if len(self.idio_ou) != self.d:
            raise DataError("idio_ou must give one (kappa, mu, sigma) per stock")
        for kappa, _, sigma in self.idio_ou:
            if kappa <= 0 or sigma < 0:
                raise DataError("idiosyncratic OU needs kappa > 0 and sigma >= 0")
        if self.betas is None:
            self.betas = np.ones((self.d, len(self.factor_vols)))
        self.betas = np.asarray(self.betas, dtype=float)
        if self.betas.shape != (self.d, len(self.factor_vols)):
            raise DataError("betas must be d x n_factors")

    @property
    def ticker_names(self) -> tuple[str, ...]:
        return tuple(f"SYN{i:02d}" for i in range(self.d))


def load_prices(path: str | Path,
                tickers: Sequence[str] | None = None) -> dict[str, list[Bar]]:
    """Read `ticker,date,adj_close` rows into per-ticker bar series.

    Series come back sorted by date; duplicate (ticker, date) rows and
    malformed rows are rejected with their line number.  When tickers is
    given, every requested symbol must be present.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"price file not found: {path}")
    out: dict[str, dict[dt.date, float]] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        for lineno, raw in enumerate(reader, start=1):
            if not raw or (lineno == 1 and raw[0].strip().lower() == "ticker"):
                continue
            if len(raw) != 3:
                raise ParseError(f"expected 3 fields, got {len(raw)}", lineno)
            ticker = raw[0].strip()
            try:
                date = dt.date.fromisoformat(raw[1].strip())
            except ValueError as exc:
                raise ParseError(f"bad date {raw[1]!r}: {exc}", lineno) from None
            try:
                price = float(raw[2])
            except ValueError:
                raise ParseError(f"bad price {raw[2]!r}", lineno) from None
            if not math.isfinite(price) or price <= 0:
                raise ParseError(f"non-positive price {raw[2]}", lineno)
            series = out.setdefault(ticker, {})
            if date in series:
                raise ParseError(f"duplicate row for ({ticker}, {date})", lineno)
            series[date] = price

    if tickers is not None:
        missing = [t for t in tickers if t not in out]
        if missing:
            raise MissingTickerError(f"not in {path.name}: {', '.join(missing)}")
        out = {t: out[t] for t in tickers}
    return {
        t: [Bar(date=d, adj_close=p) for d, p in sorted(series.items())]
        for t, series in out.items()
    }


def _is_price_csv(path: Path) -> bool:
    with open(path, newline="", encoding="utf-8") as handle:
        first = handle.readline().strip().lower()
    return first.startswith("ticker,date,adj_close")


def load_price_files(paths: Iterable[str | Path],
                     tickers: Sequence[str] | None = None) -> dict[str, list[Bar]]:
    """Merge several price CSVs (or directories of them) into one series map.

    A directory contributes every CSV inside it that carries the price
    header, so mixed output directories (truth files, universe files) work.
    """
    merged: dict[str, list[Bar]] = {}
    for raw in paths:
        p = Path(raw)
        files = sorted(f for f in p.glob("*.csv") if _is_price_csv(f)) \
            if p.is_dir() else [p]
        if not files:
            raise DataError(f"no price CSV files under {p}")
        for f in files:
            for ticker, bars in load_prices(f).items():
                if ticker in merged:
                    raise DataError(f"ticker {ticker} appears in more than one file")
                merged[ticker] = bars
    if tickers is not None:
        missing = [t for t in tickers if t not in merged]
        if missing:
            raise MissingTickerError(f"missing tickers: {', '.join(missing)}")
        merged = {t: merged[t] for t in tickers}
    return merged


def compute_returns(prices: Mapping[str, Sequence[Bar]]) -> ReturnsPanel:
    """Align series on their common calendar and compute simple daily returns.

    Tickers covering less than 95% of the union calendar are dropped from the
    panel (recorded in panel.excluded) before the intersection is taken.
    """
    if not prices:
        raise AlignmentError("no price series given")
    calendars = {t: {bar.date for bar in bars} for t, bars in prices.items()}
    union: set[dt.date] = set()
    for cal in calendars.values():
        union |= cal
    if not union:
        raise AlignmentError("no dates in any series")

    kept, excluded = [], []
    for t in prices:
        if len(calendars[t]) < MIN_COVERAGE * len(union):
            excluded.append(t)
        else:
            kept.append(t)
    if excluded:
        logger.warning("excluding %d thin tickers: %s", len(excluded), excluded)

    common: set[dt.date] | None = None
    for t in kept:
        common = calendars[t] if common is None else (common & calendars[t])
    if not common or len(common) < 2:
        raise AlignmentError("common calendar has fewer than 2 dates")
    dates = tuple(sorted(common))

    rows = []
    for t in kept:
        by_date = {bar.date: bar.adj_close for bar in prices[t]}
        series = np.array([by_date[d] for d in dates])
        rows.append(series[1:] / series[:-1] - 1.0)
    return ReturnsPanel(tickers=tuple(kept), dates=dates,
                        returns=np.vstack(rows), excluded=tuple(excluded))


def relative_price(returns: Sequence[float]) -> np.ndarray:
    """Worth of 1 currency unit compounded through the return sequence."""
    r = np.asarray(returns, dtype=float)
    if r.size and np.any(r <= -1.0):
        raise DataError("return <= -1 has no relative price")
    out = np.empty(r.size + 1)
    out[0] = 1.0
    if r.size:
        np.cumprod(1.0 + r, out=out[1:])
    return out


def summary_stats(series: Sequence[float]) -> tuple[float, float, float]:
    """(mean, sample std, relative std); rel_std is NaN when the mean is 0."""
    x = np.asarray(series, dtype=float)
    if x.size < 2:
        raise DataError("need at least 2 observations")
    mean = float(x.mean())
    std = float(x.std(ddof=1))
    rel = std / mean if mean != 0.0 else float("nan")
    return mean, std, rel


def business_calendar(start: dt.date, n_dates: int) -> tuple[dt.date, ...]:
    """n_dates consecutive weekdays starting at (or after) start."""
    out: list[dt.date] = []
    day = start
    while len(out) < n_dates:
        if day.weekday() < 5:
            out.append(day)
        day += dt.timedelta(days=1)
    return tuple(out)


def generate_synthetic_market(
    cfg: SyntheticMarketConfig,
) -> tuple[ReturnsPanel, dict[str, np.ndarray]]:
    """Factor-plus-OU synthetic market, bit reproducible for a given seed.

    Stock i's daily return is gbm_drift*dt + sum_j betas[i,j]*F_j + dI_i with
    dI_i the increments of an exact-discretized OU path; the ground-truth OU
    paths come back keyed by ticker for estimator-recovery tests.
    """
    root = np.random.SeedSequence(cfg.seed)
    factor_seq, *stock_seqs = root.spawn(1 + cfg.d)
    frng = np.random.default_rng(factor_seq)
    k = len(cfg.factor_vols)
    vols = np.asarray(cfg.factor_vols)
    factors = vols[:, None] * math.sqrt(ou.DT) * frng.standard_normal((k, cfg.n))

    returns = np.empty((cfg.d, cfg.n))
    truth: dict[str, np.ndarray] = {}
    for i, name in enumerate(cfg.ticker_names):
        kappa, mu, sigma = cfg.idio_ou[i]
        if sigma > 0:
            params = ou.OuParams.from_ksm(kappa, mu, sigma)
            path = ou.simulate_ou(params, x0=mu, n_steps=cfg.n,
                                  seed=np.random.default_rng(stock_seqs[i]))
        else:
            path = np.full(cfg.n + 1, mu)
        truth[name] = path
        returns[i] = cfg.gbm_drift * ou.DT + cfg.betas[i] @ factors + np.diff(path)

    dates = business_calendar(cfg.start_date, cfg.n + 1)
    panel = ReturnsPanel(tickers=cfg.ticker_names, dates=dates, returns=returns)
    return panel, truth


def synthetic_prices(cfg: SyntheticMarketConfig,
                     panel: ReturnsPanel) -> dict[str, np.ndarray]:
    """Price paths (length n+1) implied by the synthetic returns."""
    return {
        t: cfg.base_price * relative_price(panel.returns[i])
        for i, t in enumerate(panel.tickers)
    }


def write_price_csv(path: str | Path, ticker: str,
                    dates: Sequence[dt.date], prices: Sequence[float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["ticker", "date", "adj_close"])
        for d, p in zip(dates, prices):
            writer.writerow([ticker, d.isoformat(), repr(float(p))])


def write_truth_csv(path: str | Path, ticker: str,
                    dates: Sequence[dt.date], path_values: Sequence[float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["ticker", "date", "I_value"])
        for d, v in zip(dates, path_values):
            writer.writerow([ticker, d.isoformat(), repr(float(v))])


def load_universe(path: str | Path) -> Universe:
    """Read a `ticker,sector` CSV; unknown sectors are rejected."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"universe file not found: {path}")
    tickers: list[str] = []
    sector_of: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        for lineno, raw in enumerate(reader, start=1):
            if not raw or (lineno == 1 and raw[0].strip().lower() == "ticker"):
                continue
            if len(raw) != 2:
                raise ParseError(f"expected 2 fields, got {len(raw)}", lineno)
            ticker, sector = raw[0].strip(), raw[1].strip()
            if ticker in sector_of:
                raise ParseError(f"duplicate ticker {ticker}", lineno)
            tickers.append(ticker)
            sector_of[ticker] = sector
    return Universe(tickers=tuple(tickers), sector_of=sector_of)
