import numpy as np
import pytest

from statarb import marketdata as md


@pytest.fixture
def fast_reversion_market():
    """Single-factor market with strong planted mean reversion."""
    cfg = md.SyntheticMarketConfig(
        d=6, n=700, factor_vols=(0.15,), idio_ou=((20.0, 0.0, 0.316),), seed=42)
    panel, truth = md.generate_synthetic_market(cfg)
    return cfg, panel, truth


def make_panel(returns, start=None):
    """Bare panel around a d x n returns matrix with a weekday calendar."""
    import datetime as dt
    returns = np.asarray(returns, dtype=float)
    d, n = returns.shape
    dates = md.business_calendar(start or dt.date(2020, 1, 6), n + 1)
    tickers = tuple(f"T{i:02d}" for i in range(d))
    return md.ReturnsPanel(tickers=tickers, dates=dates, returns=returns)
