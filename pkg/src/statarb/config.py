"""Flat `section.key = value` run configuration files.

Example:

    data.prices = synth/prices_SYN00.csv, synth/prices_SYN01.csv
    data.universe = synth/universe.csv
    provider.name = pca
    provider.r = 1
    dates.trade_start = 2018-01-05
    dates.trade_end = 2019-12-30
    sim.r_f = 0.015
    seed = 7

Comma-separated values become lists where the request model expects one;
relative paths resolve against the config file's directory.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError
from .service import schemas

# Keys whose values are always comma-split into lists.
LIST_KEYS = {
    "data.prices",
    "provider.fund_prices",
    "provider.funds",
    "synthetic.factor_vols",
    "synthetic.sectors",
}

# Keys that may be a scalar or a comma-separated per-stock list.
SCALAR_OR_LIST_KEYS = {"synthetic.kappa", "synthetic.mu", "synthetic.sigma"}

# Keys holding paths, resolved relative to the config file.
PATH_KEYS = {"data.prices", "data.universe", "provider.fund_prices",
             "report.run_dir"}


def parse_flat(text: str) -> dict[str, str]:
    """Dotted keys to raw string values; later lines win."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _nest(flat: dict[str, str], base: Path) -> dict:
    nested: dict = {}
    for key, value in flat.items():
        parts = key.split(".")
        cooked: object = value
        if key in LIST_KEYS or (key in SCALAR_OR_LIST_KEYS and "," in value):
            cooked = [v.strip() for v in value.split(",") if v.strip()]
        if key in PATH_KEYS:
            if isinstance(cooked, list):
                cooked = [str((base / v).resolve()) for v in cooked]
            else:
                cooked = str((base / value).resolve())
        node = nested
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"config key {key} clashes with scalar {part}")
        node[parts[-1]] = cooked
    return nested


def load_config(path: str | Path) -> dict:
    """Nested dict of raw values ready for model validation."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    flat = parse_flat(path.read_text(encoding="utf-8"))
    # historical spelling of the provider switch
    if "factors.provider" in flat and "provider.name" not in flat:
        flat["provider.name"] = flat.pop("factors.provider")
    return _nest(flat, path.parent)


def _validate(model_cls, payload: dict):
    try:
        return model_cls.model_validate(payload)
    except Exception as exc:   # pydantic.ValidationError
        raise ConfigError(f"invalid configuration: {exc}") from exc


def backtest_request(cfg: dict, seed: int | None = None,
                     threads: int | None = None) -> schemas.BacktestRequest:
    payload = {k: v for k, v in cfg.items() if k in
               ("data", "dates", "provider", "thresholds", "sim",
                "diagnostics", "seed", "threads")}
    if seed is not None:
        payload["seed"] = seed
    if threads is not None:
        payload["threads"] = threads
    return _validate(schemas.BacktestRequest, payload)


def grid_request(cfg: dict, seed: int | None = None,
                 threads: int | None = None) -> schemas.GridSearchRequest:
    if "grid" not in cfg:
        raise ConfigError("gridsearch needs a grid.* section")
    payload = {k: v for k, v in cfg.items() if k in
               ("data", "dates", "provider", "thresholds", "sim",
                "diagnostics", "seed", "threads", "grid")}
    if seed is not None:
        payload["seed"] = seed
    if threads is not None:
        payload["threads"] = threads
    return _validate(schemas.GridSearchRequest, payload)


def synth_request(cfg: dict, seed: int | None = None) -> schemas.SynthRequest:
    if "synthetic" not in cfg:
        raise ConfigError("synth needs a synthetic.* section")
    payload = {"synthetic": cfg["synthetic"]}
    payload["seed"] = seed if seed is not None else cfg.get("seed", 0)
    return _validate(schemas.SynthRequest, payload)


def train_request(cfg: dict, seed: int | None = None) -> schemas.TrainLstmRequest:
    lstm_cfg = cfg.get("lstm", {})
    payload = {
        "data": cfg.get("data", {}),
        "target": lstm_cfg.get("target") or cfg.get("target"),
        "seed": seed if seed is not None else cfg.get("seed", 0),
    }
    for key in ("hidden", "epochs", "lr", "batch", "window", "l1_penalty",
                "clip_norm"):
        if key in lstm_cfg:
            payload[f"lstm_{key}"] = lstm_cfg[key]
    if payload["target"] is None:
        raise ConfigError("train-lstm needs lstm.target")
    return _validate(schemas.TrainLstmRequest, payload)


def report_request(cfg: dict) -> schemas.ReportRequest:
    run_dir = cfg.get("report", {}).get("run_dir")
    if not run_dir:
        raise ConfigError("report needs report.run_dir")
    run = Path(run_dir)
    universe_path = cfg.get("data", {}).get("universe")
    if not universe_path:
        raise ConfigError("report needs data.universe")
    for name in ("equity.csv", "trades.csv"):
        if not (run / name).exists():
            raise ConfigError(f"referenced file does not exist: {run / name}")
    if not Path(universe_path).exists():
        raise ConfigError(f"referenced file does not exist: {universe_path}")
    payload = {
        "equity_csv": (run / "equity.csv").read_text(encoding="utf-8"),
        "trades_csv": (run / "trades.csv").read_text(encoding="utf-8"),
        "universe_csv": Path(universe_path).read_text(encoding="utf-8"),
        "sim": cfg.get("sim", {}),
    }
    return _validate(schemas.ReportRequest, payload)
