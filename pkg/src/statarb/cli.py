"""Thin command-line client of the research service.

Subcommands mirror the service endpoints; by default the request runs
against the in-process service, `--server URL` posts it to a remote one.
Returned files land in the output directory together with a manifest.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
divergence (including bankruptcy halts).
"""

from __future__ import annotations

import argparse
import json
import sys
import urllib.error
import urllib.request
from pathlib import Path

from . import __version__, config, runner
from .errors import (BankruptcyError, ConfigError, DataError, DivergenceError,
                     StatArbError)
from .service import schemas

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4

_LOCAL_HANDLERS = {
    "backtest": runner.run_backtest_request,
    "gridsearch": runner.run_grid_request,
    "synth": runner.run_synth_request,
    "train-lstm": runner.run_train_request,
    "report": runner.run_report_request,
}

_RESPONSE_MODELS = {
    "backtest": schemas.BacktestResponse,
    "gridsearch": schemas.GridSearchResponse,
    "synth": schemas.RunResponse,
    "train-lstm": schemas.TrainLstmResponse,
    "report": schemas.ReportResponse,
}


def _post(server: str, endpoint: str, request, model_cls):
    url = server.rstrip("/") + "/" + endpoint
    body = request.model_dump_json().encode()
    req = urllib.request.Request(url, data=body,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            return model_cls.model_validate_json(resp.read())
    except urllib.error.HTTPError as exc:
        detail = {}
        try:
            detail = json.loads(exc.read()).get("detail", {})
        except Exception:
            pass
        kind = detail.get("kind") if isinstance(detail, dict) else None
        message = detail.get("message") if isinstance(detail, dict) else str(detail)
        if kind == "config" or exc.code == 422 and not kind:
            raise ConfigError(message or f"HTTP {exc.code}") from None
        if kind == "data":
            raise DataError(message or f"HTTP {exc.code}") from None
        if kind == "divergence":
            raise DivergenceError(message or f"HTTP {exc.code}") from None
        raise StatArbError(message or f"HTTP {exc.code}") from None


def _execute(endpoint: str, request, server: str | None):
    if server:
        return _post(server, endpoint, request, _RESPONSE_MODELS[endpoint])
    return _LOCAL_HANDLERS[endpoint](request)


def _write_outputs(out_dir: str, response) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, content in response.files.items():
        (out / name).write_text(content, encoding="utf-8")
    manifest = json.dumps(response.manifest, sort_keys=True, indent=2) + "\n"
    (out / "manifest.json").write_text(manifest, encoding="utf-8")


def _summary_line(command: str, response) -> str:
    if command == "backtest":
        s = response.summary
        sharpes = " ".join(f"{y}:{v}" for y, v in sorted(s.sharpe_by_year.items()))
        return (f"backtest: E_T={s.final_equity:.4f} C_T={s.final_cash:.4f} "
                f"trades={s.total_trades} days={s.trading_days} sharpe[{sharpes}]")
    if command == "gridsearch":
        return (f"gridsearch: best open={response.best_open:g} "
                f"close={response.best_close:g} profit={response.best_profit:.4f} "
                f"cells={response.cells}")
    if command == "synth":
        n = sum(1 for f in response.files if f.startswith("prices_"))
        return f"synth: {n} price files, {n} truth files"
    if command == "train-lstm":
        return f"train-lstm: epochs={response.epochs} final_loss={response.final_loss:.6g}"
    if command == "report":
        sharpes = " ".join(f"{y}:{v}" for y, v in sorted(response.sharpe_by_year.items()))
        return f"report: sharpe[{sharpes}]"
    return command


def _build_request(command: str, cfg: dict, seed, threads):
    if command == "backtest":
        return config.backtest_request(cfg, seed=seed, threads=threads)
    if command == "gridsearch":
        return config.grid_request(cfg, seed=seed, threads=threads)
    if command == "synth":
        return config.synth_request(cfg, seed=seed)
    if command == "train-lstm":
        return config.train_request(cfg, seed=seed)
    if command == "report":
        return config.report_request(cfg)
    raise ConfigError(f"unknown command {command}")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="statarb",
        description="Residual statistical-arbitrage research engine")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("backtest", "gridsearch", "synth", "train-lstm", "report"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="flat key = value file")
        cmd.add_argument("--out", default="out", help="output directory")
        cmd.add_argument("--threads", type=int, default=1)
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config seed")
        cmd.add_argument("--server", default=None,
                         help="remote service URL; default runs in process")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = config.load_config(args.config)
        request = _build_request(args.command, cfg, args.seed, args.threads)
        response = _execute(args.command, request, args.server)
        _write_outputs(args.out, response)
        print(_summary_line(args.command, response))
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, BankruptcyError) as exc:
        print(f"runtime divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
