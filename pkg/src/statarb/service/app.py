"""FastAPI surface over the research engine.

Endpoints are synchronous: a run executes in-process and the response
carries the rendered output files.  Domain errors map onto HTTP statuses
that the CLI translates back into exit codes.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__, runner
from ..errors import (BankruptcyError, ConfigError, DataError, DivergenceError,
                      StatArbError)
from . import schemas


def _http_error(exc: StatArbError) -> HTTPException:
    if isinstance(exc, ConfigError):
        status, kind = 400, "config"
    elif isinstance(exc, DataError):
        status, kind = 422, "data"
    elif isinstance(exc, (DivergenceError, BankruptcyError)):
        status, kind = 500, "divergence"
    else:
        status, kind = 500, "internal"
    return HTTPException(status_code=status,
                         detail={"kind": kind, "message": str(exc)})


def create_app() -> FastAPI:
    app = FastAPI(title="statarb", version=__version__)

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/backtest", response_model=schemas.BacktestResponse)
    def backtest(req: schemas.BacktestRequest) -> schemas.BacktestResponse:
        try:
            return runner.run_backtest_request(req)
        except StatArbError as exc:
            raise _http_error(exc) from exc

    @app.post("/gridsearch", response_model=schemas.GridSearchResponse)
    def gridsearch(req: schemas.GridSearchRequest) -> schemas.GridSearchResponse:
        try:
            return runner.run_grid_request(req)
        except StatArbError as exc:
            raise _http_error(exc) from exc

    @app.post("/synth", response_model=schemas.RunResponse)
    def synth(req: schemas.SynthRequest) -> schemas.RunResponse:
        try:
            return runner.run_synth_request(req)
        except StatArbError as exc:
            raise _http_error(exc) from exc

    @app.post("/train-lstm", response_model=schemas.TrainLstmResponse)
    def train_lstm(req: schemas.TrainLstmRequest) -> schemas.TrainLstmResponse:
        try:
            return runner.run_train_request(req)
        except StatArbError as exc:
            raise _http_error(exc) from exc

    @app.post("/report", response_model=schemas.ReportResponse)
    def report(req: schemas.ReportRequest) -> schemas.ReportResponse:
        try:
            return runner.run_report_request(req)
        except StatArbError as exc:
            raise _http_error(exc) from exc

    return app


app = create_app()
