"""FastAPI application wrapping the core package."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import ValidationError
from . import operations
from .schemas import (
    ConvergenceRequest,
    EigenRequest,
    FitRequest,
    FitResponse,
    PolytestRequest,
    PredictRequest,
    PredictResponse,
    StabilityRequest,
    StudyResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="sparsekern", version=__version__)

    @app.exception_handler(ValidationError)
    async def _validation_error(request: Request, exc: ValidationError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/fit", response_model=FitResponse)
    def fit(req: FitRequest):
        return operations.run_fit(req)

    @app.post("/predict", response_model=PredictResponse)
    def predict(req: PredictRequest):
        return operations.run_predict(req)

    @app.post("/study/convergence", response_model=StudyResponse)
    def study_convergence(req: ConvergenceRequest):
        return operations.run_convergence(req)

    @app.post("/study/polytest", response_model=StudyResponse)
    def study_polytest(req: PolytestRequest):
        return operations.run_polytest(req)

    @app.post("/study/stability", response_model=StudyResponse)
    def study_stability(req: StabilityRequest):
        return operations.run_stability(req)

    @app.post("/study/eigen", response_model=StudyResponse)
    def study_eigen(req: EigenRequest):
        return operations.run_eigen(req)

    return app


app = create_app()
