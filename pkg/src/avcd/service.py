"""FastAPI service wrapping the decode engine.

The CLI is a thin client of these endpoints (in-process by default, or
against a live server). Input problems answer 422, provider/runtime
failures 500; both carry a JSON body with an "error" field so clients
can map them to stable exit codes.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .core import AvcdError, from_jsonable
from .provider import ProtocolError, ProviderError, UnscriptedStateError
from .runner import run_ablate, run_decode, run_diagnose_kl, run_sweep_tau, run_verify_approx
from .scenario import Scenario, ScenarioValidationError, gen_scenario

app = FastAPI(title="avcd", version=__version__)


class DecodeRequest(BaseModel):
    scenario: dict
    overrides: dict | None = None
    combiner: str = "avcd"


class AblateRequest(BaseModel):
    scenario: dict
    overrides: dict | None = None


class SweepRequest(BaseModel):
    scenario: dict
    taus: list[float | str] = Field(min_length=2)
    overrides: dict | None = None


class DiagnoseRequest(BaseModel):
    scenario: dict
    samples: int = 100
    sigma: float = 1.0
    mask_ratio: float | None = None


class VerifyRequest(BaseModel):
    num_samples: int = 400
    seed: int = 0
    delta_max: float = 0.1
    report_only: bool = False


class GenScenarioRequest(BaseModel):
    kind: str
    seed: int = 0


@app.exception_handler(AvcdError)
def _avcd_error(request: Request, exc: AvcdError) -> JSONResponse:
    runtime = isinstance(exc, (ProviderError, ProtocolError, UnscriptedStateError))
    status = 500 if runtime else 422
    return JSONResponse(status_code=status, content={"error": str(exc)})


@app.exception_handler(ValueError)
def _value_error(request: Request, exc: ValueError) -> JSONResponse:
    return JSONResponse(status_code=422, content={"error": str(exc)})


def _scenario(data: dict) -> Scenario:
    return Scenario.from_json(data)


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/scenario/generate")
def generate_scenario(req: GenScenarioRequest) -> dict:
    return gen_scenario(req.kind, req.seed)


@app.post("/run/decode")
def decode_endpoint(req: DecodeRequest) -> dict:
    result = run_decode(
        _scenario(req.scenario), from_jsonable(req.overrides), combiner=req.combiner
    )
    return result


@app.post("/run/ablate")
def ablate_endpoint(req: AblateRequest) -> dict:
    return run_ablate(_scenario(req.scenario), from_jsonable(req.overrides))


@app.post("/run/sweep-tau")
def sweep_endpoint(req: SweepRequest) -> dict:
    taus = [float(t) for t in req.taus]
    return run_sweep_tau(_scenario(req.scenario), taus, from_jsonable(req.overrides))


@app.post("/run/diagnose-kl")
def diagnose_endpoint(req: DiagnoseRequest) -> dict:
    return run_diagnose_kl(
        _scenario(req.scenario), samples=req.samples, sigma=req.sigma, mask_ratio=req.mask_ratio
    )


@app.post("/run/verify-approx")
def verify_endpoint(req: VerifyRequest) -> dict:
    return run_verify_approx(
        num_samples=req.num_samples,
        seed=req.seed,
        delta_max=req.delta_max,
        report_only=req.report_only,
    )
