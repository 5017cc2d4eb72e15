"""FastAPI facade over the experiment harness and invariant audits.

Endpoints (all JSON):

- ``GET  /health``  liveness + package version.
- ``POST /run``     one experiment; body mirrors ``ExperimentConfig``.
- ``POST /sweep``   grid sweep over gap / corruption budget / horizon.
- ``POST /check``   invariant audits, optionally scoped to one family.
- ``POST /fit``     slope fits + stochastic verdict for a results CSV.

The service is stateless: every request builds its own config and
seeded generators, so concurrent calls cannot interfere.  Validation
errors in configs surface as 422 responses with the original message.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .checks import check_invariants
from .corral import CorralFeasibilityError
from .harness import (
    ExperimentConfig,
    RunResult,
    csv_text,
    fit_csv,
    run_experiment,
    run_sweep,
    stochastic_verdict,
)

__all__ = ["app", "ConfigModel", "RunResponse", "SweepResponse",
           "CheckResponse", "FitResponse"]


class ConfigModel(BaseModel):
    """Pydantic mirror of ``ExperimentConfig`` (same fields, same JSON)."""

    setting: str = "mab"
    stack: str = "full"
    regime: str = "stochastic"
    base: Optional[str] = None
    corral: Optional[str] = None
    horizon: int = 1024
    seeds: list[int] = Field(default_factory=lambda: [0])
    means: Optional[list[float]] = None
    delta: Optional[float] = None
    num_actions: Optional[int] = None
    script: Optional[list[list[float]]] = None
    script_file: Optional[str] = None
    corruption: Optional[dict] = None
    graph_edges: Optional[list[list[int]]] = None
    graph_file: Optional[str] = None
    actions: Optional[list[list[float]]] = None
    theta: Optional[list[float]] = None
    noise: float = 0.1
    ctx_means: Optional[list[list[float]]] = None
    policies: Optional[list[list[int]]] = None
    candidate: Optional[int] = None
    output: Optional[str] = None

    def to_config(self) -> ExperimentConfig:
        data = {k: v for k, v in self.model_dump().items() if v is not None}
        try:
            return ExperimentConfig(**data)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))


class RunSummary(BaseModel):
    ts: list[int]
    mean_regret: list[float]
    q25_regret: list[float]
    q75_regret: list[float]
    final_regret: list[float]
    final_candidates: list[int]
    best_decision: int
    stochastic_verdict: Optional[bool] = None


class RunRequest(BaseModel):
    config: ConfigModel
    include_csv: bool = True


class RunResponse(BaseModel):
    summary: RunSummary
    csv: Optional[str] = None


class SweepRequest(BaseModel):
    config: ConfigModel
    deltas: Optional[list[float]] = None
    budgets: Optional[list[float]] = None
    horizons: Optional[list[int]] = None


class SweepEntry(BaseModel):
    label: str
    summary: RunSummary


class SweepResponse(BaseModel):
    runs: list[SweepEntry]


class CheckRequest(BaseModel):
    scope: Optional[str] = None
    options: dict = Field(default_factory=dict)


class CheckEntry(BaseModel):
    name: str
    passed: bool
    detail: str
    counterexample: Optional[dict] = None


class CheckResponse(BaseModel):
    passed: bool
    results: list[CheckEntry]


class FitRequest(BaseModel):
    csv: str


class FitResponse(BaseModel):
    ts: list[int]
    mean_regret: list[float]
    log_coef: float
    log_r2: float
    sqrt_coef: float
    sqrt_r2: float
    ratio_end: float
    ratio_earlier: float
    stochastic_verdict: bool


app = FastAPI(title="bobw", version=__version__)


def _summarize(result: RunResult) -> RunSummary:
    q25, q75, _, _ = result.band()
    verdict = None
    try:
        verdict = stochastic_verdict(result.ts, result.mean_curve()).passed
    except ValueError:
        pass  # grid too short for a fit; leave the verdict unset
    return RunSummary(
        ts=[int(t) for t in result.ts],
        mean_regret=[float(x) for x in result.mean_curve()],
        q25_regret=[float(x) for x in q25],
        q75_regret=[float(x) for x in q75],
        final_regret=[float(x) for x in result.regret[:, -1]],
        final_candidates=[int(c) for c in result.final_candidates],
        best_decision=result.best_decision,
        stochastic_verdict=verdict,
    )


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/run", response_model=RunResponse)
def run(req: RunRequest) -> RunResponse:
    config = req.config.to_config()
    try:
        result = run_experiment(config)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except CorralFeasibilityError as exc:
        raise HTTPException(status_code=500, detail=f"feasibility: {exc}")
    return RunResponse(summary=_summarize(result),
                       csv=csv_text(result) if req.include_csv else None)


@app.post("/sweep", response_model=SweepResponse)
def sweep(req: SweepRequest) -> SweepResponse:
    config = req.config.to_config()
    try:
        runs = run_sweep(config, deltas=req.deltas, budgets=req.budgets,
                         horizons=req.horizons)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except CorralFeasibilityError as exc:
        raise HTTPException(status_code=500, detail=f"feasibility: {exc}")
    return SweepResponse(runs=[SweepEntry(label=label, summary=_summarize(res))
                               for label, res in runs])


@app.post("/check", response_model=CheckResponse)
def check(req: CheckRequest) -> CheckResponse:
    if req.options and req.scope is None:
        raise HTTPException(status_code=422,
                            detail="check options need an explicit scope")
    try:
        results = check_invariants(scope=req.scope, **req.options)
    except (ValueError, TypeError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    entries = [CheckEntry(name=r.name, passed=r.passed, detail=r.detail,
                          counterexample=r.counterexample) for r in results]
    return CheckResponse(passed=all(r.passed for r in results),
                         results=entries)


@app.post("/fit", response_model=FitResponse)
def fit(req: FitRequest) -> FitResponse:
    try:
        report = fit_csv(req.csv)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return FitResponse(**{**report, "ts": [int(t) for t in report["ts"]]})
