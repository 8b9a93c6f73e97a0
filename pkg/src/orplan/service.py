"""HTTP facade over the planning pipeline.

Instances, plans, traced simulations and Monte Carlo reports are exposed as
JSON resources.  Solver-heavy work (planning, Monte Carlo) runs on a bounded
worker pool as asynchronous jobs; instance generation and single-scenario
traces respond synchronously.  Artifacts are content-addressed JSON files
under the data directory.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import evalmc, instgen, planners, simpolicy, surrogate
from .model import Instance, Plan, Specialty
from .planners import PlannerConfig

__all__ = ["create_app", "ServiceSettings"]


@dataclass
class ServiceSettings:
    data_dir: str = "orplan-data"
    surrogate_dir: str | None = None  # default: <data_dir>/surrogates
    surrogate_points: int = surrogate.DEFAULT_CLOUD_POINTS
    surrogate_scenarios: int = 1000
    workers: int = field(default_factory=lambda: max(1, os.cpu_count() or 1))

    def __post_init__(self) -> None:
        if self.surrogate_dir is None:
            self.surrogate_dir = os.path.join(self.data_dir, "surrogates")


class ArtifactStore:
    """Content-addressed JSON artifacts on disk."""

    def __init__(self, root: str):
        self.root = os.path.join(root, "objects")
        os.makedirs(self.root, exist_ok=True)

    def put(self, payload: dict[str, Any]) -> str:
        text = json.dumps(payload, sort_keys=True)
        digest = hashlib.sha256(text.encode()).hexdigest()[:16]
        path = os.path.join(self.root, f"{digest}.json")
        if not os.path.exists(path):
            with open(path, "w") as fh:
                fh.write(text)
        return digest

    def get(self, digest: str) -> dict[str, Any] | None:
        path = os.path.join(self.root, f"{digest}.json")
        if not os.path.exists(path):
            return None
        with open(path) as fh:
            return json.load(fh)


@dataclass
class JobRecord:
    id: str
    kind: str  # plan | simulate | montecarlo | surrogate
    params: dict[str, Any]
    status: str = "queued"  # queued | running | done | failed
    result_id: str | None = None
    error: str | None = None
    created: float = field(default_factory=time.time)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id, "kind": self.kind, "params": self.params,
            "status": self.status, "result_id": self.result_id,
            "error": self.error, "created": self.created,
        }


class JobStore:
    def __init__(self, workers: int):
        self._jobs: dict[str, JobRecord] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=workers)

    def submit(self, kind: str, params: dict[str, Any], fn) -> JobRecord:
        record = JobRecord(id=uuid.uuid4().hex[:12], kind=kind, params=params)
        with self._lock:
            self._jobs[record.id] = record

        def run() -> None:
            with self._lock:
                record.status = "running"
            try:
                result_id = fn()
                with self._lock:
                    record.result_id = result_id
                    record.status = "done"
            except Exception as exc:  # job failures surface through the API
                with self._lock:
                    record.error = str(exc)
                    record.status = "failed"

        self._pool.submit(run)
        return record

    def get(self, job_id: str) -> JobRecord | None:
        with self._lock:
            return self._jobs.get(job_id)


class InstanceRequest(BaseModel):
    seed: int = 1
    n_patients: int = Field(70, gt=0)
    rate: float = Field(0.0, ge=0.0)
    flowtime_unit: str = "day"
    cost_structure: str = "cs3"
    max_emergencies_per_day: int = Field(8, ge=0)


class PlanRequest(BaseModel):
    instance_id: str
    method: str = "smb2ss"
    n_e: int = Field(0, ge=0)
    scenario_count: int = Field(450, ge=1)
    scenario_seed: int | None = None
    time_limit: float = Field(20.0, gt=0)
    quantile: float = Field(0.7, gt=0.0, lt=1.0)
    mip_gap: float = Field(0.005, ge=0.0)


class SimulationRequest(BaseModel):
    plan_id: str
    scenario_seed: int = 1
    delta: float = Field(120.0, gt=0)
    alpha: float = Field(0.7, gt=0)


class MonteCarloRequest(BaseModel):
    plan_id: str
    scenario_count: int = Field(450, ge=1)
    scenario_seed: int | None = None
    delta: float = Field(120.0, gt=0)
    alpha: float = Field(0.7, gt=0)


def _planned_layout(instance: Instance, plan: Plan) -> list[dict[str, Any]]:
    """Offline plan as Gantt segments (expected durations at tentative times)."""
    segments = []
    for i, b in plan.assignment.items():
        if b is None:
            continue
        patient = instance.patient(i)
        block = instance.block(b)
        start = plan.tentative[i]
        segments.append({
            "id": i, "block": b, "day": block.day, "kind": "elective",
            "start": start, "end": start + patient.expected_duration(),
            "tentative": start, "specialty": patient.specialty,
        })
    return segments


def create_app(settings: ServiceSettings | None = None) -> FastAPI:
    settings = settings or ServiceSettings()
    os.makedirs(settings.data_dir, exist_ok=True)
    store = ArtifactStore(settings.data_dir)
    jobs = JobStore(settings.workers)
    app = FastAPI(title="orplan", version="0.1.0")

    def surrogates_for(cost_structure: str):
        rates = instgen.COST_STRUCTURES[cost_structure]
        specs = {
            code: Specialty(code, mean, sd * sd)
            for code, (mean, sd) in instgen.SPECIALTY_MARGINALS.items()
        }
        return surrogate.load_or_build(
            settings.surrogate_dir, specs, rates,
            n_points=settings.surrogate_points,
            k_scenarios=settings.surrogate_scenarios,
        )

    def load_instance(instance_id: str) -> Instance:
        payload = store.get(instance_id)
        if payload is None or payload.get("kind") != "instance":
            raise HTTPException(404, f"unknown instance {instance_id}")
        return Instance.from_dict(payload["instance"])

    def load_plan(plan_job_id: str) -> tuple[Plan, Instance, dict[str, Any]]:
        job = jobs.get(plan_job_id)
        if job is None or job.kind != "plan":
            raise HTTPException(404, f"unknown plan {plan_job_id}")
        if job.status == "failed":
            raise HTTPException(409, f"plan job failed: {job.error}")
        if job.status != "done":
            raise HTTPException(409, f"plan job is {job.status}")
        payload = store.get(job.result_id)
        plan = Plan.from_dict(payload["plan"])
        instance = Instance.from_dict(store.get(payload["instance_id"])["instance"])
        return plan, instance, payload

    @app.post("/instances", status_code=201)
    def create_instance(request: InstanceRequest):
        try:
            config = instgen.GenConfig(
                seed=request.seed,
                n_patients=request.n_patients,
                rate=request.rate,
                flowtime_unit=request.flowtime_unit,
                cost_structure=request.cost_structure,
                max_emergencies_per_day=request.max_emergencies_per_day,
            )
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        slopes = surrogate.rightmost_slopes(surrogates_for(request.cost_structure))
        instance = instgen.generate_instance(config, slopes)
        instance_id = store.put({"kind": "instance", "instance": instance.to_dict()})
        return {"id": instance_id, "instance": instance.to_dict()}

    @app.get("/instances/{instance_id}")
    def get_instance(instance_id: str):
        payload = store.get(instance_id)
        if payload is None or payload.get("kind") != "instance":
            raise HTTPException(404, f"unknown instance {instance_id}")
        return {"id": instance_id, "instance": payload["instance"]}

    @app.post("/plans", status_code=202)
    def create_plan(request: PlanRequest):
        instance = load_instance(request.instance_id)
        if request.method not in ("smb2ss", "det", "firstfit", "saa", "benders"):
            raise HTTPException(400, f"unknown method {request.method}")
        config = PlannerConfig(
            method=request.method, n_e=request.n_e,
            scenario_count=request.scenario_count,
            scenario_seed=request.scenario_seed,
            time_limit=request.time_limit, quantile=request.quantile,
            mip_gap=request.mip_gap,
        )

        def run() -> str:
            models = surrogates_for(
                instance.meta.get("cost_structure", "cs3")
            ) if request.method == "smb2ss" else None
            result = planners.plan(instance, config, models)
            return store.put({
                "kind": "plan",
                "instance_id": request.instance_id,
                "plan": result.plan.to_dict(),
                "report": result.report.to_dict(),
            })

        record = jobs.submit("plan", request.model_dump(), run)
        return {"job_id": record.id, "job": record.to_dict()}

    @app.get("/plans/{plan_id}")
    def get_plan(plan_id: str):
        plan, _, payload = load_plan(plan_id)
        return {"id": plan_id, "plan": payload["plan"], "report": payload["report"],
                "instance_id": payload["instance_id"]}

    @app.post("/simulations")
    def run_simulation(request: SimulationRequest):
        plan, instance, payload = load_plan(request.plan_id)
        scenario = instgen.sample_scenarios(instance, 1, request.scenario_seed)[0]
        params = simpolicy.PolicyParams(delta=request.delta, alpha=request.alpha)
        outcome, trace = simpolicy.simulate(instance, plan, scenario, params,
                                            collect_trace=True)
        result = {
            "kind": "simulation",
            "plan_id": request.plan_id,
            "instance_id": payload["instance_id"],
            "scenario_seed": request.scenario_seed,
            "params": {"delta": request.delta, "alpha": request.alpha},
            "scenario": scenario.to_dict(),
            "outcome": outcome.to_dict(),
            "trace": trace,
            "planned_layout": _planned_layout(instance, plan),
            "horizon": instance.horizon,
            "day_minutes": simpolicy.DAY_MINUTES,
            "regular_time": instance.regular_time,
        }
        result_id = store.put(result)
        return {"id": result_id, **result}

    @app.post("/montecarlo", status_code=202)
    def run_montecarlo(request: MonteCarloRequest):
        plan, instance, payload = load_plan(request.plan_id)
        params = simpolicy.PolicyParams(delta=request.delta, alpha=request.alpha)

        def run() -> str:
            if request.scenario_seed is not None:
                scenarios = instgen.sample_scenarios(
                    instance, request.scenario_count, request.scenario_seed
                )
            else:
                scenarios = evalmc.validation_scenarios(instance, request.scenario_count)
            report = evalmc.evaluate_plan(instance, plan, scenarios, params,
                                          planner_meta=payload.get("report", {}))
            return store.put({
                "kind": "montecarlo",
                "plan_id": request.plan_id,
                "report": report.to_dict(),
                "params": request.model_dump(),
            })

        record = jobs.submit("montecarlo", request.model_dump(), run)
        return {"job_id": record.id, "job": record.to_dict()}

    @app.get("/montecarlo/{result_or_job_id}")
    def get_montecarlo(result_or_job_id: str):
        job = jobs.get(result_or_job_id)
        if job is not None:
            if job.status == "failed":
                raise HTTPException(409, f"job failed: {job.error}")
            if job.status != "done":
                return {"job": job.to_dict()}
            return {"id": job.result_id, **store.get(job.result_id)}
        payload = store.get(result_or_job_id)
        if payload is None or payload.get("kind") != "montecarlo":
            raise HTTPException(404, f"unknown Monte Carlo result {result_or_job_id}")
        return {"id": result_or_job_id, **payload}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id}")
        return job.to_dict()

    @app.get("/healthz")
    def health():
        return {"status": "ok"}

    frontend = os.environ.get("ORPLAN_FRONTEND_DIR", "")
    if frontend and os.path.isdir(frontend):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend, html=True), name="ui")
    return app
