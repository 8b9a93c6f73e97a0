import json
import time

import pytest
from fastapi.testclient import TestClient

from orplan import evalmc
from orplan.model import Instance, Scenario, SimulationOutcome
from orplan.service import ServiceSettings, create_app


@pytest.fixture(scope="module")
def client(tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("service-data")
    settings = ServiceSettings(
        data_dir=str(data_dir), surrogate_points=24, surrogate_scenarios=15, workers=2
    )
    app = create_app(settings)
    with TestClient(app) as c:
        yield c


def _wait_for_job(client, job_id, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        job = client.get(f"/jobs/{job_id}").json()
        if job["status"] in ("done", "failed"):
            return job
        time.sleep(0.05)
    raise TimeoutError(f"job {job_id} did not finish")


def test_instance_round_trip(client):
    response = client.post(
        "/instances",
        json={"seed": 1, "n_patients": 20, "rate": 1.0, "cost_structure": "cs3"},
    )
    assert response.status_code == 201
    body = response.json()
    assert len(body["instance"]["patients"]) == 20
    instance_id = body["id"]
    first = client.get(f"/instances/{instance_id}")
    second = client.get(f"/instances/{instance_id}")
    assert first.status_code == 200
    assert first.content == second.content  # repeated GETs byte-identical


def test_unknown_resources_404(client):
    assert client.get("/jobs/nope").status_code == 404
    assert client.get("/instances/nope").status_code == 404
    assert client.get("/plans/nope").status_code == 404


def test_invalid_config_400(client):
    response = client.post("/instances", json={"seed": 1, "n_patients": 0})
    assert response.status_code in (400, 422)
    response = client.post("/instances", json={"seed": 1, "flowtime_unit": "hour"})
    assert response.status_code == 400


def test_plan_simulate_montecarlo_flow(client):
    instance_id = client.post(
        "/instances", json={"seed": 2, "n_patients": 15, "rate": 1.0}
    ).json()["id"]

    planned = client.post(
        "/plans",
        json={"instance_id": instance_id, "method": "det", "scenario_count": 20},
    )
    assert planned.status_code == 202
    job_id = planned.json()["job_id"]
    job = _wait_for_job(client, job_id)
    assert job["status"] == "done", job

    plan_response = client.get(f"/plans/{job_id}").json()
    assert plan_response["instance_id"] == instance_id
    assert "assignment" in plan_response["plan"]

    sim = client.post(
        "/simulations",
        json={"plan_id": job_id, "scenario_seed": 7, "delta": 120.0, "alpha": 0.7},
    )
    assert sim.status_code == 200
    body = sim.json()
    # internal consistency: the reported breakdown equals a recomputation
    # from the returned outcome and scenario
    instance = Instance.from_dict(
        client.get(f"/instances/{instance_id}").json()["instance"]
    )
    outcome = SimulationOutcome.from_dict(body["outcome"])
    scenario = Scenario.from_dict(body["scenario"])
    recomputed = evalmc.total_cost(instance, outcome, scenario)
    assert recomputed.total == pytest.approx(body["outcome"]["cost_breakdown"]["total"])
    assert body["trace"]["snapshots"], "trace must carry the cursor grid"
    assert body["planned_layout"], "plan layout needed by the UI"

    mc = client.post(
        "/montecarlo",
        json={"plan_id": job_id, "scenario_count": 5, "delta": 120.0, "alpha": 0.7},
    )
    assert mc.status_code == 202
    mc_job = _wait_for_job(client, mc.json()["job_id"])
    assert mc_job["status"] == "done", mc_job
    report = client.get(f"/montecarlo/{mc.json()['job_id']}").json()["report"]
    totals = [c["total"] for c in report["per_scenario"]]
    assert report["mean"]["total"] == pytest.approx(sum(totals) / len(totals))


def test_plan_with_unknown_method_400(client):
    instance_id = client.post(
        "/instances", json={"seed": 3, "n_patients": 10}
    ).json()["id"]
    response = client.post(
        "/plans", json={"instance_id": instance_id, "method": "magic"}
    )
    assert response.status_code == 400
