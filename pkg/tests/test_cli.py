import csv
import json
import os

import pytest

from orplan.cli import main
from orplan.model import Instance, Plan


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


SMALL_SURROGATE = ["--surrogate-points", "24", "--surrogate-scenarios", "15"]


def test_gen_plan_simulate_eval_pipeline(workdir):
    cache = str(workdir / "cache")
    instance_path = str(workdir / "instance.json")
    scen_path = str(workdir / "scen.jsonl")
    plan_path = str(workdir / "plan.json")
    out_path = str(workdir / "outcomes.jsonl")
    report_path = str(workdir / "report.json")

    rc = main([
        "gen", "--seed", "5", "--patients", "20", "--lambda", "1",
        "--unit", "day", "--cost-structure", "cs3", "--out", instance_path,
        "--scenarios", "4", "--scenarios-out", scen_path,
        "--surrogates", cache, *SMALL_SURROGATE,
    ])
    assert rc == 0
    instance = Instance.from_json(open(instance_path).read())
    assert len(instance.patients) == 20
    assert sum(1 for _ in open(scen_path)) == 4

    rc = main([
        "plan", "--method", "smb2ss", "--instance", instance_path,
        "--surrogates", cache, "--ne", "2", "--k", "15",
        "--out", plan_path, *SMALL_SURROGATE,
    ])
    assert rc == 0
    plan = Plan.from_json(open(plan_path).read())
    plan.validate(instance)

    rc = main([
        "simulate", "--instance", instance_path, "--plan", plan_path,
        "--scenario-file", scen_path, "--delta", "120", "--alpha", "0.7",
        "--out", out_path, "--trace",
    ])
    assert rc == 0
    lines = [json.loads(line) for line in open(out_path)]
    assert len(lines) == 4
    assert all("trace" in record for record in lines)

    rc = main([
        "eval", "--instance", instance_path, "--plan", plan_path,
        "--scenarios", scen_path, "--delta", "120", "--alpha", "0.7",
        "--out", report_path,
    ])
    assert rc == 0
    report = json.load(open(report_path))
    assert len(report["per_scenario"]) == 4


def test_surrogate_command(workdir, capsys):
    cache = str(workdir / "cache-cs2")
    rc = main(["surrogate", "--cost-structure", "cs2", "--out", cache,
               *SMALL_SURROGATE])
    assert rc == 0
    assert any(name.endswith(".json") for name in os.listdir(cache))
    out = capsys.readouterr().out
    assert "pieces" in out


def test_bench_writes_csv(workdir):
    cache = str(workdir / "cache")
    out = str(workdir / "bench.csv")
    rc = main([
        "bench", "--seeds", "1", "--patients", "15", "--lambdas", "0",
        "--methods", "det,firstfit", "--deltas", "120", "--alphas", "0.7",
        "--cost-structures", "cs3", "--k", "5", "--surrogates", cache,
        "--out", out, *SMALL_SURROGATE,
    ])
    assert rc == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 2
    assert {r["method"] for r in rows} == {"det", "firstfit"}
    assert all(float(r["mean_total"]) > 0 for r in rows)
