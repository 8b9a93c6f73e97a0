"""Monte Carlo evaluation of plans under the online policy.

Runs a plan over a validation scenario set, aggregates the cost components,
classifies patients (operated as planned, rescheduled, canceled, postponed),
and provides the sample-size sensitivity study and the benchmark sweep used
by the CLI.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Iterator

import numpy as np

from . import instgen, model, simpolicy, stage2
from .model import CostBreakdown, Instance, Plan, Scenario, SimulationOutcome, Specialty

__all__ = [
    "VALIDATION_SEED_OFFSET",
    "EvalReport",
    "total_cost",
    "evaluate_plan",
    "patient_status_counts",
    "k_sensitivity",
    "validation_scenarios",
]

# Validation streams are offset far from instance and training seeds.
VALIDATION_SEED_OFFSET = 1_000_000

STATUS_KEYS = ("scheduled", "postponed", "operated_as_planned", "rescheduled", "canceled")


@dataclass
class EvalReport:
    per_scenario: list[CostBreakdown]
    mean: CostBreakdown
    median_total: float
    quantiles: dict[str, float]
    status_counts: dict[str, float]
    migrations_per_scenario: list[int]
    planner: dict[str, Any] = field(default_factory=dict)

    @property
    def mean_total(self) -> float:
        return self.mean.total

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_scenario": [c.to_dict() for c in self.per_scenario],
            "mean": self.mean.to_dict(),
            "median_total": self.median_total,
            "quantiles": self.quantiles,
            "status_counts": self.status_counts,
            "migrations_per_scenario": self.migrations_per_scenario,
            "planner": self.planner,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EvalReport":
        return cls(
            per_scenario=[CostBreakdown.from_dict(c) for c in data["per_scenario"]],
            mean=CostBreakdown.from_dict(data["mean"]),
            median_total=float(data["median_total"]),
            quantiles={k: float(v) for k, v in data["quantiles"].items()},
            status_counts={k: float(v) for k, v in data["status_counts"].items()},
            migrations_per_scenario=[int(m) for m in data["migrations_per_scenario"]],
            planner=data.get("planner", {}),
        )


def total_cost(instance: Instance, outcome: SimulationOutcome, scenario: Scenario) -> CostBreakdown:
    """Cost components of one executed scenario (see the model module)."""
    return model.cost_breakdown(instance, outcome, scenario)


def patient_status_counts(plan: Plan, outcome: SimulationOutcome) -> dict[str, int]:
    counts = dict.fromkeys(STATUS_KEYS, 0)
    for i, planned in plan.assignment.items():
        final = outcome.final_block[i]
        migrated = outcome.migrations.get(i, 0) > 0
        if planned is None:
            counts["postponed"] += 1
            continue
        counts["scheduled"] += 1
        if final is None:
            counts["canceled"] += 1
        elif migrated:
            counts["rescheduled"] += 1
        else:
            counts["operated_as_planned"] += 1
    return counts


def evaluate_plan(
    instance: Instance,
    plan: Plan,
    scenarios: list[Scenario],
    params: simpolicy.PolicyParams | None = None,
    planner_meta: dict[str, Any] | None = None,
) -> EvalReport:
    """Simulate every scenario and aggregate the cost breakdowns."""
    if not scenarios:
        raise ValueError("need at least one scenario")
    params = params or simpolicy.PolicyParams()
    breakdowns: list[CostBreakdown] = []
    migrations: list[int] = []
    status_totals = dict.fromkeys(STATUS_KEYS, 0.0)
    for scenario in scenarios:
        outcome = simpolicy.simulate(instance, plan, scenario, params)
        breakdowns.append(outcome.cost_breakdown)
        migrations.append(sum(outcome.migrations.values()))
        for key, value in patient_status_counts(plan, outcome).items():
            status_totals[key] += value
    n = len(breakdowns)
    totals = np.array([c.total for c in breakdowns])
    mean = CostBreakdown(
        scheduling=float(np.mean([c.scheduling for c in breakdowns])),
        waiting=float(np.mean([c.waiting for c in breakdowns])),
        idle=float(np.mean([c.idle for c in breakdowns])),
        overtime=float(np.mean([c.overtime for c in breakdowns])),
        migration=float(np.mean([c.migration for c in breakdowns])),
        total=float(totals.mean()),
    )
    quantiles = {
        f"q{int(q * 100):02d}": float(np.quantile(totals, q))
        for q in (0.10, 0.25, 0.50, 0.75, 0.90)
    }
    return EvalReport(
        per_scenario=breakdowns,
        mean=mean,
        median_total=float(np.median(totals)),
        quantiles=quantiles,
        status_counts={k: v / n for k, v in status_totals.items()},
        migrations_per_scenario=migrations,
        planner=planner_meta or {},
    )


def validation_scenarios(instance: Instance, count: int = stage2.PLANNING_K) -> list[Scenario]:
    """Validation set drawn from the conventional offset seed."""
    seed = int(instance.meta.get("seed", 0)) + VALIDATION_SEED_OFFSET
    return instgen.sample_scenarios(instance, count, seed)


def k_sensitivity(
    specialty: Specialty,
    k_grid: list[int],
    reference_k: int = 10_000,
    n_blocks: int = 10,
    patients_per_block: int = 6,
    rates: tuple[float, float, float] = instgen.COST_STRUCTURES["cs5"],
    regular_time: float = instgen.REGULAR_TIME,
    seed: int = 7_654,
) -> list[dict[str, float]]:
    """Solution-quality loss of the sampled second-stage problem versus a
    large reference sample.

    For each random block, tentative times are optimized on the first K
    scenarios of the reference stream and re-priced on the full stream;
    the deviation is the relative excess over the reference optimum.
    Returns one row per K with the mean deviation and mean solve time.
    """
    co, cw, ci = rates
    rng = np.random.default_rng(seed)
    deviations = {k: [] for k in k_grid}
    seconds = {k: [] for k in k_grid}
    for _ in range(n_blocks):
        mus, sigmas = [], []
        for _ in range(patients_per_block):
            delta = instgen.draw_delta(rng)
            mu, sig = instgen.derive_patient_lognormal(specialty, delta, rng)
            mus.append(mu)
            sigmas.append(sig)
        order = np.argsort([model.lognormal_variance(m, s) for m, s in zip(mus, sigmas)],
                           kind="stable")
        mu_arr, sig_arr = np.asarray(mus)[order], np.asarray(sigmas)[order]
        reference = rng.lognormal(mean=mu_arr[:, None], sigma=sig_arr[:, None],
                                  size=(patients_per_block, reference_k))
        ref_problem = stage2.BlockProblem(reference, regular_time, co, cw, ci)
        ref_solution = stage2.solve_block_lp(ref_problem)
        ref_value = stage2.scenario_average_cost(
            ref_solution.tentative, reference, regular_time, co, cw, ci
        )
        for k in k_grid:
            sub = reference[:, :k] if k <= reference_k else reference
            t0 = time.perf_counter()
            sol = stage2.solve_block_lp(stage2.BlockProblem(sub, regular_time, co, cw, ci))
            seconds[k].append(time.perf_counter() - t0)
            value = stage2.scenario_average_cost(
                sol.tentative, reference, regular_time, co, cw, ci
            )
            deviations[k].append(max(value - ref_value, 0.0) / max(ref_value, 1e-12))
    return [
        {
            "K": float(k),
            "deviation": float(np.mean(deviations[k])),
            "seconds": float(np.mean(seconds[k])),
        }
        for k in k_grid
    ]
