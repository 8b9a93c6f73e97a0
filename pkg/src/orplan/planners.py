"""Offline planners: assignment of elective patients to blocks plus tentative
starting times.

Five methods are provided.  The surrogate-based planner replaces the exact
second-stage cost of each block by the fitted convex piecewise-linear model
and can reserve capacity for expected emergency arrivals through dummy cases;
the deterministic and first-fit planners work on quantile durations; the
integrated scenario MIP and the cutting-plane (Benders) planner optimize the
exact sampled second-stage cost for a single specialty without emergencies.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import instgen, solver, stage2
from .model import ElectivePatient, Instance, Plan, Scenario
from .surrogate import SurrogateModel

log = logging.getLogger(__name__)

__all__ = [
    "TRAIN_SEED_OFFSET",
    "PlannerConfig",
    "PlannerReport",
    "PlanResult",
    "PlannerError",
    "dummy_emergency_durations",
    "plan_smb2ss",
    "plan_deterministic",
    "plan_firstfit",
    "plan_saa",
    "plan_benders",
    "plan",
]

# Training scenario streams sit between the instance seed and the validation
# stream (instance seed + 1e6) so the two never overlap.
TRAIN_SEED_OFFSET = 500_000

# Dummy emergencies with mean duration below this threshold are dropped.
MIN_DUMMY_MINUTES = 0.01


class PlannerError(RuntimeError):
    """Raised when a planner cannot produce any feasible incumbent."""


@dataclass
class PlannerConfig:
    method: str = "smb2ss"
    n_e: int = 0                      # dummy emergencies per day (smb2ss)
    scenario_count: int = stage2.PLANNING_K
    scenario_seed: int | None = None  # default: instance seed + TRAIN_SEED_OFFSET
    time_limit: float = 20.0          # per specialty (smb2ss)
    saa_time_limit: float = 300.0     # per specialty (saa / benders)
    quantile: float = 0.7             # deterministic duration level (det / firstfit)
    big_m: float = 1000.0
    benders_tol: float = 1e-6
    mip_gap: float = 0.005
    workers: int | None = None

    def __post_init__(self) -> None:
        if self.n_e < 0:
            raise ValueError("n_e must be nonnegative")
        if self.scenario_count < 1:
            raise ValueError("scenario_count must be at least 1")
        if not 0.0 < self.quantile < 1.0:
            raise ValueError("quantile must lie in (0, 1)")


@dataclass
class PlannerReport:
    method: str
    objective: float
    gap: float
    wall_time: float
    per_specialty: dict[str, dict[str, float]] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "objective": self.objective,
            "gap": self.gap,
            "wall_time": self.wall_time,
            "per_specialty": self.per_specialty,
            "extra": {k: v for k, v in self.extra.items() if _json_safe(v)},
        }


def _json_safe(value: Any) -> bool:
    try:
        import json

        json.dumps(value)
        return True
    except TypeError:
        return False


@dataclass
class PlanResult:
    plan: Plan
    report: PlannerReport


def dummy_emergency_durations(rate: float, marginal_mean: float, count: int) -> list[float]:
    """Mean duration of the j-th reserved emergency slot per day:
    marginal_mean * P(at least j Poisson arrivals), j = 1..count."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    durations = []
    cdf = 0.0
    term = math.exp(-rate)
    for j in range(1, count + 1):
        cdf += term  # P(X = j - 1)
        durations.append(marginal_mean * max(1.0 - cdf, 0.0))
        term *= rate / j
    return durations


def _resolve_seed(instance: Instance, config: PlannerConfig) -> int:
    if config.scenario_seed is not None:
        return config.scenario_seed
    return int(instance.meta.get("seed", 0)) + TRAIN_SEED_OFFSET


def _training_scenarios(instance: Instance, config: PlannerConfig) -> list[Scenario]:
    return instgen.sample_scenarios(instance, config.scenario_count, _resolve_seed(instance, config))


def _rates(instance: Instance) -> tuple[float, float, float]:
    c = instance.costs
    return c.overtime, c.waiting, c.idle


def _workers(config: PlannerConfig) -> int:
    import os

    if config.workers is not None:
        return max(1, config.workers)
    env = os.environ.get("ORPLAN_SOLVER_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _tentative_pass(
    instance: Instance,
    assignment: dict[int, str | None],
    scenarios: list[Scenario],
    workers: int = 1,
) -> tuple[dict[int, float], float]:
    """Solve the second-stage LP for every used block; returns the tentative
    times and the summed optimal second-stage cost."""
    co, cw, ci = _rates(instance)
    by_block: dict[str, list[ElectivePatient]] = {}
    for i, b in assignment.items():
        if b is not None:
            by_block.setdefault(b, []).append(instance.patient(i))

    def solve_one(item: tuple[str, list[ElectivePatient]]):
        block_id, patients = item
        problem = stage2.BlockProblem.from_patients(
            patients, scenarios, instance.block(block_id).regular_time, co, cw, ci
        )
        sol = stage2.solve_block_lp(problem)
        return problem.patient_ids, sol

    items = sorted(by_block.items())
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solved = list(pool.map(solve_one, items))
    else:
        solved = [solve_one(it) for it in items]
    tentative: dict[int, float] = {}
    total = 0.0
    for ids, sol in solved:
        total += sol.cost
        for pid, t in zip(ids, sol.tentative):
            tentative[pid] = float(t)
    return tentative, total


# -- surrogate-based planner ---------------------------------------------------

def _smb2ss_specialty_model(
    instance: Instance,
    code: str,
    surrogate: SurrogateModel,
    config: PlannerConfig,
) -> tuple[dict[int, str | None], float, float]:
    """Solve the per-specialty assignment MIP; returns (assignment, objective, gap)."""
    patients = instance.patients_of_specialty(code)
    blocks = instance.blocks_of_specialty(code)
    if not patients:
        return {}, 0.0, 0.0
    if not blocks:
        assignment = {p.id: None for p in patients}
        return assignment, sum(instance.costs.postpone_cost(p.id) for p in patients), 0.0

    m = solver.LinearModel(f"smb2ss-{code}")
    m.time_limit = config.time_limit
    m.mip_gap = config.mip_gap
    x: dict[tuple[int, str | None], int] = {}
    for p in patients:
        for b in blocks:
            x[p.id, b.id] = m.add_var(binary=True, obj=instance.costs.assign_cost(p.id, b.id))
        x[p.id, None] = m.add_var(binary=True, obj=instance.costs.postpone_cost(p.id))
    load = {b.id: m.add_var(lb=0.0) for b in blocks}
    y = {b.id: m.add_var(lb=0.0, obj=1.0) for b in blocks}

    for p in patients:
        cols = [x[p.id, b.id] for b in blocks] + [x[p.id, None]]
        m.add_constr(cols, np.ones(len(cols)), solver.EQ, 1.0)
    for b in blocks:
        cols = [x[p.id, b.id] for p in patients] + [load[b.id]]
        coefs = [-p.expected_duration() for p in patients] + [1.0]
        m.add_constr(cols, coefs, solver.EQ, 0.0)
        for slope, intercept in surrogate.pieces:
            m.add_constr([y[b.id], load[b.id]], [1.0, -slope], solver.GE, intercept)

    res = solver.solve(m)
    if not res.ok:
        raise PlannerError(f"surrogate MIP for {code} failed: {res.status} {res.message}")
    assignment: dict[int, str | None] = {}
    for p in patients:
        chosen: str | None = None
        for b in blocks:
            if res.x[x[p.id, b.id]] > 0.5:
                chosen = b.id
                break
        assignment[p.id] = chosen
    return assignment, float(res.objective), float(res.gap or 0.0)


def _smb2ss_joint_model(
    instance: Instance,
    surrogates: dict[str, SurrogateModel],
    config: PlannerConfig,
    dummies: list[float],
) -> tuple[dict[int, str | None], float, float]:
    """Joint MIP with per-day dummy emergency cases reserving block capacity."""
    m = solver.LinearModel("smb2ss-joint")
    active = {s for s in instance.specialties if instance.patients_of_specialty(s)}
    m.time_limit = config.time_limit * max(1, len(active))
    m.mip_gap = config.mip_gap
    x: dict[tuple[int, str | None], int] = {}
    for p in instance.patients:
        for b in instance.blocks_of_specialty(p.specialty):
            x[p.id, b.id] = m.add_var(binary=True, obj=instance.costs.assign_cost(p.id, b.id))
        x[p.id, None] = m.add_var(binary=True, obj=instance.costs.postpone_cost(p.id))
    z: dict[tuple[int, int, str], int] = {}
    for day in instance.horizon:
        day_blocks = instance.blocks_of_day(day)
        if not day_blocks and dummies:
            raise PlannerError(f"day {day} has no blocks to host emergencies")
        for j, _ in enumerate(dummies):
            for b in day_blocks:
                z[day, j, b.id] = m.add_var(binary=True)
    load = {b.id: m.add_var(lb=0.0) for b in instance.blocks}
    y = {b.id: m.add_var(lb=0.0, obj=1.0) for b in instance.blocks}

    for p in instance.patients:
        cols = [x[p.id, b.id] for b in instance.blocks_of_specialty(p.specialty)]
        cols.append(x[p.id, None])
        m.add_constr(cols, np.ones(len(cols)), solver.EQ, 1.0)
    for day in instance.horizon:
        day_blocks = instance.blocks_of_day(day)
        for j, _ in enumerate(dummies):
            cols = [z[day, j, b.id] for b in day_blocks]
            m.add_constr(cols, np.ones(len(cols)), solver.EQ, 1.0)
    for b in instance.blocks:
        cols = [x[p.id, b.id] for p in instance.patients_of_specialty(b.specialty)]
        coefs = [-p.expected_duration() for p in instance.patients_of_specialty(b.specialty)]
        for j, lj in enumerate(dummies):
            cols.append(z[b.day, j, b.id])
            coefs.append(-lj)
        cols.append(load[b.id])
        coefs.append(1.0)
        m.add_constr(cols, coefs, solver.EQ, 0.0)
        for slope, intercept in surrogates[b.specialty].pieces:
            m.add_constr([y[b.id], load[b.id]], [1.0, -slope], solver.GE, intercept)

    res = solver.solve(m)
    if not res.ok:
        raise PlannerError(f"surrogate joint MIP failed: {res.status} {res.message}")
    assignment: dict[int, str | None] = {}
    for p in instance.patients:
        chosen: str | None = None
        for b in instance.blocks_of_specialty(p.specialty):
            if res.x[x[p.id, b.id]] > 0.5:
                chosen = b.id
                break
        assignment[p.id] = chosen
    return assignment, float(res.objective), float(res.gap or 0.0)


def plan_smb2ss(
    instance: Instance,
    surrogates: dict[str, SurrogateModel],
    config: PlannerConfig | None = None,
) -> PlanResult:
    """Surrogate-model planner; decomposes per specialty when no emergency
    capacity is reserved, otherwise solves the joint model with dummy cases."""
    config = config or PlannerConfig(method="smb2ss")
    t0 = time.perf_counter()
    dummies = [
        d for d in dummy_emergency_durations(
            instance.emergencies.rate, instance.emergencies.marginal_mean, config.n_e
        )
        if d >= MIN_DUMMY_MINUTES
    ]
    # dummy cases may land on any block, so the joint model needs every
    # block specialty's surrogate, not only those with patients
    if dummies:
        needed = {b.specialty for b in instance.blocks}
    else:
        needed = {p.specialty for p in instance.patients}
    missing = needed - set(surrogates)
    if missing:
        raise PlannerError(f"missing surrogate models for {sorted(missing)}")
    per_specialty: dict[str, dict[str, float]] = {}
    if dummies:
        assignment, objective, gap = _smb2ss_joint_model(instance, surrogates, config, dummies)
    else:
        assignment = {}
        objective = 0.0
        gap = 0.0
        codes = [s for s in instance.specialties if instance.patients_of_specialty(s)]

        def run(code: str):
            return code, _smb2ss_specialty_model(instance, code, surrogates[code], config)

        workers = _workers(config)
        if workers > 1 and len(codes) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run, codes))
        else:
            results = [run(c) for c in codes]
        for code, (asg, obj, g) in results:
            assignment.update(asg)
            objective += obj
            gap = max(gap, g)
            per_specialty[code] = {"objective": obj, "gap": g}

    scenarios = _training_scenarios(instance, config)
    tentative, stage2_cost = _tentative_pass(instance, assignment, scenarios, _workers(config))
    report = PlannerReport(
        method="smb2ss",
        objective=objective,
        gap=gap,
        wall_time=time.perf_counter() - t0,
        per_specialty=per_specialty,
        extra={"n_e": config.n_e, "dummy_durations": dummies, "stage2_cost": stage2_cost},
    )
    return PlanResult(Plan(assignment, tentative), report)


# -- deterministic quantile planner ---------------------------------------------

def _cumulative_tentative(
    instance: Instance, assignment: dict[int, str | None], durations: dict[int, float]
) -> dict[int, float]:
    """Back-to-back tentative times in variance order using fixed durations."""
    tentative: dict[int, float] = {}
    by_block: dict[str, list[ElectivePatient]] = {}
    for i, b in assignment.items():
        if b is not None:
            by_block.setdefault(b, []).append(instance.patient(i))
    for block_id, patients in by_block.items():
        clock = 0.0
        for p in stage2.svf_order(patients):
            tentative[p.id] = clock
            clock += durations[p.id]
    return tentative


def plan_deterministic(instance: Instance, config: PlannerConfig | None = None) -> PlanResult:
    """Replace durations by their q-quantile and minimize scheduling plus
    overtime cost; tentative times are back-to-back quantile durations."""
    config = config or PlannerConfig(method="det")
    t0 = time.perf_counter()
    d = {p.id: p.quantile_duration(config.quantile) for p in instance.patients}

    m = solver.LinearModel("deterministic")
    m.time_limit = config.saa_time_limit
    m.mip_gap = config.mip_gap
    x: dict[tuple[int, str | None], int] = {}
    for p in instance.patients:
        for b in instance.blocks_of_specialty(p.specialty):
            x[p.id, b.id] = m.add_var(binary=True, obj=instance.costs.assign_cost(p.id, b.id))
        x[p.id, None] = m.add_var(binary=True, obj=instance.costs.postpone_cost(p.id))
    y = {b.id: m.add_var(lb=0.0, obj=instance.costs.overtime) for b in instance.blocks}
    for p in instance.patients:
        cols = [x[p.id, b.id] for b in instance.blocks_of_specialty(p.specialty)]
        cols.append(x[p.id, None])
        m.add_constr(cols, np.ones(len(cols)), solver.EQ, 1.0)
    for b in instance.blocks:
        patients = instance.patients_of_specialty(b.specialty)
        if not patients:
            continue
        cols = [x[p.id, b.id] for p in patients] + [y[b.id]]
        coefs = [-d[p.id] for p in patients] + [1.0]
        m.add_constr(cols, coefs, solver.GE, -b.regular_time)
    res = solver.solve(m)
    if not res.ok:
        raise PlannerError(f"deterministic MIP failed: {res.status} {res.message}")
    assignment: dict[int, str | None] = {}
    for p in instance.patients:
        chosen: str | None = None
        for b in instance.blocks_of_specialty(p.specialty):
            if res.x[x[p.id, b.id]] > 0.5:
                chosen = b.id
                break
        assignment[p.id] = chosen
    tentative = _cumulative_tentative(instance, assignment, d)
    report = PlannerReport(
        method="det",
        objective=float(res.objective),
        gap=float(res.gap or 0.0),
        wall_time=time.perf_counter() - t0,
        extra={"quantile": config.quantile},
    )
    return PlanResult(Plan(assignment, tentative), report)


# -- first-fit heuristic ---------------------------------------------------------

def plan_firstfit(instance: Instance, config: PlannerConfig | None = None) -> PlanResult:
    """Greedy first-fit on quantile durations, inserting patients in
    nonincreasing order of (cost spread / duration)."""
    config = config or PlannerConfig(method="firstfit")
    t0 = time.perf_counter()
    d = {p.id: p.quantile_duration(config.quantile) for p in instance.patients}
    assignment: dict[int, str | None] = {}
    committed: dict[str, float] = {b.id: 0.0 for b in instance.blocks}

    for code in instance.specialties:
        patients = instance.patients_of_specialty(code)
        if not patients:
            continue
        blocks = sorted(instance.blocks_of_specialty(code), key=lambda b: (b.day, b.id))

        def ratio(p: ElectivePatient) -> float:
            row = instance.costs.assign[p.id]
            ordered = sorted(row.values())
            spread = ordered[1] - ordered[0] if len(ordered) > 1 else 0.0
            return spread / d[p.id]

        for p in sorted(patients, key=lambda p: (-ratio(p), p.id)):
            chosen: str | None = None
            for b in blocks:
                if committed[b.id] + d[p.id] <= b.regular_time + 1e-9:
                    chosen = b.id
                    committed[b.id] += d[p.id]
                    break
            assignment[p.id] = chosen

    tentative = _cumulative_tentative(instance, assignment, d)
    objective = sum(
        instance.costs.assign_cost(i, b) for i, b in assignment.items()
    )
    report = PlannerReport(
        method="firstfit",
        objective=objective,
        gap=0.0,
        wall_time=time.perf_counter() - t0,
        extra={"quantile": config.quantile},
    )
    return PlanResult(Plan(assignment, tentative), report)


# -- integrated scenario MIP -----------------------------------------------------

def _specialty_durations(
    instance: Instance, code: str, scenarios: list[Scenario]
) -> tuple[list[ElectivePatient], np.ndarray]:
    """Specialty patients in variance order plus their (n, K) duration matrix."""
    ordered = stage2.svf_order(instance.patients_of_specialty(code))
    p = np.array(
        [[sc.elective_durations[pt.id] for sc in scenarios] for pt in ordered]
    ).reshape(len(ordered), len(scenarios))
    return ordered, p


def _saa_specialty(
    instance: Instance,
    code: str,
    scenarios: list[Scenario],
    config: PlannerConfig,
) -> tuple[dict[int, str | None], dict[int, float], float, float]:
    patients, p = _specialty_durations(instance, code, scenarios)
    blocks = instance.blocks_of_specialty(code)
    costs = instance.costs
    if not patients:
        return {}, {}, 0.0, 0.0
    if not blocks:
        asg = {pt.id: None for pt in patients}
        return asg, {}, sum(costs.postpone_cost(pt.id) for pt in patients), 0.0
    n, k = p.shape
    nb = len(blocks)
    co, cw, ci = _rates(instance)
    big_m = config.big_m

    m = solver.LinearModel(f"saa-{code}")
    m.time_limit = config.saa_time_limit
    m.mip_gap = config.mip_gap
    # x[i, b] with the idle-correction term folded into the objective
    x = np.array(
        [
            [
                m.add_var(binary=True,
                          obj=costs.assign_cost(pt.id, b.id) - ci * float(p[i].mean()))
                for b in blocks
            ]
            for i, pt in enumerate(patients)
        ]
    )
    xd = np.array([m.add_var(binary=True, obj=costs.postpone_cost(pt.id)) for pt in patients])
    t = np.array([[m.add_var(lb=0.0) for _ in blocks] for _ in patients])
    s = np.arange(m.num_vars, m.num_vars + n * nb * k).reshape(n, nb, k)
    m.add_vars(n * nb * k, lb=0.0)
    load = np.arange(m.num_vars, m.num_vars + nb * k).reshape(nb, k)
    m.add_vars(nb * k, lb=0.0, obj=ci / k)
    over = np.arange(m.num_vars, m.num_vars + nb * k).reshape(nb, k)
    m.add_vars(nb * k, lb=0.0, obj=co / k)
    delay = np.arange(m.num_vars, m.num_vars + n * nb * k).reshape(n, nb, k)
    m.add_vars(n * nb * k, lb=0.0, obj=cw / k)

    for i in range(n):
        cols = list(x[i]) + [xd[i]]
        m.add_constr(cols, np.ones(len(cols)), solver.EQ, 1.0)
    for b in range(nb):
        for i in range(n):
            for kk in range(k):
                # release: s >= t
                m.add_constr([s[i, b, kk], t[i, b]], [1.0, -1.0], solver.GE, 0.0)
                if i > 0:
                    # precedence with assignment-gated duration
                    m.add_constr(
                        [s[i, b, kk], s[i - 1, b, kk], x[i - 1, b]],
                        [1.0, -1.0, -float(p[i - 1, kk])],
                        solver.GE, 0.0,
                    )
                # waiting linearization: delay >= s - t - M (1 - x)
                m.add_constr(
                    [delay[i, b, kk], s[i, b, kk], t[i, b], x[i, b]],
                    [1.0, -1.0, 1.0, -big_m],
                    solver.GE, -big_m,
                )
            # block load and overtime
        for kk in range(k):
            m.add_constr(
                [load[b, kk], s[n - 1, b, kk], x[n - 1, b]],
                [1.0, -1.0, -float(p[n - 1, kk])],
                solver.GE, 0.0,
            )
            m.add_constr([over[b, kk], load[b, kk]], [1.0, -1.0], solver.GE,
                         -blocks[b].regular_time)

    res = solver.solve(m)
    if res.x is None:
        raise PlannerError(f"integrated scenario MIP for {code}: no incumbent "
                           f"({res.status}: {res.message})")
    assignment: dict[int, str | None] = {}
    tentative: dict[int, float] = {}
    for i, pt in enumerate(patients):
        chosen = None
        for b in range(nb):
            if res.x[x[i, b]] > 0.5:
                chosen = b
                break
        assignment[pt.id] = blocks[chosen].id if chosen is not None else None
        if chosen is not None:
            tentative[pt.id] = float(res.x[t[i, chosen]])
    # monotonize tentative times along the variance order inside each block
    for b in blocks:
        clock = 0.0
        for pt in patients:
            if assignment[pt.id] == b.id:
                clock = max(clock, tentative[pt.id])
                tentative[pt.id] = clock
    return assignment, tentative, float(res.objective), float(res.gap or 0.0)


def plan_saa(instance: Instance, config: PlannerConfig | None = None) -> PlanResult:
    """Integrated scenario MIP (no emergencies), solved per specialty."""
    config = config or PlannerConfig(method="saa")
    t0 = time.perf_counter()
    scenarios = _training_scenarios(instance, config)
    assignment: dict[int, str | None] = {}
    tentative: dict[int, float] = {}
    objective = 0.0
    gap = 0.0
    per_specialty: dict[str, dict[str, float]] = {}
    for code in instance.specialties:
        asg, tnt, obj, g = _saa_specialty(instance, code, scenarios, config)
        assignment.update(asg)
        tentative.update(tnt)
        objective += obj
        gap = max(gap, g)
        if asg:
            per_specialty[code] = {"objective": obj, "gap": g}
    report = PlannerReport(
        method="saa", objective=objective, gap=gap,
        wall_time=time.perf_counter() - t0, per_specialty=per_specialty,
        extra={"scenario_count": config.scenario_count},
    )
    return PlanResult(Plan(assignment, tentative), report)


# -- Benders decomposition -------------------------------------------------------

@dataclass
class BendersCut:
    """Optimality cut  z_b >= coefficients . x_b + constant  for one block.

    Coefficients cover every specialty patient in variance order; the cut is
    tight at the assignment that generated it.
    """

    block: str
    coefficients: np.ndarray
    constant: float
    value_at_generation: float
    assignment_at_generation: tuple[int, ...]


def _benders_specialty(
    instance: Instance,
    code: str,
    scenarios: list[Scenario],
    config: PlannerConfig,
) -> tuple[dict[int, str | None], float, float, dict[str, Any]]:
    patients, p = _specialty_durations(instance, code, scenarios)
    blocks = instance.blocks_of_specialty(code)
    costs = instance.costs
    trace: dict[str, Any] = {"lb": [], "ub": [], "cuts": []}
    if not patients:
        return {}, 0.0, 0.0, trace
    if not blocks:
        asg = {pt.id: None for pt in patients}
        return asg, sum(costs.postpone_cost(pt.id) for pt in patients), 0.0, trace
    n, k = p.shape
    co, cw, ci = _rates(instance)
    mean_p = p.mean(axis=1)

    # initial cuts: idle-rate and (overtime+idle)-rate lower bounds
    cuts: dict[str, list[BendersCut]] = {
        b.id: [
            BendersCut(b.id, ci * mean_p.copy(), 0.0, 0.0, ()),
            BendersCut(b.id, (co + ci) * mean_p.copy(), -co * b.regular_time, 0.0, ()),
        ]
        for b in blocks
    }

    def solve_master() -> tuple[np.ndarray, np.ndarray, float]:
        m = solver.LinearModel(f"benders-master-{code}")
        m.mip_gap = 0.0
        x = np.array(
            [
                [m.add_var(binary=True, obj=costs.assign_cost(pt.id, b.id) - ci * mean_p[i])
                 for b in blocks]
                for i, pt in enumerate(patients)
            ]
        )
        xd = np.array([m.add_var(binary=True, obj=costs.postpone_cost(pt.id)) for pt in patients])
        z = np.array([m.add_var(lb=0.0, obj=1.0) for _ in blocks])
        for i in range(n):
            cols = list(x[i]) + [xd[i]]
            m.add_constr(cols, np.ones(len(cols)), solver.EQ, 1.0)
        for bi, b in enumerate(blocks):
            for cut in cuts[b.id]:
                cols = [z[bi]] + list(x[:, bi])
                coefs = [1.0] + list(-cut.coefficients)
                m.add_constr(cols, coefs, solver.GE, cut.constant)
        res = solver.solve(m)
        if not res.ok:
            raise PlannerError(f"Benders master for {code}: {res.status} {res.message}")
        xv = res.x[x] > 0.5
        zv = res.x[z]
        return xv, zv, float(res.objective)

    def first_stage_value(xv: np.ndarray) -> float:
        value = 0.0
        for i, pt in enumerate(patients):
            assigned = np.flatnonzero(xv[i])
            if assigned.size:
                b = blocks[assigned[0]]
                value += costs.assign_cost(pt.id, b.id) - ci * mean_p[i]
            else:
                value += costs.postpone_cost(pt.id)
        return value

    def subproblem(xv: np.ndarray, bi: int) -> tuple[float, np.ndarray, float]:
        active = xv[:, bi].astype(float)
        if not active.any():
            return 0.0, np.zeros(n), 0.0
        return stage2.solve_chain_lp_duals(
            p, active, blocks[bi].regular_time, co, cw, ci, big_m=config.big_m
        )

    t_start = time.perf_counter()
    ub = math.inf
    lb = 0.0
    incumbent: np.ndarray | None = None
    iterations = 0
    while True:
        iterations += 1
        xv, zv, master_obj = solve_master()
        lb = master_obj
        trace["lb"].append(lb)
        psi_total = 0.0
        added = 0
        for bi, b in enumerate(blocks):
            psi, coefficients, constant = subproblem(xv, bi)
            psi_total += psi
            if psi > zv[bi] + 1e-7:
                members = tuple(int(i) for i in np.flatnonzero(xv[:, bi]))
                cut = BendersCut(b.id, coefficients, constant, psi, members)
                cuts[b.id].append(cut)
                trace["cuts"].append(cut)
                added += 1
        candidate = first_stage_value(xv) + psi_total
        if candidate < ub - 1e-12:
            ub = candidate
            incumbent = xv
        trace["ub"].append(ub)
        gap = (ub - lb) / ub if ub > 1e-12 else max(ub - lb, 0.0)
        if gap <= config.benders_tol or added == 0:
            break
        if time.perf_counter() - t_start > config.saa_time_limit:
            log.warning("Benders for %s hit the time limit at gap %.3g", code, gap)
            break

    assert incumbent is not None
    assignment: dict[int, str | None] = {}
    for i, pt in enumerate(patients):
        assigned = np.flatnonzero(incumbent[i])
        assignment[pt.id] = blocks[assigned[0]].id if assigned.size else None
    gap = (ub - lb) / ub if ub > 1e-12 else 0.0
    trace["iterations"] = iterations
    return assignment, ub, max(gap, 0.0), trace


def plan_benders(instance: Instance, config: PlannerConfig | None = None) -> PlanResult:
    """Cutting-plane planner (no emergencies), solved per specialty; tentative
    times come from a final second-stage pass on the training scenarios."""
    config = config or PlannerConfig(method="benders")
    t0 = time.perf_counter()
    scenarios = _training_scenarios(instance, config)
    assignment: dict[int, str | None] = {}
    objective = 0.0
    gap = 0.0
    per_specialty: dict[str, dict[str, float]] = {}
    traces: dict[str, dict[str, Any]] = {}
    for code in instance.specialties:
        asg, obj, g, trace = _benders_specialty(instance, code, scenarios, config)
        assignment.update(asg)
        objective += obj
        gap = max(gap, g)
        if asg:
            per_specialty[code] = {"objective": obj, "gap": g}
            traces[code] = trace
    tentative, _ = _tentative_pass(instance, assignment, scenarios, _workers(config))
    report = PlannerReport(
        method="benders", objective=objective, gap=gap,
        wall_time=time.perf_counter() - t0, per_specialty=per_specialty,
        extra={"traces": traces},
    )
    return PlanResult(Plan(assignment, tentative), report)


# -- dispatch --------------------------------------------------------------------

def plan(
    instance: Instance,
    config: PlannerConfig,
    surrogates: dict[str, SurrogateModel] | None = None,
) -> PlanResult:
    if config.method == "smb2ss":
        if surrogates is None:
            raise PlannerError("smb2ss requires surrogate models")
        return plan_smb2ss(instance, surrogates, config)
    if config.method == "det":
        return plan_deterministic(instance, config)
    if config.method == "firstfit":
        return plan_firstfit(instance, config)
    if config.method == "saa":
        return plan_saa(instance, config)
    if config.method == "benders":
        return plan_benders(instance, config)
    raise PlannerError(f"unknown planning method {config.method!r}")
