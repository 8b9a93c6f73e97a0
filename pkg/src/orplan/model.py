"""Core domain types for the surgery planning pipeline.

Blocks, elective patients, cost parameters, scenarios, plans and simulation
outcomes are plain immutable value objects with JSON (de)serialization.
The dummy destination for postponed patients is represented by ``None``
everywhere a block is expected; it never appears in ``Instance.blocks``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Any, Iterable

from scipy.special import ndtri

__all__ = [
    "DUMMY_KEY",
    "Specialty",
    "Block",
    "ElectivePatient",
    "CostParams",
    "EmergencyParams",
    "Instance",
    "EmergencyCase",
    "Scenario",
    "Plan",
    "CostBreakdown",
    "SimulationOutcome",
    "lognormal_mean",
    "lognormal_variance",
    "lognormal_quantile",
    "cost_breakdown",
]

# JSON object key standing in for the dummy block (JSON maps cannot use null keys).
DUMMY_KEY = "dummy"


def lognormal_mean(mu: float, sigma: float) -> float:
    """Mean of LN(mu, sigma): exp(mu + sigma^2 / 2)."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    return math.exp(mu + 0.5 * sigma * sigma)


def lognormal_variance(mu: float, sigma: float) -> float:
    """Variance of LN(mu, sigma): (exp(sigma^2) - 1) * exp(2 mu + sigma^2)."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    s2 = sigma * sigma
    return math.expm1(s2) * math.exp(2.0 * mu + s2)


def lognormal_quantile(mu: float, sigma: float, q: float) -> float:
    """q-quantile of LN(mu, sigma): exp(mu + sigma * Phi^-1(q)), 0 < q < 1."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q}")
    return math.exp(mu + sigma * float(ndtri(q)))


@dataclass(frozen=True)
class Specialty:
    """A surgical specialty with its marginal duration moments (minutes, minutes^2)."""

    id: str
    marginal_mean: float
    marginal_var: float

    def __post_init__(self) -> None:
        if self.marginal_mean <= 0:
            raise ValueError(f"{self.id}: marginal_mean must be positive")
        if self.marginal_var < 0:
            raise ValueError(f"{self.id}: marginal_var must be nonnegative")


@dataclass(frozen=True)
class Block:
    """One operating room on one day, reserved for a specialty, open for
    ``regular_time`` minutes of regular working time."""

    id: str
    specialty: str
    day: int
    regular_time: float

    def __post_init__(self) -> None:
        if self.regular_time <= 0:
            raise ValueError(f"block {self.id}: regular_time must be positive")


@dataclass(frozen=True)
class ElectivePatient:
    """An elective surgery with lognormal duration model LN(mu, sigma).

    ``entry_time`` is the time (in flowtime units) the patient has already
    spent waiting at the start of the horizon; ``weight`` its priority.
    """

    id: int
    specialty: str
    mu: float
    sigma: float
    entry_time: float = 0.0
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError(f"patient {self.id}: sigma must be nonnegative")
        if self.weight <= 0:
            raise ValueError(f"patient {self.id}: weight must be positive")

    def expected_duration(self) -> float:
        return lognormal_mean(self.mu, self.sigma)

    def duration_variance(self) -> float:
        return lognormal_variance(self.mu, self.sigma)

    def quantile_duration(self, q: float) -> float:
        return lognormal_quantile(self.mu, self.sigma, q)


@dataclass(frozen=True)
class CostParams:
    """Cost rates and the per-patient assignment cost table.

    ``assign[i]`` maps block id (or ``None`` for the dummy block) to the
    scheduling cost of operating patient ``i`` there.
    """

    overtime: float
    waiting: float
    idle: float
    migration: float
    assign: dict[int, dict[str | None, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("overtime", "waiting", "idle", "migration"):
            if getattr(self, name) < 0:
                raise ValueError(f"cost rate {name} must be nonnegative")

    def assign_cost(self, patient_id: int, block_id: str | None) -> float:
        return self.assign[patient_id][block_id]

    def postpone_cost(self, patient_id: int) -> float:
        return self.assign[patient_id][None]


@dataclass(frozen=True)
class EmergencyParams:
    """Poisson arrival rate per day and marginal duration moments of emergencies."""

    rate: float
    marginal_mean: float
    marginal_var: float
    max_per_day: int = 8

    def __post_init__(self) -> None:
        if self.rate < 0:
            raise ValueError("emergency rate must be nonnegative")
        if self.max_per_day < 0:
            raise ValueError("max_per_day must be nonnegative")
        if self.marginal_mean <= 0:
            raise ValueError("emergency marginal_mean must be positive")


@dataclass(frozen=True)
class Instance:
    """A full problem instance: specialties, the weekly block schedule,
    the elective patient pool, cost parameters and the emergency process."""

    specialties: dict[str, Specialty]
    blocks: list[Block]
    patients: list[ElectivePatient]
    costs: CostParams
    emergencies: EmergencyParams
    horizon: list[int]
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        days = set(self.horizon)
        for b in self.blocks:
            if b.day not in days:
                raise ValueError(f"block {b.id}: day {b.day} outside horizon")
            if b.specialty not in self.specialties:
                raise ValueError(f"block {b.id}: unknown specialty {b.specialty}")
        for p in self.patients:
            if p.specialty not in self.specialties:
                raise ValueError(f"patient {p.id}: unknown specialty {p.specialty}")

    # -- lookups -----------------------------------------------------------
    def block(self, block_id: str) -> Block:
        return self._block_index[block_id]

    def patient(self, patient_id: int) -> ElectivePatient:
        return self._patient_index[patient_id]

    def blocks_of_specialty(self, specialty: str) -> list[Block]:
        return [b for b in self.blocks if b.specialty == specialty]

    def blocks_of_day(self, day: int) -> list[Block]:
        return sorted((b for b in self.blocks if b.day == day), key=lambda b: b.id)

    def patients_of_specialty(self, specialty: str) -> list[ElectivePatient]:
        return [p for p in self.patients if p.specialty == specialty]

    @property
    def _block_index(self) -> dict[str, Block]:
        idx = self.__dict__.get("_block_idx")
        if idx is None:
            idx = {b.id: b for b in self.blocks}
            self.__dict__["_block_idx"] = idx
        return idx

    @property
    def _patient_index(self) -> dict[int, ElectivePatient]:
        idx = self.__dict__.get("_patient_idx")
        if idx is None:
            idx = {p.id: p for p in self.patients}
            self.__dict__["_patient_idx"] = idx
        return idx

    @property
    def regular_time(self) -> float:
        return self.blocks[0].regular_time if self.blocks else 480.0

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return {
            "specialties": [asdict(s) for s in self.specialties.values()],
            "blocks": [asdict(b) for b in self.blocks],
            "patients": [asdict(p) for p in self.patients],
            "costs": {
                "overtime": self.costs.overtime,
                "waiting": self.costs.waiting,
                "idle": self.costs.idle,
                "migration": self.costs.migration,
                "assign": {
                    str(i): {(DUMMY_KEY if b is None else b): c for b, c in row.items()}
                    for i, row in self.costs.assign.items()
                },
            },
            "emergencies": asdict(self.emergencies),
            "horizon": list(self.horizon),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Instance":
        costs = data["costs"]
        assign = {
            int(i): {(None if b == DUMMY_KEY else b): float(c) for b, c in row.items()}
            for i, row in costs["assign"].items()
        }
        return cls(
            specialties={s["id"]: Specialty(**s) for s in data["specialties"]},
            blocks=[Block(**b) for b in data["blocks"]],
            patients=[ElectivePatient(**p) for p in data["patients"]],
            costs=CostParams(
                overtime=costs["overtime"],
                waiting=costs["waiting"],
                idle=costs["idle"],
                migration=costs["migration"],
                assign=assign,
            ),
            emergencies=EmergencyParams(**data["emergencies"]),
            horizon=[int(d) for d in data["horizon"]],
            meta=data.get("meta", {}),
        )

    def to_json(self, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class EmergencyCase:
    """Posterior duration model and realized duration of one emergency arrival."""

    mu: float
    sigma: float
    duration: float

    def expected_duration(self) -> float:
        return lognormal_mean(self.mu, self.sigma)


@dataclass(frozen=True)
class Scenario:
    """One realization of the uncertainty: every elective duration plus the
    per-day emergency arrivals with their posterior models and durations."""

    elective_durations: dict[int, float]
    emergency_arrivals: dict[int, list[EmergencyCase]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "elective_durations": {str(i): d for i, d in self.elective_durations.items()},
            "emergency_arrivals": {
                str(d): [asdict(e) for e in cases]
                for d, cases in self.emergency_arrivals.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Scenario":
        return cls(
            elective_durations={int(i): float(v) for i, v in data["elective_durations"].items()},
            emergency_arrivals={
                int(d): [EmergencyCase(**e) for e in cases]
                for d, cases in data["emergency_arrivals"].items()
            },
        )


def scenarios_to_jsonl(scenarios: Iterable[Scenario]) -> str:
    return "\n".join(json.dumps(s.to_dict()) for s in scenarios) + "\n"


def scenarios_from_jsonl(text: str) -> list[Scenario]:
    return [Scenario.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


@dataclass(frozen=True)
class Plan:
    """Offline output: block assignment (``None`` = postponed) and tentative
    starting times, defined exactly for the scheduled patients."""

    assignment: dict[int, str | None]
    tentative: dict[int, float]

    def scheduled(self) -> list[int]:
        return [i for i, b in self.assignment.items() if b is not None]

    def block_patients(self, block_id: str) -> list[int]:
        return [i for i, b in self.assignment.items() if b == block_id]

    def validate(self, instance: Instance) -> None:
        """Raise if the plan violates specialty feasibility, the tentative-time
        domain, or the within-block variance ordering."""
        for i, b in self.assignment.items():
            patient = instance.patient(i)
            if b is not None and instance.block(b).specialty != patient.specialty:
                raise ValueError(f"patient {i} assigned outside specialty: {b}")
            if (b is not None) != (i in self.tentative):
                raise ValueError(f"patient {i}: tentative time must exist iff scheduled")
            if b is not None and self.tentative[i] < -1e-9:
                raise ValueError(f"patient {i}: negative tentative time")
        by_block: dict[str, list[int]] = {}
        for i, b in self.assignment.items():
            if b is not None:
                by_block.setdefault(b, []).append(i)
        for b, ids in by_block.items():
            ids.sort(key=lambda i: (instance.patient(i).duration_variance(), i))
            times = [self.tentative[i] for i in ids]
            for earlier, later in zip(times, times[1:]):
                if later < earlier - 1e-6:
                    raise ValueError(f"block {b}: tentative times not nondecreasing in variance order")

    def to_dict(self) -> dict[str, Any]:
        return {
            "assignment": {str(i): b for i, b in self.assignment.items()},
            "tentative": {str(i): t for i, t in self.tentative.items()},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Plan":
        return cls(
            assignment={int(i): b for i, b in data["assignment"].items()},
            tentative={int(i): float(t) for i, t in data["tentative"].items()},
        )

    def to_json(self, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "Plan":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class CostBreakdown:
    scheduling: float
    waiting: float
    idle: float
    overtime: float
    migration: float
    total: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CostBreakdown":
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass(frozen=True)
class SimulationOutcome:
    """Execution record of one scenario: final assignments, realized starts,
    migration counts, block loads, executed emergencies and the cost breakdown."""

    final_block: dict[int, str | None]
    final_tentative: dict[int, float]
    start: dict[int, float]
    migrations: dict[int, int]
    load: dict[str, float]
    cost_breakdown: CostBreakdown
    # executed emergencies: id -> (block, start, duration); ids look like "e{day}_{j}"
    emergency_ops: dict[str, dict[str, Any]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "final_block": {str(i): b for i, b in self.final_block.items()},
            "final_tentative": {str(i): t for i, t in self.final_tentative.items()},
            "start": {str(i): s for i, s in self.start.items()},
            "migrations": {str(i): m for i, m in self.migrations.items()},
            "load": dict(self.load),
            "cost_breakdown": self.cost_breakdown.to_dict(),
            "emergency_ops": self.emergency_ops,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SimulationOutcome":
        return cls(
            final_block={int(i): b for i, b in data["final_block"].items()},
            final_tentative={int(i): float(t) for i, t in data["final_tentative"].items()},
            start={int(i): float(s) for i, s in data["start"].items()},
            migrations={int(i): int(m) for i, m in data["migrations"].items()},
            load={str(b): float(v) for b, v in data["load"].items()},
            cost_breakdown=CostBreakdown.from_dict(data["cost_breakdown"]),
            emergency_ops=data.get("emergency_ops", {}),
        )


def cost_breakdown(instance: Instance, outcome: SimulationOutcome, scenario: Scenario) -> CostBreakdown:
    """Evaluate the total cost of an executed scenario.

    Scheduling, waiting and migration costs accrue for elective patients;
    idle and overtime are per-block and include emergency surgeries.
    """
    scheduling = sum(
        instance.costs.assign_cost(i, b) for i, b in outcome.final_block.items()
    )
    waiting = instance.costs.waiting * sum(
        outcome.start[i] - outcome.final_tentative[i]
        for i, b in outcome.final_block.items()
        if b is not None and i in outcome.start
    )
    processing: dict[str, float] = {b.id: 0.0 for b in instance.blocks}
    for i, b in outcome.final_block.items():
        if b is not None and i in outcome.start:
            processing[b] += scenario.elective_durations[i]
    for rec in outcome.emergency_ops.values():
        processing[rec["block"]] += rec["duration"]
    idle = instance.costs.idle * sum(
        outcome.load.get(b.id, 0.0) - processing[b.id] for b in instance.blocks
    )
    overtime = instance.costs.overtime * sum(
        max(outcome.load.get(b.id, 0.0) - b.regular_time, 0.0) for b in instance.blocks
    )
    migration = instance.costs.migration * sum(outcome.migrations.values())
    total = scheduling + waiting + idle + overtime + migration
    return CostBreakdown(scheduling, waiting, idle, overtime, migration, total)
