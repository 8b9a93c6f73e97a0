import os

import numpy as np
import pytest

from orplan import instgen, surrogate
from orplan.model import (
    Block,
    CostParams,
    ElectivePatient,
    EmergencyParams,
    Instance,
    Specialty,
)

# Shared reduced-size surrogate cache for the suite (production preprocessing
# is N=1000 cloud points at K=1000 scenarios; see README).
ACCEPTANCE_CACHE_DIR = os.environ.get(
    "ORPLAN_TEST_CACHE", os.path.join(os.path.dirname(__file__), "_cache")
)
ACCEPTANCE_CLOUD_POINTS = 240
ACCEPTANCE_CLOUD_K = 240
WORKERS = max(1, min(4, os.cpu_count() or 1))


def all_specialties() -> dict[str, Specialty]:
    return {
        code: Specialty(code, mean, sd * sd)
        for code, (mean, sd) in instgen.SPECIALTY_MARGINALS.items()
    }


def acceptance_surrogates(cost_structure: str, pieces: int = 3):
    return surrogate.load_or_build(
        ACCEPTANCE_CACHE_DIR, all_specialties(),
        instgen.COST_STRUCTURES[cost_structure],
        n_points=ACCEPTANCE_CLOUD_POINTS, k_scenarios=ACCEPTANCE_CLOUD_K,
        workers=WORKERS, pieces=pieces,
    )


def make_single_specialty_instance(
    n_patients: int,
    n_blocks: int,
    seed: int,
    cost_structure: str = "cs5",
    rate: float = 0.0,
    regular_time: float = 480.0,
    specialty_code: str = "CARD",
) -> Instance:
    """Small single-specialty instance with flowtime-style costs."""
    mean, sd = instgen.SPECIALTY_MARGINALS[specialty_code]
    spec = Specialty(specialty_code, mean, sd * sd)
    rng = np.random.default_rng(seed)
    blocks = [
        Block(f"b{j}", specialty_code, day=j, regular_time=regular_time)
        for j in range(n_blocks)
    ]
    patients = []
    assign = {}
    w0 = 0.05
    for i in range(n_patients):
        delta = instgen.draw_delta(rng)
        mu, sigma = instgen.derive_patient_lognormal(spec, delta, rng)
        weight = float(rng.uniform(w0, 4 * w0))
        entry = float(rng.integers(1, 8))
        p = ElectivePatient(i, specialty_code, mu, sigma, entry, weight)
        patients.append(p)
        row = {b.id: instgen.scheduling_cost(weight, entry, float(b.day)) for b in blocks}
        row[None] = instgen.postpone_cost(row, 1.2, p.expected_duration())
        assign[i] = row
    co, cw, ci = instgen.COST_STRUCTURES[cost_structure]
    return Instance(
        specialties={specialty_code: spec},
        blocks=blocks,
        patients=patients,
        costs=CostParams(co, cw, ci, instgen.MIGRATION_COST, assign),
        emergencies=EmergencyParams(rate, 90.0, 70.0**2),
        horizon=list(range(max(n_blocks, 1))),
        meta={"seed": seed, "cost_structure": cost_structure},
    )


@pytest.fixture(scope="session")
def surrogate_cache_dir(tmp_path_factory):
    return str(tmp_path_factory.mktemp("surrogate-cache"))
