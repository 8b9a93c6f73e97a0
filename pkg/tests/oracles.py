"""Independent scoring oracles used by the planner and acceptance tests.

These deliberately avoid the planners' model-building code paths: every
candidate assignment is scored by solving the per-block second-stage LP (or
by direct surrogate evaluation) and enumerating exhaustively.
"""

from __future__ import annotations

import itertools

import numpy as np

from orplan import stage2
from orplan.model import Instance, Scenario


def enumerate_second_stage_optimum(
    instance: Instance, scenarios: list[Scenario]
) -> tuple[float, dict[int, str | None]]:
    """Brute-force optimum of assignment cost + exact sampled second-stage
    cost over all patient-to-block assignments (single specialty)."""
    co, cw, ci = instance.costs.overtime, instance.costs.waiting, instance.costs.idle
    patients = stage2.svf_order(instance.patients)
    blocks = instance.blocks
    n = len(patients)
    durations = np.array(
        [[sc.elective_durations[p.id] for sc in scenarios] for p in patients]
    )

    phi_cache: dict[tuple[int, int], float] = {}

    def phi(block_index: int, mask: int) -> float:
        key = (block_index, mask)
        if key not in phi_cache:
            rows = [i for i in range(n) if mask >> i & 1]
            problem = stage2.BlockProblem(
                durations[rows], blocks[block_index].regular_time, co, cw, ci
            )
            phi_cache[key] = stage2.solve_block_lp(problem).cost
        return phi_cache[key]

    best = float("inf")
    best_assignment: dict[int, str | None] = {}
    for choice in itertools.product(range(len(blocks) + 1), repeat=n):
        cost = 0.0
        masks = [0] * len(blocks)
        for i, c in enumerate(choice):
            if c == len(blocks):
                cost += instance.costs.postpone_cost(patients[i].id)
            else:
                cost += instance.costs.assign_cost(patients[i].id, blocks[c].id)
                masks[c] |= 1 << i
        for bi in range(len(blocks)):
            cost += phi(bi, masks[bi])
        if cost < best - 1e-12:
            best = cost
            best_assignment = {
                patients[i].id: (None if c == len(blocks) else blocks[c].id)
                for i, c in enumerate(choice)
            }
    return best, best_assignment


def enumerate_surrogate_optimum(instance: Instance, surrogate) -> float:
    """Brute-force optimum of assignment cost + clamped surrogate cost of each
    block's expected load (single specialty)."""
    patients = instance.patients
    blocks = instance.blocks
    expected = [p.expected_duration() for p in patients]
    best = float("inf")
    for choice in itertools.product(range(len(blocks) + 1), repeat=len(patients)):
        cost = 0.0
        loads = [0.0] * len(blocks)
        for i, c in enumerate(choice):
            if c == len(blocks):
                cost += instance.costs.postpone_cost(patients[i].id)
            else:
                cost += instance.costs.assign_cost(patients[i].id, blocks[c].id)
                loads[c] += expected[i]
        for bi, b in enumerate(blocks):
            cost += max(surrogate.evaluate(loads[bi]), 0.0)
        if cost < best:
            best = cost
    return best
