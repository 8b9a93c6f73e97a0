"""Online phase: discrete-event execution of a plan under one scenario.

Each day raises TENTATIVE events (a patient's tentative time is reached) and
AVAILABLE events (a block is free).  An available block starts its earliest
released patient if the block's estimated final load stays within the
overtime allowance, and otherwise migrates its latest-tentative patient to a
future block (or cancels it).  Idle gaps in front of the next tentative time
are filled with emergency surgeries when a scaled expected duration fits.
Load estimates replace unstarted surgeries by their expected duration,
ongoing ones by their conditional expected remaining time, and distribute
pending emergencies with a longest-processing-time-first pass.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Any

from scipy.special import ndtr

from . import model
from .model import (
    CostBreakdown,
    EmergencyCase,
    Instance,
    Plan,
    Scenario,
    SimulationOutcome,
    lognormal_mean,
)

__all__ = [
    "DAY_MINUTES",
    "TRACE_GRID_MINUTES",
    "PolicyParams",
    "SimState",
    "truncated_lognormal_mean",
    "estimate_expected_load",
    "reassign",
    "simulate",
]

DAY_MINUTES = 1440.0       # global-clock span of one day (trace timestamps)
TRACE_GRID_MINUTES = 5.0   # snapshot grid for the time-cursor view

_TENTATIVE, _AVAILABLE = 0, 1


@dataclass(frozen=True)
class PolicyParams:
    delta: float = 120.0  # start threshold: estimated load <= T + delta
    alpha: float = 0.7    # emergency fit factor on the expected duration

    def __post_init__(self) -> None:
        if self.delta <= 0 or self.alpha <= 0:
            raise ValueError("delta and alpha must be positive")


def truncated_lognormal_mean(mu: float, sigma: float, elapsed: float) -> float:
    """Expected remaining duration E[P - a | P > a] of LN(mu, sigma) after
    ``a = elapsed`` minutes; 0 when the conditioning event has no mass left."""
    if elapsed < 0:
        raise ValueError("elapsed time must be nonnegative")
    if elapsed == 0.0:
        return lognormal_mean(mu, sigma)
    if sigma == 0.0:
        return max(math.exp(mu) - elapsed, 0.0)
    z = (mu - math.log(elapsed)) / sigma
    tail = float(ndtr(z))
    if tail < 1e-300:
        return 0.0
    upper = float(ndtr(z + sigma))
    return max(lognormal_mean(mu, sigma) * upper / tail - elapsed, 0.0)


@dataclass
class _Ongoing:
    surgery_id: Any          # patient id (int) or emergency id (str)
    emergency: bool
    mu: float
    sigma: float
    start: float
    end: float


@dataclass
class _Emergency:
    id: str
    case: EmergencyCase
    expected: float


@dataclass
class SimState:
    """Mutable execution state; one instance per simulated scenario."""

    instance: Instance
    plan: Plan
    scenario: Scenario
    params: PolicyParams
    day: int = 0
    clock: float = 0.0
    current_block: dict[int, str | None] = field(default_factory=dict)
    current_tentative: dict[int, float] = field(default_factory=dict)
    pending: dict[str, set[int]] = field(default_factory=dict)
    released: set[int] = field(default_factory=set)
    pending_emergencies: list[_Emergency] = field(default_factory=list)
    ongoing: dict[str, _Ongoing | None] = field(default_factory=dict)
    start: dict[int, float] = field(default_factory=dict)
    migrations: dict[int, int] = field(default_factory=dict)
    load: dict[str, float] = field(default_factory=dict)
    emergency_ops: dict[str, dict[str, Any]] = field(default_factory=dict)

    def day_blocks(self) -> list:
        return self.instance.blocks_of_day(self.day)

    def expected_duration(self, patient_id: int) -> float:
        return self.instance.patient(patient_id).expected_duration()


def _remaining(state: SimState, op: _Ongoing, at: float) -> float:
    return truncated_lognormal_mean(op.mu, op.sigma, max(at - op.start, 0.0))


def _project_day(
    state: SimState, at: float, want_segments: bool = False
) -> tuple[dict[str, float], dict[str, list[dict[str, Any]]]]:
    """Expected completion per block of the current day at time ``at``.

    Ongoing surgeries continue for their conditional expected remaining time,
    pending electives are packed as early as possible in tentative order, and
    pending emergencies are placed longest-first on the least loaded block.
    """
    completions: dict[str, float] = {}
    segments: dict[str, list[dict[str, Any]]] = {}
    for block in state.day_blocks():
        clock = at
        segs: list[dict[str, Any]] = []
        op = state.ongoing.get(block.id)
        if op is not None:
            clock = at + _remaining(state, op, at)
            if want_segments:
                segs.append({
                    "id": op.surgery_id, "kind": "emergency" if op.emergency else "elective",
                    "start": op.start, "end": clock, "status": "ongoing",
                })
        for pid in sorted(state.pending.get(block.id, ()),
                          key=lambda i: (state.current_tentative[i], i)):
            begin = max(state.current_tentative[pid], clock)
            clock = begin + state.expected_duration(pid)
            if want_segments:
                segs.append({
                    "id": pid, "kind": "elective", "start": begin, "end": clock,
                    "status": "projected", "tentative": state.current_tentative[pid],
                })
        completions[block.id] = clock
        segments[block.id] = segs
    if completions:
        for em in sorted(state.pending_emergencies, key=lambda e: (-e.expected, e.id)):
            target = min(completions, key=lambda b: (completions[b], b))
            begin = completions[target]
            completions[target] = begin + em.expected
            if want_segments:
                segments[target].append({
                    "id": em.id, "kind": "emergency", "start": begin,
                    "end": completions[target], "status": "projected",
                })
    return completions, segments


def estimate_expected_load(state: SimState, block_id: str) -> float:
    """Conditional expected final load of one of today's blocks."""
    completions, _ = _project_day(state, state.clock)
    if block_id not in completions:
        raise ValueError(f"block {block_id} is not available today")
    return completions[block_id]


def reassign(state: SimState, patient_id: int) -> tuple[str | None, float | None]:
    """First-fit the patient into a future block without exceeding the
    regular time (expected durations); cancels when nothing fits."""
    expected = state.expected_duration(patient_id)
    specialty = state.instance.patient(patient_id).specialty
    old_block = state.current_block[patient_id]
    if old_block is not None:
        state.pending[old_block].discard(patient_id)
    state.released.discard(patient_id)
    for day in [d for d in state.instance.horizon if d > state.day]:
        for block in state.instance.blocks_of_day(day):
            if block.specialty != specialty:
                continue
            clock = 0.0
            for pid in sorted(state.pending.get(block.id, ()),
                              key=lambda i: (state.current_tentative[i], i)):
                clock = max(state.current_tentative[pid], clock) + state.expected_duration(pid)
            if clock + expected <= block.regular_time + 1e-9:
                state.pending.setdefault(block.id, set()).add(patient_id)
                state.current_block[patient_id] = block.id
                state.current_tentative[patient_id] = clock
                return block.id, clock
    state.current_block[patient_id] = None
    state.current_tentative.pop(patient_id, None)
    return None, None


def simulate(
    instance: Instance,
    plan: Plan,
    scenario: Scenario,
    params: PolicyParams | None = None,
    collect_trace: bool = False,
) -> SimulationOutcome | tuple[SimulationOutcome, dict[str, Any]]:
    """Execute the plan under one scenario; returns the outcome, and the
    event/snapshot trace as a second value when ``collect_trace`` is set."""
    params = params or PolicyParams()
    for i in plan.assignment:
        if i not in scenario.elective_durations:
            raise ValueError(f"scenario lacks a duration for patient {i}")
    state = SimState(instance, plan, scenario, params)
    state.current_block = dict(plan.assignment)
    state.current_tentative = dict(plan.tentative)
    state.migrations = {i: 0 for i in plan.assignment}
    for b in instance.blocks:
        state.pending[b.id] = set()
        state.ongoing[b.id] = None
    for i, b in plan.assignment.items():
        if b is not None:
            state.pending[b].add(i)

    events: list[dict[str, Any]] = []
    snapshots: list[dict[str, Any]] = []

    def log_event(kind: str, **payload: Any) -> None:
        if collect_trace:
            events.append({"time": state.day * DAY_MINUTES + state.clock,
                           "day": state.day, "kind": kind, **payload})

    total_emergencies = sum(len(v) for v in scenario.emergency_arrivals.values())
    max_events = 200 * (len(instance.patients) + total_emergencies + len(instance.blocks)) + 10_000
    processed = 0

    for day in instance.horizon:
        state.day = day
        state.clock = 0.0
        arrivals = scenario.emergency_arrivals.get(day, [])
        day_blocks = state.day_blocks()
        if arrivals and not day_blocks:
            raise ValueError(f"day {day}: emergencies arrived but no block is available")
        state.pending_emergencies = [
            _Emergency(f"e{day}_{j}", case, case.expected_duration())
            for j, case in enumerate(arrivals)
        ]
        counter = itertools.count()
        heap: list[tuple[float, int, Any, int, Any]] = []

        def push(when: float, kind: int, tiebreak: Any, payload: Any) -> None:
            heapq.heappush(heap, (when, kind, tiebreak, next(counter), payload))

        day_block_ids = {b.id for b in day_blocks}
        for b in day_blocks:
            for pid in state.pending[b.id]:
                push(state.current_tentative[pid], _TENTATIVE, pid, pid)
            push(0.0, _AVAILABLE, b.id, b.id)

        last_grid = -TRACE_GRID_MINUTES

        def take_snapshots(strictly_before: float) -> None:
            # grid point g shows the state after all events at times <= g
            nonlocal last_grid
            if not collect_trace:
                return
            g = last_grid + TRACE_GRID_MINUTES
            while g < strictly_before - 1e-9:
                completions, segs = _project_day(state, g, want_segments=True)
                snapshots.append({
                    "time": day * DAY_MINUTES + g, "day": day, "clock": g,
                    "blocks": segs, "estimated_load": completions,
                })
                last_grid = g
                g += TRACE_GRID_MINUTES

        while heap:
            when, kind, tiebreak, _, payload = heapq.heappop(heap)
            processed += 1
            if processed > max_events:
                raise RuntimeError("event budget exceeded; policy failed to make progress")
            take_snapshots(when)
            state.clock = when

            if kind == _TENTATIVE:
                pid = payload
                block_id = state.current_block.get(pid)
                if block_id not in day_block_ids or pid not in state.pending.get(block_id, ()):
                    continue  # migrated away; stale event
                if when + 1e-9 < state.current_tentative[pid]:
                    continue
                state.released.add(pid)
                log_event("released", patient=pid, block=block_id)
                if state.ongoing[block_id] is None:
                    push(state.clock, _AVAILABLE, block_id, block_id)
                continue

            block_id = payload
            op = state.ongoing[block_id]
            if op is not None:
                if op.end > when + 1e-9:
                    continue  # block still busy; stale event
                state.ongoing[block_id] = None
                log_event("complete", surgery=op.surgery_id, block=block_id,
                          emergency=op.emergency)
            pending_here = state.pending[block_id]
            released_here = [i for i in pending_here if i in state.released]
            if released_here:
                estimate = estimate_expected_load(state, block_id)
                block = instance.block(block_id)
                if estimate <= block.regular_time + params.delta:
                    pid = min(released_here, key=lambda i: (state.current_tentative[i], i))
                    duration = scenario.elective_durations[pid]
                    _start_surgery(state, block_id, pid, duration, emergency=False)
                    log_event("start", patient=pid, block=block_id,
                              duration=duration, tentative=state.current_tentative[pid])
                    push(state.clock + duration, _AVAILABLE, block_id, block_id)
                else:
                    victim = max(pending_here, key=lambda i: (state.current_tentative[i], i))
                    state.migrations[victim] += 1
                    new_block, new_t = reassign(state, victim)
                    if new_block is None:
                        log_event("canceled", patient=victim, from_block=block_id)
                    else:
                        log_event("rescheduled", patient=victim, from_block=block_id,
                                  to_block=new_block, tentative=new_t)
                    push(state.clock, _AVAILABLE, block_id, block_id)
                continue
            # no released elective: consider filling the idle gap with an emergency
            if state.pending_emergencies:
                if pending_here:
                    horizon = min(state.current_tentative[i] for i in pending_here)
                    slack = horizon - state.clock
                else:
                    slack = math.inf
                fitting = [e for e in state.pending_emergencies
                           if params.alpha * e.expected <= slack]
                if fitting:
                    em = max(fitting, key=lambda e: (e.expected, e.id))
                    state.pending_emergencies.remove(em)
                    _start_surgery(state, block_id, em, em.case.duration, emergency=True)
                    log_event("start_emergency", emergency=em.id, block=block_id,
                              duration=em.case.duration)
                    push(state.clock + em.case.duration, _AVAILABLE, block_id, block_id)
            # otherwise the block idles until the next event

        day_end = max([state.load.get(b.id, 0.0) for b in day_blocks] + [0.0])
        take_snapshots(day_end + 2 * TRACE_GRID_MINUTES)
        if state.pending_emergencies:
            raise RuntimeError(f"day {day}: emergencies left unoperated")
        leftovers = [i for b in day_blocks for i in state.pending[b.id]]
        if leftovers:
            raise RuntimeError(f"day {day}: pending electives left unoperated: {leftovers}")

    final_tentative = {
        i: state.current_tentative[i]
        for i, b in state.current_block.items()
        if b is not None
    }
    outcome = SimulationOutcome(
        final_block=dict(state.current_block),
        final_tentative=final_tentative,
        start=dict(state.start),
        migrations=dict(state.migrations),
        load=dict(state.load),
        cost_breakdown=CostBreakdown(0, 0, 0, 0, 0, 0),
        emergency_ops=dict(state.emergency_ops),
    )
    outcome = replace(outcome, cost_breakdown=model.cost_breakdown(instance, outcome, scenario))
    if collect_trace:
        trace = {"events": events, "snapshots": snapshots,
                 "params": {"delta": params.delta, "alpha": params.alpha}}
        return outcome, trace
    return outcome


def _start_surgery(state: SimState, block_id: str, who: Any, duration: float,
                   emergency: bool) -> None:
    end = state.clock + duration
    if emergency:
        em: _Emergency = who
        state.ongoing[block_id] = _Ongoing(em.id, True, em.case.mu, em.case.sigma,
                                           state.clock, end)
        state.emergency_ops[em.id] = {
            "block": block_id, "start": state.clock, "duration": duration,
        }
    else:
        pid: int = who
        patient = state.instance.patient(pid)
        state.ongoing[block_id] = _Ongoing(pid, False, patient.mu, patient.sigma,
                                           state.clock, end)
        state.pending[block_id].discard(pid)
        state.released.discard(pid)
        state.start[pid] = state.clock
    state.load[block_id] = max(state.load.get(block_id, 0.0), end)
