"""Single-block second-stage machinery.

Given the patients assigned to one block (ordered by increasing duration
variance) and sampled duration scenarios, computes optimal tentative starting
times and the associated expected waiting + idle + overtime cost by solving a
scenario LP.  Also provides the closed-form per-scenario cost recursion, the
exhaustive ordering oracle, and the dual solve used by Benders cuts.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import solver
from .model import ElectivePatient, Scenario

__all__ = [
    "PLANNING_K",
    "PREPROCESS_K",
    "BlockProblem",
    "BlockSolution",
    "BlockCosts",
    "svf_order",
    "solve_block_lp",
    "solve_block_lp_duals",
    "solve_chain_lp_duals",
    "realized_block_costs",
    "scenario_average_cost",
    "best_order_oracle",
]

# Scenario counts: planning-time tentative LPs and surrogate preprocessing.
PLANNING_K = 450
PREPROCESS_K = 1000

# Exhaustive ordering search is refused beyond this block size.
MAX_ORACLE_PATIENTS = 7


@dataclass(frozen=True)
class BlockProblem:
    """Patient durations (rows follow the block's variance order) for K
    sampled scenarios, plus the block's regular time and cost rates."""

    durations: np.ndarray  # shape (n_patients, K)
    regular_time: float
    overtime_rate: float
    waiting_rate: float
    idle_rate: float
    patient_ids: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        d = np.asarray(self.durations, dtype=float)
        if d.ndim != 2:
            raise ValueError("durations must be a (n_patients, K) array")
        object.__setattr__(self, "durations", d)

    @property
    def n_patients(self) -> int:
        return self.durations.shape[0]

    @property
    def n_scenarios(self) -> int:
        return self.durations.shape[1]

    @classmethod
    def from_patients(
        cls,
        patients: list[ElectivePatient],
        scenarios: list[Scenario],
        regular_time: float,
        overtime_rate: float,
        waiting_rate: float,
        idle_rate: float,
    ) -> "BlockProblem":
        ordered = svf_order(patients)
        durations = np.array(
            [[sc.elective_durations[p.id] for sc in scenarios] for p in ordered]
        ).reshape(len(ordered), len(scenarios))
        return cls(
            durations=durations,
            regular_time=regular_time,
            overtime_rate=overtime_rate,
            waiting_rate=waiting_rate,
            idle_rate=idle_rate,
            patient_ids=tuple(p.id for p in ordered),
        )


@dataclass(frozen=True)
class BlockSolution:
    tentative: np.ndarray  # nondecreasing, one entry per patient in block order
    cost: float


@dataclass(frozen=True)
class BlockCosts:
    waiting: float
    idle: float
    overtime: float
    load: float


def svf_order(patients: list[ElectivePatient]) -> list[ElectivePatient]:
    """Shortest-variance-first: stable sort by duration variance, ties by id."""
    return sorted(patients, key=lambda p: (p.duration_variance(), p.id))


def _build_lp(problem: BlockProblem, load_coupled: bool) -> tuple[solver.LinearModel, dict]:
    """Assemble the scenario LP.

    Variable layout: t (n), s (n*K, patient-major), then O (K) and, when
    ``load_coupled``, L (K).  ``load_coupled`` keeps the per-scenario load as
    an explicit variable priced at the idle rate (the form whose duals feed
    Benders cuts); otherwise the load is substituted out and the idle term is
    measured net of total processing time.
    """
    p = problem.durations
    n, k = p.shape
    cw, ci, co = problem.waiting_rate, problem.idle_rate, problem.overtime_rate
    t_of = np.arange(n)
    s_of = lambda i: n + i * k + np.arange(k)  # noqa: E731

    m = solver.LinearModel("block-lp")
    m.add_vars(n, obj=-cw)                 # t_i
    m.add_vars(n * k, obj=cw / k)          # s_ik
    o_vars = m.add_vars(k, obj=co / k)     # O_k

    ks = np.arange(k)
    # s_ik >= t_i
    rows = np.repeat(np.arange(n * k), 2)
    cols = np.empty(2 * n * k, dtype=int)
    cols[0::2] = n + np.arange(n * k)
    cols[1::2] = np.repeat(np.arange(n), k)
    vals = np.tile([1.0, -1.0], n * k)
    m.add_constrs(rows, cols, vals, solver.GE, np.zeros(n * k))
    release_rows = np.arange(n * k)
    # s_ik >= s_{i-1,k} + p_{i-1,k}
    if n > 1:
        cnt = (n - 1) * k
        rows = np.repeat(np.arange(cnt), 2)
        cols = np.empty(2 * cnt, dtype=int)
        cols[0::2] = (n + k + np.arange(cnt))
        cols[1::2] = (n + np.arange(cnt))
        vals = np.tile([1.0, -1.0], cnt)
        prec_rows = m.add_constrs(rows, cols, vals, solver.GE, p[:-1, :].ravel())
    else:
        prec_rows = np.empty(0, dtype=int)

    if load_coupled:
        l_vars = m.add_vars(k, obj=ci / k)  # L_k
        # L_k >= s_{n-1,k} + p_{n-1,k}
        rows = np.repeat(np.arange(k), 2)
        cols = np.empty(2 * k, dtype=int)
        cols[0::2] = l_vars
        cols[1::2] = s_of(n - 1)
        load_rows = m.add_constrs(rows, cols, np.tile([1.0, -1.0], k), solver.GE, p[-1, :])
        # O_k >= L_k - T
        cols2 = np.empty(2 * k, dtype=int)
        cols2[0::2] = o_vars
        cols2[1::2] = l_vars
        over_rows = m.add_constrs(rows, cols2, np.tile([1.0, -1.0], k), solver.GE,
                                  np.full(k, -problem.regular_time))
    else:
        # L_k == s_{n-1,k} + p_{n-1,k} substituted into the objective and the
        # overtime row; the idle term nets out the total processing time.
        m.add_objective(s_of(n - 1), np.full(k, ci / k))
        m.obj_offset = ci * float(np.mean(p[-1, :] - p.sum(axis=0)))
        rows = np.repeat(np.arange(k), 2)
        cols = np.empty(2 * k, dtype=int)
        cols[0::2] = o_vars
        cols[1::2] = s_of(n - 1)
        over_rows = m.add_constrs(rows, cols, np.tile([1.0, -1.0], k), solver.GE,
                                  p[-1, :] - problem.regular_time)
        load_rows = np.empty(0, dtype=int)

    layout = {
        "n": n, "k": k, "t": t_of, "release_rows": release_rows,
        "prec_rows": prec_rows, "load_rows": load_rows, "over_rows": over_rows,
    }
    return m, layout


def solve_block_lp(problem: BlockProblem) -> BlockSolution:
    """Optimal tentative times and expected second-stage cost (Eq.-5 form).

    The returned tentative vector is monotonized (running maximum), which is
    always optimal: any later surgery starts no earlier than every preceding
    tentative time, so raising t to the running maximum changes no start time
    and can only reduce waiting.
    """
    if problem.n_patients == 0:
        return BlockSolution(np.empty(0), 0.0)
    if problem.n_patients == 1:
        # t = 0 is optimal: waiting is zero either way and any positive
        # tentative time only adds idle time and overtime
        over = np.maximum(problem.durations[0] - problem.regular_time, 0.0)
        idle_free_cost = problem.overtime_rate * float(over.mean())
        return BlockSolution(np.zeros(1), idle_free_cost)
    m, layout = _build_lp(problem, load_coupled=False)
    res = solver.solve(m)
    if res.status != "optimal":
        raise RuntimeError(f"second-stage LP failed: {res.status} {res.message}")
    t = np.maximum.accumulate(np.maximum(res.x[layout["t"]], 0.0))
    return BlockSolution(t, float(res.objective))


def solve_block_lp_duals(problem: BlockProblem) -> tuple[float, np.ndarray, np.ndarray]:
    """Solve the load-coupled variant and return (value, lam, alpha).

    ``lam[i, k]`` is the dual of the constraint carrying duration p_{i,k}
    (precedence rows for i < n-1, the load row for i = n-1) and ``alpha[k]``
    the dual of the overtime row; all are nonnegative, so
    value == sum(lam * durations) - T * sum(alpha).
    """
    if problem.n_patients == 0:
        return 0.0, np.empty((0, problem.n_scenarios)), np.zeros(problem.n_scenarios)
    m, layout = _build_lp(problem, load_coupled=True)
    res = solver.solve(m, method="highs")
    if res.status != "optimal":
        raise RuntimeError(f"second-stage dual LP failed: {res.status} {res.message}")
    n, k = layout["n"], layout["k"]
    lam = np.empty((n, k))
    if n > 1:
        lam[: n - 1] = res.duals[layout["prec_rows"]].reshape(n - 1, k)
    lam[n - 1] = res.duals[layout["load_rows"]]
    alpha = res.duals[layout["over_rows"]]
    return float(res.objective), np.maximum(lam, 0.0), np.maximum(alpha, 0.0)


def solve_chain_lp_duals(
    durations: np.ndarray,
    active: np.ndarray,
    regular_time: float,
    overtime_rate: float,
    waiting_rate: float,
    idle_rate: float,
    big_m: float = 1000.0,
) -> tuple[float, np.ndarray, float]:
    """Load-coupled second-stage value of one block as an affine function of
    the assignment vector.

    All candidate patients (rows of ``durations``, variance order) form one
    start-time chain; inactive patients contribute zero duration and their
    waiting is released through a big-M gate, so for a binary assignment the
    optimum equals the reduced block value.  Because the assignment enters
    only the right-hand sides, the dual solution certifies

        value(x) >= coefficients . x + constant   for every assignment x,

    with equality at ``active``.  Returns (value, coefficients, constant).
    """
    x = np.asarray(active, dtype=float)
    p = np.asarray(durations, dtype=float)
    n, k = p.shape
    if n == 0:
        return 0.0, np.empty(0), 0.0
    cw, ci, co = waiting_rate, idle_rate, overtime_rate

    m = solver.LinearModel("chain-lp")
    t_v = m.add_vars(n)
    s_v = m.add_vars(n * k).reshape(n, k)
    l_v = m.add_vars(k, obj=ci / k)
    o_v = m.add_vars(k, obj=co / k)
    d_v = m.add_vars(n * k, obj=cw / k).reshape(n, k)

    rows = np.repeat(np.arange(n * k), 2)
    cols = np.empty(2 * n * k, dtype=int)
    cols[0::2] = s_v.ravel()
    cols[1::2] = np.repeat(t_v, k)
    m.add_constrs(rows, cols, np.tile([1.0, -1.0], n * k), solver.GE, np.zeros(n * k))
    if n > 1:
        cnt = (n - 1) * k
        rows = np.repeat(np.arange(cnt), 2)
        cols = np.empty(2 * cnt, dtype=int)
        cols[0::2] = s_v[1:].ravel()
        cols[1::2] = s_v[:-1].ravel()
        prec_rows = m.add_constrs(rows, cols, np.tile([1.0, -1.0], cnt), solver.GE,
                                  (p[:-1] * x[:-1, None]).ravel())
    else:
        prec_rows = np.empty(0, dtype=int)
    rows = np.repeat(np.arange(k), 2)
    cols = np.empty(2 * k, dtype=int)
    cols[0::2] = l_v
    cols[1::2] = s_v[-1]
    load_rows = m.add_constrs(rows, cols, np.tile([1.0, -1.0], k), solver.GE, p[-1] * x[-1])
    cols = np.empty(2 * k, dtype=int)
    cols[0::2] = o_v
    cols[1::2] = l_v
    over_rows = m.add_constrs(rows, cols, np.tile([1.0, -1.0], k), solver.GE,
                              np.full(k, -regular_time))
    rows = np.repeat(np.arange(n * k), 3)
    cols = np.empty(3 * n * k, dtype=int)
    cols[0::3] = d_v.ravel()
    cols[1::3] = s_v.ravel()
    cols[2::3] = np.repeat(t_v, k)
    wait_rows = m.add_constrs(rows, cols, np.tile([1.0, -1.0, 1.0], n * k), solver.GE,
                              np.repeat(-big_m * (1.0 - x), k))

    res = solver.solve(m, method="highs")
    if res.status != "optimal":
        raise RuntimeError(f"chain LP failed: {res.status} {res.message}")
    lam = np.zeros((n, k))
    if n > 1:
        lam[:-1] = res.duals[prec_rows].reshape(n - 1, k)
    lam[-1] = res.duals[load_rows]
    lam = np.maximum(lam, 0.0)
    eta = np.maximum(res.duals[wait_rows].reshape(n, k), 0.0)
    alpha = np.maximum(res.duals[over_rows], 0.0)
    coefficients = (lam * p).sum(axis=1) + big_m * eta.sum(axis=1)
    constant = -regular_time * float(alpha.sum()) - big_m * float(eta.sum())
    return float(res.objective), coefficients, constant


def realized_block_costs(
    tentative: np.ndarray,
    durations: np.ndarray,
    regular_time: float,
    overtime_rate: float = 1.0,
    waiting_rate: float = 1.0,
    idle_rate: float = 1.0,
) -> BlockCosts:
    """Waiting/idle/overtime of one realized scenario under the start-time
    recursion s_i = max(t_i, s_{i-1} + p_{i-1})."""
    t = np.asarray(tentative, dtype=float)
    p = np.asarray(durations, dtype=float)
    if t.shape != p.shape:
        raise ValueError("tentative and durations must have equal length")
    if t.size == 0:
        return BlockCosts(0.0, 0.0, 0.0, 0.0)
    s = np.empty_like(t)
    s[0] = t[0]
    for i in range(1, t.size):
        s[i] = max(t[i], s[i - 1] + p[i - 1])
    load = s[-1] + p[-1]
    waiting = float(np.sum(s - t)) * waiting_rate
    idle = float(load - p.sum()) * idle_rate
    overtime = max(load - regular_time, 0.0) * overtime_rate
    return BlockCosts(waiting, idle, overtime, float(load))


def scenario_average_cost(
    tentative: np.ndarray,
    durations: np.ndarray,
    regular_time: float,
    overtime_rate: float,
    waiting_rate: float,
    idle_rate: float,
) -> float:
    """Mean recursion cost over the scenario columns of ``durations``."""
    t = np.asarray(tentative, dtype=float)
    p = np.asarray(durations, dtype=float)
    n, k = p.shape
    if n == 0:
        return 0.0
    s = np.empty_like(p)
    s[0] = t[0]
    for i in range(1, n):
        s[i] = np.maximum(t[i], s[i - 1] + p[i - 1])
    load = s[-1] + p[-1]
    waiting = (s - t[:, None]).sum(axis=0)
    idle = load - p.sum(axis=0)
    overtime = np.maximum(load - regular_time, 0.0)
    per_scenario = waiting_rate * waiting + idle_rate * idle + overtime_rate * overtime
    return float(per_scenario.mean())


def best_order_oracle(problem: BlockProblem) -> tuple[tuple[int, ...], float]:
    """Exhaustively solve the block LP for every patient permutation.

    Returns the best permutation (as indices into the problem's row order)
    and its cost.  Refused for more than MAX_ORACLE_PATIENTS patients.
    """
    n = problem.n_patients
    if n > MAX_ORACLE_PATIENTS:
        raise ValueError(
            f"ordering oracle limited to {MAX_ORACLE_PATIENTS} patients, got {n}"
        )
    if n == 0:
        return (), 0.0
    best_perm: tuple[int, ...] = tuple(range(n))
    best_cost = math.inf
    for perm in itertools.permutations(range(n)):
        permuted = BlockProblem(
            durations=problem.durations[list(perm), :],
            regular_time=problem.regular_time,
            overtime_rate=problem.overtime_rate,
            waiting_rate=problem.waiting_rate,
            idle_rate=problem.idle_rate,
        )
        cost = solve_block_lp(permuted).cost
        if cost < best_cost - 1e-12:
            best_cost = cost
            best_perm = perm
    return best_perm, best_cost
