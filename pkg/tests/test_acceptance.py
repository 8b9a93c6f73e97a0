"""Acceptance suite.

One test per acceptance criterion, each printing a PASS/FAIL line (visible
with ``pytest -s`` or in failure output).  Surrogate caches are built once
into a repo-local cache directory so repeated runs skip the preprocessing.
"""

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from orplan import evalmc, instgen, planners, simpolicy, stage2, surrogate
from orplan.instgen import COST_STRUCTURES, SPECIALTY_MARGINALS, GenConfig
from orplan.model import Plan, Scenario, Specialty, lognormal_variance
from orplan.planners import PlannerConfig
from orplan.simpolicy import PolicyParams

from .conftest import (
    WORKERS,
    acceptance_surrogates,
    all_specialties,
    make_single_specialty_instance,
)
from .oracles import enumerate_second_stage_optimum, enumerate_surrogate_optimum


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


_specialties = all_specialties


@pytest.fixture(scope="module")
def cs3_surrogates():
    return acceptance_surrogates("cs3")


@pytest.fixture(scope="module")
def cs6_surrogates():
    return acceptance_surrogates("cs6")


def _tiny_instances(count=20):
    instances = []
    rng = np.random.default_rng(20_240_001)
    for trial in range(count):
        n = int(rng.integers(4, 9))  # <= 8 patients
        instances.append(
            make_single_specialty_instance(
                n, 2, seed=1000 + trial, cost_structure=("cs2", "cs5", "cs6")[trial % 3]
            )
        )
    return instances


def test_oracle_equivalence_tiny_instances():
    """plan_saa, plan_benders and exhaustive enumeration agree within 1e-4."""
    t0 = time.time()

    def run_case(item):
        idx, inst = item
        config = PlannerConfig(scenario_count=10, scenario_seed=500 + idx,
                               mip_gap=0.0, benders_tol=1e-6)
        scenarios = instgen.sample_scenarios(inst, 10, 500 + idx)
        best, _ = enumerate_second_stage_optimum(inst, scenarios)
        saa = planners.plan_saa(inst, config).report.objective
        benders = planners.plan_benders(inst, config).report.objective
        return idx, best, saa, benders

    with ThreadPoolExecutor(max_workers=WORKERS) as pool:
        results = list(pool.map(run_case, enumerate(_tiny_instances())))
    worst = 0.0
    for idx, best, saa, benders in results:
        worst = max(worst, abs(saa - best), abs(benders - best))
        assert saa == pytest.approx(best, abs=1e-4), f"instance {idx}: SAA {saa} vs {best}"
        assert benders == pytest.approx(best, abs=1e-4), \
            f"instance {idx}: Benders {benders} vs {best}"
    elapsed = time.time() - t0
    ok = elapsed < 300
    _report("oracle-equivalence", ok,
            f"20 instances, max |dev| {worst:.2e}, {elapsed:.0f}s")
    assert ok, f"runtime {elapsed:.0f}s exceeds 5 minutes"


def test_smb2ss_matches_brute_force(cs3_surrogates):
    """Surrogate MIP equals enumeration scored by c-cost + clamped surrogate."""
    t0 = time.time()
    worst = 0.0
    for idx, inst in enumerate(_tiny_instances()):
        config = PlannerConfig(scenario_count=10, scenario_seed=700 + idx, mip_gap=0.0)
        result = planners.plan_smb2ss(inst, cs3_surrogates, config)
        best = enumerate_surrogate_optimum(inst, cs3_surrogates["CARD"])
        worst = max(worst, abs(result.report.objective - best))
        assert result.report.objective == pytest.approx(best, abs=1e-5), f"instance {idx}"
    elapsed = time.time() - t0
    ok = elapsed < 60
    _report("smb2ss-vs-brute-force", ok, f"max |dev| {worst:.2e}, {elapsed:.0f}s")
    assert ok, f"runtime {elapsed:.0f}s exceeds 1 minute"


def _draw_block_durations(spec, rng, k, max_patients=5, load_span=(300.0, 550.0)):
    target = rng.uniform(*load_span)
    models = []
    expected = 0.0
    while expected <= target and len(models) < max_patients:
        delta = instgen.draw_delta(rng)
        mu, sigma = instgen.derive_patient_lognormal(spec, delta, rng)
        models.append((mu, sigma))
        expected += math.exp(mu + sigma * sigma / 2.0)
    order = np.argsort([lognormal_variance(mu, s) for mu, s in models], kind="stable")
    mus = np.array([models[i][0] for i in order])
    sigmas = np.array([models[i][1] for i in order])
    return rng.lognormal(mus[:, None], sigmas[:, None], size=(len(models), k))


def test_svf_near_optimality():
    """SVF vs exhaustive ordering: mean gap <= 1%, optimal in >= 40% per specialty."""
    t0 = time.time()
    co, cw, ci = COST_STRUCTURES["cs5"]
    k = 100
    summary = {}
    for code, spec in _specialties().items():
        rng = np.random.default_rng([77, sum(map(ord, code))])
        draws = [_draw_block_durations(spec, rng, k) for _ in range(100)]

        def solve_pair(durations):
            problem = stage2.BlockProblem(durations, 480.0, co, cw, ci)
            svf_cost = stage2.solve_block_lp(problem).cost
            _, best_cost = stage2.best_order_oracle(problem)
            return svf_cost, best_cost

        with ThreadPoolExecutor(max_workers=WORKERS) as pool:
            results = list(pool.map(solve_pair, draws))
        gaps = []
        optimal = 0
        for svf_cost, best_cost in results:
            gap = (svf_cost - best_cost) / max(best_cost, 1e-9)
            gaps.append(max(gap, 0.0))
            if svf_cost <= best_cost * (1.0 + 1e-6):
                optimal += 1
        mean_gap = float(np.mean(gaps))
        summary[code] = (mean_gap, optimal)
        assert mean_gap <= 0.01, f"{code}: mean SVF gap {mean_gap:.4f} > 1%"
        assert optimal >= 40, f"{code}: SVF optimal only {optimal}/100"
    elapsed = time.time() - t0
    ok = elapsed < 900
    detail = "; ".join(f"{c}: gap {g:.2e}, opt {o}%" for c, (g, o) in summary.items())
    _report("svf-near-optimality", ok, f"{detail}; {elapsed:.0f}s")
    assert ok, f"runtime {elapsed:.0f}s exceeds 15 minutes"


def test_dummy_emergency_durations_monte_carlo():
    """Reserved-slot durations match Monte Carlo Poisson tails within 0.5% of m_e."""
    rng = np.random.default_rng(4242)
    worst = 0.0
    for lam in (1.0, 2.0, 3.0):
        draws = rng.poisson(lam, size=1_000_000)
        values = planners.dummy_emergency_durations(lam, 90.0, 10)
        for j, l_j in enumerate(values, start=1):
            tail_hat = float((draws >= j).mean())
            dev = abs(l_j - 90.0 * tail_hat) / 90.0
            worst = max(worst, dev)
            assert dev <= 0.005, f"lambda={lam}, j={j}: deviation {dev:.4f}"
    _report("dummy-emergency-durations", True, f"max deviation {worst:.2e} (of m_e)")


def test_moment_matching_marginals():
    """Pooled generated durations reproduce the marginal mean/sd within 2%."""
    details = []
    for code, spec in _specialties().items():
        rng = np.random.default_rng([9000, sum(map(ord, code))])
        draws = instgen.sample_marginal_durations(spec, 100_000, rng)
        mean_err = abs(draws.mean() - spec.marginal_mean) / spec.marginal_mean
        sd = math.sqrt(spec.marginal_var)
        sd_err = abs(draws.std() - sd) / sd
        details.append(f"{code}: mean {mean_err:.3%}, sd {sd_err:.3%}")
        assert mean_err <= 0.02, f"{code}: mean off by {mean_err:.3%}"
        assert sd_err <= 0.02, f"{code}: sd off by {sd_err:.3%}"
    _report("moment-matching", True, "; ".join(details))


def test_simulator_equals_recursion():
    """Per-block (waiting, idle, overtime) of the simulator match the
    closed-form recursion bit-for-bit on 1000 migration-free scenarios."""
    rng = np.random.default_rng(31337)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        inst = make_single_specialty_instance(
            n, 1, seed=int(rng.integers(1, 10_000)), cost_structure="cs6"
        )
        ordered = stage2.svf_order(inst.patients)
        gaps = rng.uniform(20.0, 140.0, size=n)
        tentative = np.concatenate([[0.0], np.cumsum(gaps[:-1])])
        plan = Plan(
            {p.id: "b0" for p in ordered},
            {p.id: float(t) for p, t in zip(ordered, tentative)},
        )
        durations = rng.lognormal(4.4, 0.4, size=n)
        scenario = Scenario(
            {p.id: float(d) for p, d in zip(ordered, durations)},
            {0: []},
        )
        outcome = simpolicy.simulate(inst, plan, scenario, PolicyParams(delta=1000.0))
        assert all(m == 0 for m in outcome.migrations.values())
        oracle = stage2.realized_block_costs(tentative, durations, 480.0)
        c = outcome.cost_breakdown
        for got, want in ((c.waiting, oracle.waiting), (c.idle, oracle.idle),
                          (c.overtime, oracle.overtime)):
            worst = max(worst, abs(got - want))
            assert abs(got - want) <= 1e-9
        assert abs(outcome.load["b0"] - oracle.load) <= 1e-9
    _report("simulator-equals-recursion", True, f"max |dev| {worst:.1e} over 1000 blocks")


def _planner_ranking_case(seed, rate, n_e, surrogates):
    slopes = surrogate.rightmost_slopes(surrogates)
    config = GenConfig(seed=seed, n_patients=70, rate=rate,
                       flowtime_unit="day", cost_structure="cs3")
    inst = instgen.generate_instance(config, slopes)
    scenarios = evalmc.validation_scenarios(inst, 450)
    params = PolicyParams(delta=120.0, alpha=0.7)
    smb = planners.plan_smb2ss(inst, surrogates, PlannerConfig(n_e=n_e))
    det = planners.plan_deterministic(inst, PlannerConfig())
    smb_total = evalmc.evaluate_plan(inst, smb.plan, scenarios, params).mean_total
    det_total = evalmc.evaluate_plan(inst, det.plan, scenarios, params).mean_total
    return smb_total, det_total


def test_planner_ranking(cs3_surrogates):
    """Surrogate planner beats the deterministic planner on >= 7/10 seeds with
    the required mean improvement, with and without emergencies."""
    t0 = time.time()
    seeds = range(1, 11)
    for rate, n_e, min_improvement, label in ((0.0, 0, 0.05, "lambda=0"),
                                              (3.0, 5, 0.08, "lambda=3")):
        wins = 0
        improvements = []
        for seed in seeds:
            smb, det = _planner_ranking_case(seed, rate, n_e, cs3_surrogates)
            if smb < det:
                wins += 1
            improvements.append((det - smb) / det)
        mean_improvement = float(np.mean(improvements))
        detail = (f"{label}: wins {wins}/10, mean improvement "
                  f"{mean_improvement:.1%} (need >= {min_improvement:.0%})")
        ok = wins >= 7 and mean_improvement >= min_improvement
        _report(f"planner-ranking {label}", ok, detail)
        assert wins >= 7, detail
        assert mean_improvement >= min_improvement, detail
    elapsed = time.time() - t0
    assert elapsed < 1800, f"runtime {elapsed:.0f}s exceeds 30 minutes"
    _report("planner-ranking runtime", True, f"{elapsed:.0f}s")


def test_delta_sweep(cs6_surrogates):
    """Lower cancellation threshold trades second-stage cost for migrations;
    delta=1000 never migrates."""
    slopes = surrogate.rightmost_slopes(cs6_surrogates)
    stats = {60.0: {"second": [], "migrations": []},
             1000.0: {"second": [], "migrations": []}}
    for seed in range(1, 6):
        config = GenConfig(seed=seed, n_patients=70, rate=3.0,
                           flowtime_unit="day", cost_structure="cs6")
        inst = instgen.generate_instance(config, slopes)
        plan = planners.plan_smb2ss(inst, cs6_surrogates, PlannerConfig(n_e=5)).plan
        scenarios = evalmc.validation_scenarios(inst, 200)
        for delta in (60.0, 1000.0):
            report = evalmc.evaluate_plan(
                inst, plan, scenarios, PolicyParams(delta=delta, alpha=0.7)
            )
            second = report.mean.waiting + report.mean.idle + report.mean.overtime
            stats[delta]["second"].append(second)
            stats[delta]["migrations"].append(float(np.mean(report.migrations_per_scenario)))
            if delta == 1000.0:
                assert all(m == 0 for m in report.migrations_per_scenario), \
                    f"seed {seed}: migrations at delta=1000"
    second_60 = float(np.mean(stats[60.0]["second"]))
    second_1000 = float(np.mean(stats[1000.0]["second"]))
    mig_60 = float(np.mean(stats[60.0]["migrations"]))
    mig_1000 = float(np.mean(stats[1000.0]["migrations"]))
    detail = (f"second-stage {second_60:.1f} (d=60) vs {second_1000:.1f} (d=1000); "
              f"migrations {mig_60:.2f} vs {mig_1000:.2f}")
    ok = second_60 <= second_1000 and mig_60 >= mig_1000
    _report("delta-sweep", ok, detail)
    assert second_60 <= second_1000, detail
    assert mig_60 >= mig_1000, detail


def test_k_sensitivity_curve():
    """Tentative-time quality loss vs the K=10000 reference is nonincreasing
    in K and at most 1% at K=450."""
    med = _specialties()["MED"]
    rows = evalmc.k_sensitivity(med, [10, 50, 150, 450], reference_k=10_000,
                                n_blocks=10, patients_per_block=6, seed=60_601)
    devs = [r["deviation"] for r in rows]
    detail = ", ".join(f"K={int(r['K'])}: {r['deviation']:.3%}" for r in rows)
    ok = all(b <= a + 1e-12 for a, b in zip(devs, devs[1:])) and devs[-1] <= 0.01
    _report("k-sensitivity", ok, detail)
    assert all(b <= a + 1e-12 for a, b in zip(devs, devs[1:])), detail
    assert devs[-1] <= 0.01, detail


def test_scalability(cs6_surrogates):
    """Full-size planning (n=200, all blocks, reserved emergencies) finishes
    within 120 seconds end to end with cached surrogates."""
    slopes = surrogate.rightmost_slopes(cs6_surrogates)
    config = GenConfig(seed=7, n_patients=200, rate=3.0,
                       flowtime_unit="day", cost_structure="cs6")
    inst = instgen.generate_instance(config, slopes)
    t0 = time.time()
    result = planners.plan_smb2ss(
        inst, cs6_surrogates, PlannerConfig(n_e=8, mip_gap=0.005)
    )
    elapsed = time.time() - t0
    scheduled = sum(1 for b in result.plan.assignment.values() if b is not None)
    detail = (f"{elapsed:.1f}s end-to-end, gap {result.report.gap:.4f}, "
              f"{scheduled}/200 scheduled")
    ok = elapsed < 120.0
    _report("scalability", ok, detail)
    assert ok, detail
    result.plan.validate(inst)


def test_benders_mechanics():
    """Bound monotonicity and cut audit on fresh tiny instances."""
    rng = np.random.default_rng(5)
    checked_cuts = 0
    for trial in range(3):
        inst = make_single_specialty_instance(
            5, 2, seed=4000 + trial, cost_structure=("cs2", "cs5", "cs6")[trial]
        )
        config = PlannerConfig(scenario_count=10, scenario_seed=40 + trial,
                               mip_gap=0.0, benders_tol=1e-6)
        result = planners.plan_benders(inst, config)
        trace = result.report.extra["traces"]["CARD"]
        lbs, ubs = trace["lb"], trace["ub"]
        assert all(b >= a - 1e-9 for a, b in zip(lbs, lbs[1:])), "LB not monotone"
        assert all(u >= l - 1e-9 for l, u in zip(lbs, ubs)), "UB < LB"
        scenarios = instgen.sample_scenarios(inst, 10, 40 + trial)
        patients = stage2.svf_order(inst.patients)
        durations = np.array(
            [[sc.elective_durations[p.id] for sc in scenarios] for p in patients]
        )
        co, cw, ci = inst.costs.overtime, inst.costs.waiting, inst.costs.idle
        for cut in trace["cuts"]:
            block = inst.block(cut.block)
            lhs = sum(cut.coefficients[i] for i in cut.assignment_at_generation)
            assert lhs + cut.constant == pytest.approx(
                cut.value_at_generation, abs=1e-6
            ), "cut not tight at generator"
            for _ in range(20):
                rows = np.flatnonzero(rng.integers(0, 2, len(patients)))
                value = sum(cut.coefficients[i] for i in rows) + cut.constant
                if rows.size == 0:
                    psi = 0.0
                else:
                    psi, _, _ = stage2.solve_block_lp_duals(stage2.BlockProblem(
                        durations[rows], block.regular_time, co, cw, ci
                    ))
                assert value <= psi + 1e-6, "cut above the true block value"
            checked_cuts += 1
    _report("benders-mechanics", True,
            f"{checked_cuts} cuts audited on 3 instances, bounds monotone")
