import math
from collections import Counter

import numpy as np
import pytest

from orplan import instgen
from orplan.instgen import GenConfig
from orplan.model import Specialty, lognormal_mean


def test_default_mss_totals():
    blocks = instgen.default_mss()
    assert len(blocks) == 32
    assert all(b.regular_time == 480.0 for b in blocks)
    per_day = Counter(b.day for b in blocks)
    assert per_day == {0: 7, 1: 6, 2: 8, 3: 5, 4: 6}
    per_specialty = Counter(b.specialty for b in blocks)
    assert per_specialty == {
        "CARD": 5, "GASTRO": 6, "GYN": 8, "MED": 1, "ORTH": 6, "URO": 6,
    }
    # spot checks against the published weekly schedule
    ids = {b.id for b in blocks}
    assert {"or1_mon", "or1_tue", "or1_wed"} <= ids
    assert "or1_thu" not in ids
    assert instgen.default_mss()[0].id == blocks[0].id  # deterministic order


def test_specialty_counts_match_published_sizes():
    assert instgen.specialty_counts(70) == {
        "CARD": 10, "GASTRO": 13, "GYN": 19, "MED": 3, "ORTH": 12, "URO": 13,
    }
    assert instgen.specialty_counts(100) == {
        "CARD": 14, "GASTRO": 18, "GYN": 28, "MED": 5, "ORTH": 17, "URO": 18,
    }
    assert instgen.specialty_counts(140) == {
        "CARD": 20, "GASTRO": 25, "GYN": 39, "MED": 7, "ORTH": 24, "URO": 25,
    }
    assert instgen.specialty_counts(200) == {
        "CARD": 28, "GASTRO": 36, "GYN": 56, "MED": 10, "ORTH": 34, "URO": 36,
    }


def test_derive_lognormal_frozen_values():
    rng = np.random.default_rng(0)
    uro = Specialty("URO", 72.0, 38.0**2)
    _, sigma = instgen.derive_patient_lognormal(uro, 1.0, rng)
    # sqrt(log(1444 / (4 * 72^2) + 1))
    assert sigma == pytest.approx(0.25946, abs=1e-4)

    card = Specialty("CARD", 99.0, 53.0**2)
    ratio = card.marginal_var / card.marginal_mean**2
    mu_p, sig_p = instgen._prior_params(ratio, 0.5, card.marginal_mean)
    assert mu_p == pytest.approx(4.46911, abs=1e-4)
    assert sig_p == pytest.approx(0.42747, abs=1e-4)


def test_derive_lognormal_zero_variance():
    rng = np.random.default_rng(0)
    flat = Specialty("FLAT", 90.0, 0.0)
    mu, sigma = instgen.derive_patient_lognormal(flat, 1.3, rng)
    assert sigma == 0.0
    assert mu == pytest.approx(math.log(90.0))


def test_marginal_moment_recovery_smoke():
    # pooled over fresh patients the empirical moments approach the marginals;
    # the tight 10^5-sample version runs in the acceptance suite
    rng = np.random.default_rng(123)
    spec = Specialty("CARD", 99.0, 53.0**2)
    draws = instgen.sample_marginal_durations(spec, 20_000, rng)
    assert draws.mean() == pytest.approx(99.0, rel=0.02)
    assert draws.std() == pytest.approx(53.0, rel=0.05)


def test_scheduling_cost_examples():
    assert instgen.scheduling_cost(1.0, 1.0, 0.0) == pytest.approx(1.0)
    assert instgen.scheduling_cost(2.0, 3.0, 4.0) == pytest.approx(98.0)


def test_cost_structures_table():
    assert instgen.COST_STRUCTURES["cs1"] == (1.0, 0.0, 0.0)
    assert instgen.COST_STRUCTURES["cs2"] == (1.0, 1.0, 0.0)
    assert instgen.COST_STRUCTURES["cs3"] == (1.0, 2.0, 2.0)
    assert instgen.COST_STRUCTURES["cs4"] == (1.0, 2.0 / 15.0, 2.0 / 3.0)
    assert instgen.COST_STRUCTURES["cs5"] == (1.0, 2.0 / 3.0, 2.0 / 3.0)
    assert instgen.COST_STRUCTURES["cs6"] == (1.0, 1.0, 1.0)
    assert instgen.MIGRATION_COST == 120.0


def test_postpone_cost_rules():
    assert instgen.postpone_cost({"a": 5.0, "b": 5.0}, 0.0, 100.0) == pytest.approx(5.0)
    assert instgen.postpone_cost({"a": 10.0, "b": 40.0}, 1.0, 100.0) == pytest.approx(75.0)
    # crossed bounds clamp to the upper bound
    assert instgen.postpone_cost({"a": 0.0, "b": 1000.0}, 0.1, 10.0) == pytest.approx(1.0)


def _slopes():
    return dict.fromkeys(instgen.SPECIALTY_MARGINALS, 1.2)


def test_generate_instance_structure():
    cfg = GenConfig(seed=7, n_patients=70, rate=2.0, flowtime_unit="day",
                    cost_structure="cs3")
    inst = instgen.generate_instance(cfg, _slopes())
    assert len(inst.patients) == 70
    assert len(inst.blocks) == 32
    counts = Counter(p.specialty for p in inst.patients)
    assert counts == instgen.specialty_counts(70)
    w0 = cfg.weight_scale
    for p in inst.patients:
        assert w0 <= p.weight <= 4.0 * w0
        assert p.entry_time in {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0}
        row = inst.costs.assign[p.id]
        real = {b: c for b, c in row.items() if b is not None}
        assert len(real) == len(inst.blocks_of_specialty(p.specialty))
        # postponement bound: at least as expensive as any block
        assert row[None] >= max(real.values()) - 1e-9
    assert inst.costs.overtime == 1.0 and inst.costs.waiting == 2.0 and inst.costs.idle == 2.0


def test_generate_instance_week_unit_flat_costs():
    cfg = GenConfig(seed=3, n_patients=30, flowtime_unit="week", cost_structure="cs2")
    inst = instgen.generate_instance(cfg, _slopes())
    for p in inst.patients:
        real = {c for b, c in inst.costs.assign[p.id].items() if b is not None}
        assert len(real) == 1  # no advantage to any weekday
        assert p.entry_time in {1.0, 2.0}
    assert cfg.weight_scale == 1.0


def test_same_seed_identical_outputs():
    cfg = GenConfig(seed=11, n_patients=25, rate=1.0)
    a = instgen.generate_instance(cfg, _slopes())
    b = instgen.generate_instance(cfg, _slopes())
    assert a.to_json() == b.to_json()
    sa = instgen.sample_scenarios(a, 10, seed=5)
    sb = instgen.sample_scenarios(b, 10, seed=5)
    assert [s.to_dict() for s in sa] == [s.to_dict() for s in sb]


def test_scenarios_zero_rate_no_emergencies():
    cfg = GenConfig(seed=2, n_patients=10, rate=0.0)
    inst = instgen.generate_instance(cfg, _slopes())
    for sc in instgen.sample_scenarios(inst, 20, seed=1):
        assert all(len(v) == 0 for v in sc.emergency_arrivals.values())
        assert all(d > 0 for d in sc.elective_durations.values())


def test_scenario_statistics():
    cfg = GenConfig(seed=4, n_patients=1, rate=1.0)
    inst = instgen.generate_instance(cfg, _slopes())
    scenarios = instgen.sample_scenarios(inst, 20_000, seed=9)
    counts = [len(cases) for s in scenarios for cases in s.emergency_arrivals.values()]
    assert np.mean(counts) == pytest.approx(1.0, abs=0.01)
    patient = inst.patients[0]
    durations = [s.elective_durations[patient.id] for s in scenarios]
    assert np.mean(durations) == pytest.approx(
        lognormal_mean(patient.mu, patient.sigma), rel=0.01
    )
    # emergency posteriors reproduce the declared marginals
    all_em = [c.duration for s in scenarios for v in s.emergency_arrivals.values() for c in v]
    assert np.mean(all_em) == pytest.approx(90.0, rel=0.02)
    assert np.std(all_em) == pytest.approx(70.0, rel=0.05)
