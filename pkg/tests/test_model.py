import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from orplan.model import (
    Block,
    CostParams,
    ElectivePatient,
    EmergencyParams,
    Instance,
    Plan,
    Specialty,
    lognormal_mean,
    lognormal_quantile,
    lognormal_variance,
)


def test_expected_duration_point_masses():
    assert lognormal_mean(0.0, 0.0) == pytest.approx(1.0)
    assert lognormal_mean(math.log(90.0), 0.0) == pytest.approx(90.0)


def test_expected_duration_closed_form_vs_sampling():
    # exp(4 + 0.5^2/2) = exp(4.125)
    expected = math.exp(4.125)
    assert lognormal_mean(4.0, 0.5) == pytest.approx(expected, rel=1e-12)
    rng = np.random.default_rng(0)
    draws = rng.lognormal(4.0, 0.5, size=1_000_000)
    assert draws.mean() == pytest.approx(expected, rel=5e-3)


def test_quantile_duration_examples():
    assert lognormal_quantile(math.log(90.0), 0.0, 0.7) == pytest.approx(90.0)
    assert lognormal_quantile(2.3, 0.9, 0.5) == pytest.approx(math.exp(2.3))
    # frozen from exp(4 + 0.5 * ndtri(0.7)) and checked against an empirical
    # quantile of 10^6 draws
    value = lognormal_quantile(4.0, 0.5, 0.7)
    assert value == pytest.approx(70.9659, abs=1e-3)
    rng = np.random.default_rng(1)
    draws = rng.lognormal(4.0, 0.5, size=1_000_000)
    assert np.quantile(draws, 0.7) == pytest.approx(value, rel=5e-3)


def test_quantile_domain_errors():
    with pytest.raises(ValueError):
        lognormal_quantile(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        lognormal_quantile(0.0, 1.0, 1.0)


@given(
    mu=st.floats(-2.0, 6.0),
    sigma=st.floats(0.0, 2.0),
    bump=st.floats(1e-3, 1.0),
)
def test_expected_duration_monotone(mu, sigma, bump):
    base = lognormal_mean(mu, sigma)
    assert lognormal_mean(mu + bump, sigma) > base
    assert lognormal_mean(mu, sigma + bump) > base


def _tiny_instance() -> Instance:
    spec = Specialty("CARD", 99.0, 53.0**2)
    blocks = [Block("b1", "CARD", 0, 480.0), Block("b2", "CARD", 1, 480.0)]
    patients = [
        ElectivePatient(0, "CARD", 4.0, 0.3, 1.0, 1.0),
        ElectivePatient(1, "CARD", 4.2, 0.2, 2.0, 1.0),
    ]
    assign = {
        0: {"b1": 1.0, "b2": 4.0, None: 10.0},
        1: {"b1": 2.0, "b2": 5.0, None: 12.0},
    }
    costs = CostParams(1.0, 1.0, 1.0, 120.0, assign)
    return Instance(
        specialties={"CARD": spec},
        blocks=blocks,
        patients=patients,
        costs=costs,
        emergencies=EmergencyParams(0.0, 90.0, 70.0**2),
        horizon=[0, 1],
    )


def test_instance_round_trip():
    inst = _tiny_instance()
    again = Instance.from_json(inst.to_json())
    assert again == inst
    assert again.costs.postpone_cost(0) == 10.0
    assert again.block("b1").specialty == "CARD"


def test_plan_validation():
    inst = _tiny_instance()
    ok = Plan(assignment={0: "b1", 1: None}, tentative={0: 0.0})
    ok.validate(inst)
    with pytest.raises(ValueError):
        Plan(assignment={0: "b1", 1: None}, tentative={}).validate(inst)
    with pytest.raises(ValueError):
        Plan(assignment={0: "b1"}, tentative={0: -5.0}).validate(inst)
    # patient 1 has smaller variance than patient 0, so its tentative time
    # must not exceed patient 0's within the same block
    bad = Plan(assignment={0: "b1", 1: "b1"}, tentative={0: 0.0, 1: 50.0})
    with pytest.raises(ValueError):
        bad.validate(inst)


def test_specialty_invariants():
    with pytest.raises(ValueError):
        Specialty("X", -1.0, 1.0)
    with pytest.raises(ValueError):
        Specialty("X", 10.0, -1.0)
    with pytest.raises(ValueError):
        ElectivePatient(0, "X", 0.0, -0.1)
