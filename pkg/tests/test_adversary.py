import numpy as np
import pytest
from hypothesis import given, strategies as st

from cpsres.adversary import (
    AdversaryModel,
    AttackWindow,
    SaturationAttackScenario,
    estimation_error,
    inject,
    scenario_constants,
    scenario_table,
)
from cpsres.errors import ContractViolation, UndefinedRatio
from cpsres.lti_core import DecentralizedPI, PILoop, SaturationLimits, StateFeedback, StateSpaceModel, simulate


def _plant():
    return StateSpaceModel([[0.8, 0.1], [0.0, 0.7]], [[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]])


def test_window_activity():
    w = AttackWindow(5, 3)
    assert [w.active(k) for k in range(4, 9)] == [False, True, True, True, False]
    assert AttackWindow(5, None).active(10**6)
    with pytest.raises(ContractViolation):
        AttackWindow(-1, 3)


@given(st.integers(0, 50), st.integers(0, 20), st.integers(0, 100))
def test_stuck_levels_only_inside_window(start, dur, k):
    att = SaturationAttackScenario({1: 7.0}, start, dur)
    u, _ = inject(att, k, [1.0, 2.0], [0.0, 0.0], [0.0, 0.0])
    inside = start <= k < start + dur
    np.testing.assert_array_equal(u, [1.0, 7.0] if inside else [1.0, 2.0])


def test_stuck_level_outside_physical_range_rejected():
    att = SaturationAttackScenario({0: 150.0}, 0, 5)
    lim = SaturationLimits([0.0, 0.0], [100.0, 100.0]).shifted([50.0, 50.0])
    with pytest.raises(ContractViolation):
        att.session(_plant(), lim, [50.0, 50.0])


def test_stuck_levels_use_engineering_units():
    m = _plant()
    lim = SaturationLimits([0.0, 0.0], [100.0, 100.0]).shifted([40.0, 60.0])
    traj = simulate(m, None, [0.0, 0.0], 6, limits=lim, attack=SaturationAttackScenario({0: 100.0}, 2, 2),
                    u_offset=[40.0, 60.0])
    np.testing.assert_allclose(traj.usat_abs[:, 0], [40, 40, 100, 100, 40, 40])


def test_empty_attack_set_rejected():
    with pytest.raises(ContractViolation):
        SaturationAttackScenario({}, 0, 5)


def test_table_constants_as_printed():
    c = scenario_constants()
    assert c["max_pressure"] == (("100", "0"), ("85", "5"), ("70", "12.5"))
    assert c["min_pressure"] == (("0", "100"), ("20", "75"), ("30", "50"))
    sc = scenario_table("min_pressure", 3, start=100)
    assert sc.levels == {0: 30.0, 2: 50.0} and sc.start == 100 and sc.duration == 30
    with pytest.raises(ContractViolation):
        scenario_table("max_pressure", 4)


def test_adversary_max_policy_drives_attacked_inputs_only():
    m = _plant()
    lim = SaturationLimits.symmetric([2.0, 3.0], 2)
    adv = AdversaryModel(m.B, m.C, "max", start=1, duration=2, attacked_inputs=(1,))
    traj = simulate(m, StateFeedback(np.zeros((2, 2))), [0.0, 0.0], 5, limits=lim, attack=adv)
    np.testing.assert_allclose(traj.saturated_inputs[:, 1], [0, 3, 3, 0, 0])
    np.testing.assert_allclose(traj.saturated_inputs[:, 0], 0)


def test_adversary_schedule_holds_last_value():
    adv = AdversaryModel(np.eye(2), np.eye(2), {0: [1.0, 1.0], 3: [2.0, -2.0]}, start=0, duration=None)
    s = adv.session(_plant(), SaturationLimits.unbounded(2))
    np.testing.assert_allclose(s.actuator(2, np.zeros(2), np.zeros(2)), [1, 1])
    np.testing.assert_allclose(s.actuator(9, np.zeros(2), np.zeros(2)), [2, -2])


def test_replay_loops_pre_attack_measurements():
    adv = AdversaryModel(np.eye(2), np.eye(2), "max", start=3, duration=4, sensor_policy="replay", replay_period=2)
    s = adv.session(_plant(), SaturationLimits.unbounded(2))
    for k in range(3):
        s.sensor(k, np.array([k, k], dtype=float), np.zeros(2))
    seen = [s.sensor(k, np.array([99.0, 99.0]), np.zeros(2))[0] for k in range(3, 7)]
    assert seen == [1.0, 2.0, 1.0, 2.0]


def test_fabrication_with_perfect_knowledge_matches_nominal_output():
    # an output-feedback controller cannot tell the attacked run from the clean one
    m = _plant()
    ctrl = DecentralizedPI((PILoop(0, 0, 0.3, 5.0), PILoop(1, 1, 0.2, 8.0)))
    lim = SaturationLimits.symmetric(5.0, 2)
    x0 = [1.0, -1.0]
    clean = simulate(m, ctrl, x0, 20, limits=lim)
    adv = AdversaryModel(m.B, m.C, "max", start=0, duration=None, sensor_policy="fabricate")
    attacked = simulate(m, ctrl, x0, 20, limits=lim, attack=adv)
    np.testing.assert_allclose(attacked.seen_outputs, clean.outputs, atol=1e-12)
    assert np.all(attacked.saturated_inputs == 5.0)


def test_estimation_error():
    m = _plant()
    assert estimation_error(AdversaryModel(m.B, m.C), m) == 0.0
    assert estimation_error(AdversaryModel(1.1 * m.B, m.C), m) == pytest.approx(0.1)
    z = StateSpaceModel([[0.5]], [[0.0]], [[1.0]])
    with pytest.raises(UndefinedRatio):
        estimation_error(AdversaryModel([[0.0]], [[1.0]]), z)


def test_dimension_mismatch_rejected():
    with pytest.raises(ContractViolation):
        AdversaryModel(np.eye(3), np.eye(2)).session(_plant(), SaturationLimits.unbounded(2))
    with pytest.raises(ContractViolation):
        AdversaryModel(np.eye(2), np.eye(2), sensor_policy="bogus")
