"""Scenario schema, validation, and config round-tripping."""

import math

import pytest

from pcrb_tracker.scenario import (
    EstimatorInit,
    MissionSpec,
    Scenario,
    ScenarioError,
    SystemParams,
    dbm_to_watts,
    derive_constants,
    load_scenario,
)


def test_dbm_to_watts():
    assert dbm_to_watts(20.0) == pytest.approx(0.1, rel=1e-12)
    assert dbm_to_watts(-80.0) == pytest.approx(1e-11, rel=1e-12)
    assert dbm_to_watts(0.0) == pytest.approx(1e-3, rel=1e-12)


def test_default_scenario_valid(scenario):
    assert scenario.mission.num_slots == 50
    assert scenario.mission.final_pos == 60.0
    assert scenario.mission.target_speed == 10.0
    assert scenario.params.altitude == 50.0


def test_derived_constants_recomputed(scenario):
    p = scenario.params
    channel = p.wavelength**2 * p.rcs / (64.0 * math.pi**3)
    snr = p.n_tx * p.n_rx * p.tx_power * p.matched_gain * channel / p.noise_power
    d = derive_constants(p)
    assert d.channel_gain == pytest.approx(channel, rel=1e-15)
    assert d.snr_gain == pytest.approx(snr, rel=1e-15)
    assert scenario.derived == d


def test_long_horizon_document_case():
    # 100 slots at 30 m/s and 0.2 s reach 600 m >= the 60 m leg.
    sc = Scenario(mission=MissionSpec(num_slots=100))
    assert sc.mission.num_slots * sc.mission.v_max * sc.mission.slot_dt >= 60.0


def test_unreachable_final_position_rejected():
    with pytest.raises(ScenarioError, match="final_pos"):
        Scenario(mission=MissionSpec(final_pos=1e4))
    with pytest.raises(ScenarioError, match="final_pos"):
        Scenario(mission=MissionSpec(num_slots=2, final_pos=13.0))


@pytest.mark.parametrize(
    "section_kwargs",
    [
        {"slot_dt": -0.2},
        {"slot_dt": 0.0},
        {"energy_budget": -1.0},
        {"v_max": 0.0},
        {"alpha": 1.5},
        {"alpha": -0.1},
        {"num_slots": 0},
    ],
)
def test_invalid_mission_values_rejected(section_kwargs):
    with pytest.raises(ScenarioError):
        Scenario(mission=MissionSpec(**section_kwargs))


def test_invalid_params_rejected():
    with pytest.raises(ScenarioError, match="wavelength"):
        Scenario(params=SystemParams(wavelength=0.0))
    with pytest.raises(ScenarioError, match="n_tx"):
        Scenario(params=SystemParams(n_tx=0))
    with pytest.raises(ScenarioError, match="pos_var0"):
        Scenario(estimator=EstimatorInit(pos_var0=0.0))


def test_config_round_trip(scenario):
    text = scenario.to_config_text()
    again = load_scenario(text)
    assert again == scenario

    custom = Scenario(
        params=SystemParams(altitude=75.0, q_intensity=0.5),
        mission=MissionSpec(energy_budget=1600.0, num_slots=40),
        estimator=EstimatorInit(seed=9),
    )
    assert load_scenario(custom.to_config_text()) == custom


def test_load_scenario_empty_is_default():
    assert load_scenario("") == Scenario()
    assert load_scenario("altitude: 50.0") == Scenario()


def test_load_scenario_rejects_unknown_key():
    with pytest.raises(ScenarioError, match="unknown config key"):
        load_scenario("hover_power: 1.0")


def test_load_scenario_rejects_bad_types():
    with pytest.raises(ScenarioError, match="num_slots"):
        load_scenario("num_slots: 12.5")
    with pytest.raises(ScenarioError, match="altitude"):
        load_scenario("altitude: tall")
    with pytest.raises(ScenarioError, match="altitude"):
        load_scenario("altitude: true")
    with pytest.raises(ScenarioError, match="mapping"):
        load_scenario("- 1\n- 2\n")
    with pytest.raises(ScenarioError, match="parse"):
        load_scenario("altitude: [unclosed")


def test_load_scenario_promotes_int_to_float():
    sc = load_scenario("altitude: 60")
    assert sc.params.altitude == 60.0
    assert isinstance(sc.params.altitude, float)
