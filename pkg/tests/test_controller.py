"""Candidate geometry, the two mission policies, and episode simulation."""

import dataclasses

import numpy as np
import pytest

from pcrb_tracker.controller import (
    BENCHMARK,
    MODE_BACKUP_FALLBACK,
    MODE_CANDIDATE,
    MODE_DIRECT_FLIGHT,
    MODE_FORCED_TERMINAL,
    PROPOSED,
    ControlError,
    MissionInfeasibleError,
    ReachabilityError,
    candidate_bounds,
    make_policy,
    run_episode,
)
from pcrb_tracker.energy import PropulsionParams, backup_plan, propulsion_power
from pcrb_tracker.scenario import Scenario

DT = 0.2
V_MAX = 30.0
N_SLOTS = 50
SEED = 3


def _with_budget(scenario: Scenario, budget: float) -> Scenario:
    mission = dataclasses.replace(scenario.mission, energy_budget=budget)
    return dataclasses.replace(scenario, mission=mission)


@pytest.fixture(scope="module")
def ep_proposed(scenario):
    return run_episode(scenario, PROPOSED, SEED)


@pytest.fixture(scope="module")
def ep_benchmark(scenario):
    return run_episode(scenario, BENCHMARK, SEED)


# ---------------------------------------------------------------------------
# Candidate geometry


def test_final_slot_interval_pins_the_endpoint():
    geom = candidate_bounds(
        xhat=40.0, vhat=9.0, uav_vel_prev=20.0, uav_pos=58.0, final_pos=60.0,
        slot=N_SLOTS, num_slots=N_SLOTS, dt=DT, v_max=V_MAX,
    )
    assert geom.interval.lo == geom.interval.hi == geom.omega
    v = geom.velocity_for(geom.interval.mid, DT, V_MAX)
    assert 58.0 + v * DT == pytest.approx(60.0, abs=1e-12)


def test_candidate_window_respects_speed_and_reach():
    rng = np.random.default_rng(515)
    for _ in range(100):
        slot = int(rng.integers(1, N_SLOTS + 1))
        uav_pos = float(rng.uniform(-10.0, 70.0))
        xhat = float(rng.uniform(-50.0, 150.0))
        vhat = float(rng.uniform(-15.0, 15.0))
        v_prev = float(rng.uniform(-V_MAX, V_MAX))
        try:
            geom = candidate_bounds(
                xhat, vhat, v_prev, uav_pos, 60.0, slot, N_SLOTS, DT, V_MAX
            )
        except ReachabilityError:
            continue
        iv = geom.interval
        assert iv.lo >= geom.eta - V_MAX * DT - 1e-9
        assert iv.hi <= geom.eta + V_MAX * DT + 1e-9
        for x in (iv.lo, iv.mid, iv.hi):
            v = (geom.eta - x) / DT
            assert abs(v) <= V_MAX + 1e-9
            # The endpoint must stay reachable after the move.
            pos_next = uav_pos + v * DT
            assert abs(60.0 - pos_next) <= (N_SLOTS - slot) * V_MAX * DT + 1e-6


def test_empty_candidate_window_is_an_error():
    with pytest.raises(ReachabilityError, match="empty candidate"):
        candidate_bounds(
            xhat=0.0, vhat=0.0, uav_vel_prev=0.0, uav_pos=0.0, final_pos=100.0,
            slot=N_SLOTS, num_slots=N_SLOTS, dt=DT, v_max=V_MAX,
        )


def test_velocity_for_is_affine_and_clipped():
    geom = candidate_bounds(
        xhat=10.0, vhat=0.0, uav_vel_prev=0.0, uav_pos=0.0, final_pos=60.0,
        slot=1, num_slots=N_SLOTS, dt=DT, v_max=V_MAX,
    )
    x = geom.eta - 2.5 * DT
    assert geom.velocity_for(x, DT, V_MAX) == pytest.approx(2.5, abs=1e-12)
    assert geom.velocity_for(geom.eta - 100.0, DT, V_MAX) == V_MAX
    assert geom.velocity_for(geom.eta + 100.0, DT, V_MAX) == -V_MAX


def test_make_policy_rejects_unknown_name(scenario):
    with pytest.raises(ControlError, match="unknown policy"):
        make_policy("greedy", scenario)


# ---------------------------------------------------------------------------
# Proposed policy


def test_proposed_rejects_hopeless_budget(scenario):
    with pytest.raises(MissionInfeasibleError, match="remain"):
        run_episode(_with_budget(scenario, 500.0), PROPOSED, SEED)


def test_proposed_absorbs_into_backup_on_gate_failure(scenario, pp):
    whole = backup_plan(0.0, 60.0, N_SLOTS, DT, V_MAX, pp)
    tight = _with_budget(scenario, whole.e_upper + 0.5)
    ep = run_episode(tight, PROPOSED, SEED)
    assert ep.turning_slot == 1
    assert all(r.tag == MODE_BACKUP_FALLBACK for r in ep.records)
    assert ep.final_pos_error <= 1e-6
    assert ep.consumed <= tight.mission.energy_budget + 1e-9
    # The certified remaining bound shrinks as the plan is consumed.
    bounds = [r.e_backup for r in ep.records]
    assert all(b2 < b1 for b1, b2 in zip(bounds, bounds[1:]))


def test_proposed_fallback_is_absorbing(ep_proposed):
    tags = [r.tag for r in ep_proposed.records]
    first = tags.index(MODE_BACKUP_FALLBACK)
    assert all(t == MODE_BACKUP_FALLBACK for t in tags[first:])
    assert all(t == MODE_CANDIDATE for t in tags[:first])


def test_proposed_candidate_slots_pass_the_gate(scenario, ep_proposed, pp):
    budget = scenario.mission.energy_budget
    consumed_before = 0.0
    for r in ep_proposed.records:
        if r.tag == MODE_CANDIDATE:
            assert r.gate_passed
            cost = consumed_before + propulsion_power(r.v_applied, pp) * DT + r.e_backup
            assert cost <= budget + 1e-9
            assert 1 <= r.dinkelbach_iters <= 50
        else:
            assert not r.gate_passed
        consumed_before = r.consumed


def test_proposed_candidates_stay_inside_their_window(ep_proposed):
    for r in ep_proposed.records:
        if r.tag == MODE_CANDIDATE:
            assert r.interval_lo - 1e-9 <= r.x_breve <= r.interval_hi + 1e-9


# ---------------------------------------------------------------------------
# Benchmark policy


def test_benchmark_reserve_and_gate_recompute(scenario, ep_benchmark, pp):
    m = scenario.mission
    pos_before, consumed_before = m.start_pos, 0.0
    for r in ep_benchmark.records:
        slots_left = m.num_slots - r.slot
        reserve = propulsion_power(V_MAX, pp) * DT
        if slots_left:
            horizon = slots_left * DT
            worst = max(
                propulsion_power((m.final_pos - (pos_before - V_MAX * DT)) / horizon, pp),
                propulsion_power((m.final_pos - (pos_before + V_MAX * DT)) / horizon, pp),
            )
            reserve += slots_left * DT * worst
        assert r.e_backup == pytest.approx(reserve, rel=1e-12)
        remaining = m.energy_budget - consumed_before
        assert r.gate_passed == (remaining > reserve)
        pos_before, consumed_before = r.uav_pos, r.consumed


def test_benchmark_direct_flight_speed(scenario, ep_benchmark):
    m = scenario.mission
    pos_before = m.start_pos
    seen = 0
    for r in ep_benchmark.records:
        if r.tag == MODE_DIRECT_FLIGHT:
            slots_left = m.num_slots - r.slot
            v = (m.final_pos - pos_before) / ((slots_left + 1) * DT)
            assert r.v_applied == pytest.approx(float(np.clip(v, -V_MAX, V_MAX)), rel=1e-12)
            seen += 1
        pos_before = r.uav_pos
    assert seen > 0


def test_benchmark_final_slot_is_forced(ep_benchmark):
    assert ep_benchmark.records[-1].tag == MODE_FORCED_TERMINAL


# ---------------------------------------------------------------------------
# Episodes


def test_episode_is_deterministic(scenario, ep_proposed):
    again = run_episode(scenario, PROPOSED, SEED)
    assert [r.tag for r in again.records] == [r.tag for r in ep_proposed.records]
    for field in ("x_breve", "v_applied", "uav_pos", "consumed", "xhat", "vhat"):
        a = np.array([getattr(r, field) for r in again.records])
        b = np.array([getattr(r, field) for r in ep_proposed.records])
        assert np.array_equal(a, b, equal_nan=True), field
    assert again.consumed == ep_proposed.consumed
    assert again.turning_slot == ep_proposed.turning_slot


def test_policies_share_the_same_target_path(ep_proposed, ep_benchmark):
    """Common random numbers: the absolute target trajectory is policy-free."""
    for ra, rb in zip(ep_proposed.records, ep_benchmark.records):
        assert ra.uav_pos + ra.x_true == pytest.approx(rb.uav_pos + rb.x_true, abs=1e-9)
        assert ra.v_applied + ra.v_true == pytest.approx(rb.v_applied + rb.v_true, abs=1e-9)


def test_episode_terminal_and_budget_contracts(scenario, ep_proposed, ep_benchmark):
    for ep in (ep_proposed, ep_benchmark):
        assert len(ep.records) == N_SLOTS
        assert ep.final_pos_error <= 1e-6
        assert ep.consumed <= scenario.mission.energy_budget + 1e-9
        assert ep.final_uav_pos == pytest.approx(scenario.mission.final_pos, abs=1e-6)
        tags = [r.tag for r in ep.records]
        expect = next((r.slot for r in ep.records if r.tag != MODE_CANDIDATE), N_SLOTS)
        assert ep.turning_slot == expect
        assert abs(ep.records[-1].uav_pos - ep.final_uav_pos) <= 1e-12


def test_episode_ledger_arithmetic(scenario, ep_proposed, pp):
    consumed_before = 0.0
    for r in ep_proposed.records:
        step = propulsion_power(r.v_applied, pp) * DT
        assert r.consumed == pytest.approx(consumed_before + step, rel=1e-12)
        consumed_before = r.consumed


def test_cumulative_consumed_lookup(ep_proposed):
    assert ep_proposed.cumulative_consumed(0) == 0.0
    for k in (1, 7, N_SLOTS):
        assert ep_proposed.cumulative_consumed(k) == ep_proposed.records[k - 1].consumed


def test_predicted_objective_blends_the_pair(scenario, ep_proposed):
    alpha = scenario.mission.alpha
    for r in ep_proposed.records:
        blend = alpha * r.pcrb_pred_pos + (1.0 - alpha) * r.pcrb_pred_vel
        assert r.objective_pred == pytest.approx(blend, rel=1e-12)
