"""Receding-horizon slot controller for the tracking mission.

Each slot the controller picks the UAV velocity through the predicted
relative position x_breve (the two are affinely related), minimizing the
weighted predicted error bound over the reachable interval. Two policies
are provided:

* proposed: every candidate is gated against the energy budget using a
  freshly planned minimum-energy backup trajectory; once a candidate fails
  the gate the controller commits to the last certified backup plan.
* benchmark: a conservative reserve check using worst-case direct-flight
  power; when the reserve cannot be met the craft flies straight to the
  final position, re-evaluating every slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (
    RelativeState,
    meas_noise_vars,
    process_noise_cov,
    synth_measurement,
    transition_matrix,
)
from .ekf import Belief, predict, update
from .energy import (
    BackupPlan,
    EnergyLedger,
    PropulsionParams,
    backup_plan,
    feasibility_gate,
    feasible_speed_intervals,
    propulsion_power,
)
from .pcrb import (
    MATRIX_CONSISTENT,
    SensingConstants,
    build_ratio_polys,
    fisher_terms,
    predicted_pcrb,
    weighted_objective,
)
from .polyopt import (
    DinkelbachResult,
    Interval,
    SdpBackend,
    default_sdp_backend,
    dinkelbach_minimize_ratio,
)
from .scenario import Scenario

PROPOSED = "proposed"
BENCHMARK = "benchmark"
POLICIES = (PROPOSED, BENCHMARK)

MODE_CANDIDATE = "CANDIDATE"
MODE_FORCED_TERMINAL = "FORCED_TERMINAL"
MODE_BACKUP_FALLBACK = "BACKUP_FALLBACK"
MODE_DIRECT_FLIGHT = "DIRECT_FLIGHT"

_GATE_TOL = 1e-9
_DEGENERATE_WIDTH = 1e-12


class ControlError(RuntimeError):
    """Base error for controller failures."""


class ReachabilityError(ControlError):
    """The candidate interval is empty: the endpoint cannot be honored."""


class MissionInfeasibleError(ControlError):
    """The budget cannot cover even the cheapest way to reach the endpoint."""


@dataclass
class SolverSuite:
    """Shared solver handles and optional diagnostics collectors."""

    sdp: SdpBackend | None = None
    inner_log: list | None = None  # (cost poly, interval, minimizer) triples
    ratio_log: list | None = None  # DinkelbachResult per candidate slot

    @classmethod
    def default(cls) -> "SolverSuite":
        return cls(sdp=default_sdp_backend())


@dataclass(frozen=True)
class CandidateGeometry:
    """Affine bookkeeping between x_breve and the applied UAV velocity.

    eta is the predicted relative position were the platform to stop;
    choosing x_breve means flying v = (eta - x_breve) / dt. omega is the
    x_breve value that lands the platform exactly on the final position.
    """

    eta: float
    omega: float
    interval: Interval

    def velocity_for(self, x_breve: float, dt: float, v_max: float) -> float:
        return float(np.clip((self.eta - x_breve) / dt, -v_max, v_max))


def candidate_bounds(
    xhat: float,
    vhat: float,
    uav_vel_prev: float,
    uav_pos: float,
    final_pos: float,
    slot: int,
    num_slots: int,
    dt: float,
    v_max: float,
) -> CandidateGeometry:
    """Reachable x_breve interval under the speed and endpoint constraints.

    The lower/upper limits combine the platform speed limit for this slot
    with the requirement that the final position stays reachable within the
    remaining slots; at the last slot the interval collapses to a point.
    """
    eta = xhat + dt * vhat + dt * uav_vel_prev
    omega = uav_pos + eta - final_pos
    slots_left = num_slots - slot
    reach = slots_left * v_max * dt
    lo = max(eta - v_max * dt, omega - reach)
    hi = min(eta + v_max * dt, omega + reach)
    if lo > hi:
        if lo - hi > 1e-9 * max(1.0, abs(lo), abs(hi)):
            raise ReachabilityError(
                f"slot {slot}: empty candidate interval [{lo!r}, {hi!r}]"
            )
        lo = hi = 0.5 * (lo + hi)
    return CandidateGeometry(eta=eta, omega=omega, interval=Interval(lo, hi))


@dataclass(frozen=True)
class SlotInputs:
    """Everything a policy may look at when deciding slot `slot` (1-based)."""

    slot: int
    xhat: float
    vhat: float
    pred_cov: np.ndarray  # prior covariance for this slot (control-free)
    uav_pos: float
    uav_vel_prev: float
    ledger: EnergyLedger


@dataclass(frozen=True)
class SlotDecision:
    tag: str
    x_breve: float
    v_applied: float
    geometry: CandidateGeometry | None
    e_backup: float  # certified backup bound (proposed) or reserve (benchmark)
    gate_passed: bool
    dinkelbach: DinkelbachResult | None


def _is_degenerate(iv: Interval) -> bool:
    return iv.width <= _DEGENERATE_WIDTH * max(1.0, abs(iv.lo), abs(iv.hi))


class ProposedPolicy:
    """Candidate optimization with a per-slot backup-certified energy gate."""

    def __init__(
        self,
        scenario: Scenario,
        suite: SolverSuite | None = None,
        convention: str = MATRIX_CONSISTENT,
    ) -> None:
        self.scenario = scenario
        self.suite = suite if suite is not None else SolverSuite.default()
        self.convention = convention
        self.pp = PropulsionParams.from_scenario(scenario)
        self.consts = SensingConstants.from_scenario(scenario)
        self._fallback: BackupPlan | None = None
        self._absorbed = False

    def _consume_fallback(
        self, s: SlotInputs, geom: CandidateGeometry | None, dk: DinkelbachResult | None
    ) -> SlotDecision:
        plan = self._fallback
        assert plan is not None and plan.num_slots > 0
        v = float(plan.velocities[0])
        self._fallback = plan.tail()
        self._absorbed = True
        dt = self.scenario.mission.slot_dt
        x_breve = s.xhat + dt * (s.vhat - (v - s.uav_vel_prev))
        return SlotDecision(
            tag=MODE_BACKUP_FALLBACK,
            x_breve=x_breve,
            v_applied=v,
            geometry=geom,
            e_backup=plan.e_upper,
            gate_passed=False,
            dinkelbach=dk,
        )

    def decide(self, s: SlotInputs) -> SlotDecision:
        m = self.scenario.mission
        dt, v_max, n_total = m.slot_dt, m.v_max, m.num_slots
        if self._absorbed:
            return self._consume_fallback(s, None, None)
        if self._fallback is None:
            whole = backup_plan(
                s.uav_pos, m.final_pos, n_total - s.slot + 1, dt, v_max, self.pp
            )
            if whole.e_upper > s.ledger.remaining + _GATE_TOL:
                raise MissionInfeasibleError(
                    f"cheapest certified plan needs {whole.e_upper!r} J "
                    f"but only {s.ledger.remaining!r} J remain"
                )
            self._fallback = whole

        geom = candidate_bounds(
            s.xhat, s.vhat, s.uav_vel_prev, s.uav_pos, m.final_pos,
            s.slot, n_total, dt, v_max,
        )
        if _is_degenerate(geom.interval):
            x_star, dk, tag = geom.interval.mid, None, MODE_FORCED_TERMINAL
        else:
            polys = build_ratio_polys(
                s.xhat, dt, s.pred_cov, self.consts, m.alpha, self.convention
            )
            dk = dinkelbach_minimize_ratio(
                polys,
                geom.interval,
                sdp=self.suite.sdp,
                inner_log=self.suite.inner_log,
            )
            if self.suite.ratio_log is not None:
                self.suite.ratio_log.append(dk)
            x_star, tag = dk.x_star, MODE_CANDIDATE

        v_cand = geom.velocity_for(x_star, dt, v_max)
        pos_next = s.uav_pos + v_cand * dt
        plan_next = backup_plan(pos_next, m.final_pos, n_total - s.slot, dt, v_max, self.pp)
        if feasibility_gate(s.ledger, v_cand, dt, plan_next.e_upper, self.pp):
            self._fallback = plan_next
            return SlotDecision(
                tag=tag,
                x_breve=x_star,
                v_applied=v_cand,
                geometry=geom,
                e_backup=plan_next.e_upper,
                gate_passed=True,
                dinkelbach=dk,
            )
        return self._consume_fallback(s, geom, dk)


class BenchmarkPolicy:
    """Reserve-based baseline: optimize only while enough budget remains to
    absorb a worst-case slot plus a direct flight home, otherwise fly
    straight at the final position.

    The reserve prices this slot at full-speed power and the remaining slots
    at the worst direct-flight power over the positions reachable this slot,
    which makes the check sufficient regardless of the velocity actually
    chosen. Non-absorbing: the check is repeated every slot.
    """

    def __init__(
        self,
        scenario: Scenario,
        suite: SolverSuite | None = None,
        convention: str = MATRIX_CONSISTENT,
    ) -> None:
        self.scenario = scenario
        self.suite = suite if suite is not None else SolverSuite.default()
        self.convention = convention
        self.pp = PropulsionParams.from_scenario(scenario)
        self.consts = SensingConstants.from_scenario(scenario)

    def _reserve(self, s: SlotInputs) -> float:
        m = self.scenario.mission
        dt, v_max = m.slot_dt, m.v_max
        slots_left = m.num_slots - s.slot
        this_slot = propulsion_power(v_max, self.pp) * dt
        if slots_left == 0:
            return this_slot
        # The end-of-slot position is unknown before the velocity is chosen;
        # power is unimodal in speed, so the two reachable extremes bound the
        # direct-flight power from wherever this slot actually lands.
        horizon = slots_left * dt
        worst = max(
            propulsion_power((m.final_pos - (s.uav_pos - v_max * dt)) / horizon, self.pp),
            propulsion_power((m.final_pos - (s.uav_pos + v_max * dt)) / horizon, self.pp),
        )
        return this_slot + slots_left * dt * worst

    def _direct_flight(self, s: SlotInputs, geom: CandidateGeometry, reserve: float) -> SlotDecision:
        m = self.scenario.mission
        dt, v_max = m.slot_dt, m.v_max
        slots_left = m.num_slots - s.slot
        v = float(np.clip((m.final_pos - s.uav_pos) / ((slots_left + 1) * dt), -v_max, v_max))
        return SlotDecision(
            tag=MODE_DIRECT_FLIGHT,
            x_breve=geom.eta - v * dt,
            v_applied=v,
            geometry=geom,
            e_backup=reserve,
            gate_passed=False,
            dinkelbach=None,
        )

    def decide(self, s: SlotInputs) -> SlotDecision:
        m = self.scenario.mission
        dt, v_max, n_total = m.slot_dt, m.v_max, m.num_slots
        if s.slot == 1:
            v_dir = (m.final_pos - s.uav_pos) / (n_total * dt)
            if propulsion_power(v_dir, self.pp) * n_total * dt > s.ledger.remaining + _GATE_TOL:
                raise MissionInfeasibleError(
                    "direct flight to the final position already exceeds the budget"
                )
        geom = candidate_bounds(
            s.xhat, s.vhat, s.uav_vel_prev, s.uav_pos, m.final_pos,
            s.slot, n_total, dt, v_max,
        )
        reserve = self._reserve(s)

        if _is_degenerate(geom.interval):
            # Reachability pins the endpoint; the forced move is the only
            # one that still reaches the final position.
            v = geom.velocity_for(geom.interval.mid, dt, v_max)
            return SlotDecision(
                tag=MODE_FORCED_TERMINAL,
                x_breve=geom.interval.mid,
                v_applied=v,
                geometry=geom,
                e_backup=reserve,
                gate_passed=s.ledger.remaining > reserve,
                dinkelbach=None,
            )

        if not s.ledger.remaining > reserve:
            return self._direct_flight(s, geom, reserve)

        # With the reserve met, the per-slot cap is the full remaining budget.
        slot_cap = s.ledger.remaining
        speed_ivs = feasible_speed_intervals(slot_cap, dt, v_max, self.pp)

        segments: list[Interval] = []
        for s_lo, s_hi in speed_ivs:
            if s_lo <= 0.0:
                spans = [(geom.eta - s_hi * dt, geom.eta + s_hi * dt)]
            else:
                spans = [
                    (geom.eta - s_hi * dt, geom.eta - s_lo * dt),
                    (geom.eta + s_lo * dt, geom.eta + s_hi * dt),
                ]
            for a, b in spans:
                lo, hi = max(a, geom.interval.lo), min(b, geom.interval.hi)
                if lo <= hi:
                    segments.append(Interval(lo, hi))
        if not segments:
            return self._direct_flight(s, geom, reserve)

        polys = build_ratio_polys(
            s.xhat, dt, s.pred_cov, self.consts, m.alpha, self.convention
        )
        best: DinkelbachResult | None = None
        for seg in segments:
            dk = dinkelbach_minimize_ratio(
                polys, seg, sdp=self.suite.sdp, inner_log=self.suite.inner_log
            )
            if best is None or dk.ratio < best.ratio:
                best = dk
        if self.suite.ratio_log is not None:
            self.suite.ratio_log.append(best)
        v = geom.velocity_for(best.x_star, dt, v_max)
        return SlotDecision(
            tag=MODE_CANDIDATE,
            x_breve=best.x_star,
            v_applied=v,
            geometry=geom,
            e_backup=reserve,
            gate_passed=True,
            dinkelbach=best,
        )


def make_policy(
    name: str,
    scenario: Scenario,
    suite: SolverSuite | None = None,
    convention: str = MATRIX_CONSISTENT,
):
    if name == PROPOSED:
        return ProposedPolicy(scenario, suite, convention)
    if name == BENCHMARK:
        return BenchmarkPolicy(scenario, suite, convention)
    raise ControlError(f"unknown policy {name!r}; expected one of {POLICIES}")


# ---------------------------------------------------------------------------
# Episode simulation


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    tag: str
    interval_lo: float
    interval_hi: float
    x_breve: float
    v_applied: float
    uav_pos: float
    consumed: float
    e_backup: float
    gate_passed: bool
    dinkelbach_iters: int
    objective_pred: float  # weighted predicted bound at the realized prior
    pcrb_pred_pos: float
    pcrb_pred_vel: float
    weighted_actual: float  # weighted posterior covariance diagonal
    cov_pos: float
    cov_vel: float
    xhat: float
    vhat: float
    x_true: float
    v_true: float


@dataclass(frozen=True)
class EpisodeResult:
    policy: str
    seed: int
    records: list[SlotRecord]
    turning_slot: int
    consumed: float
    final_uav_pos: float
    final_pos_error: float

    def cumulative_consumed(self, upto_slot: int) -> float:
        """Energy spent through `upto_slot` (1-based, inclusive)."""
        total = 0.0
        for r in self.records:
            if r.slot > upto_slot:
                break
            total = r.consumed
        return total


def run_episode(
    scenario: Scenario,
    policy_name: str,
    seed: int,
    suite: SolverSuite | None = None,
    convention: str = MATRIX_CONSISTENT,
) -> EpisodeResult:
    """Simulate one mission under the given policy.

    Target motion, measurement noise, and the initial estimate perturbation
    draw from three independent streams spawned from `seed`, and the target
    is simulated in absolute coordinates, so the randomness seen by two
    policies on the same seed is identical draw for draw.
    """
    m = scenario.mission
    p = scenario.params
    derived = scenario.derived
    pp = PropulsionParams.from_scenario(scenario)
    consts = SensingConstants.from_scenario(scenario)
    policy = make_policy(policy_name, scenario, suite, convention)

    dt = m.slot_dt
    n_total = m.num_slots
    f = transition_matrix(dt)
    q = process_noise_cov(dt, p.q_intensity)
    chol_q = np.linalg.cholesky(q)

    t_ss, m_ss, i_ss = np.random.SeedSequence(seed).spawn(3)
    rng_target = np.random.default_rng(t_ss)
    rng_meas = np.random.default_rng(m_ss)
    rng_init = np.random.default_rng(i_ss)

    # Absolute target path, independent of the control policy.
    t_pos = np.empty(n_total + 1)
    t_vel = np.empty(n_total + 1)
    t_pos[0], t_vel[0] = m.target_start, m.target_speed
    for k in range(1, n_total + 1):
        w = chol_q @ rng_target.standard_normal(2)
        t_pos[k] = t_pos[k - 1] + dt * t_vel[k - 1] + w[0]
        t_vel[k] = t_vel[k - 1] + w[1]

    uav_pos, uav_vel = m.start_pos, 0.0
    z = rng_init.standard_normal(2)
    est = scenario.estimator
    xhat0 = (t_pos[0] - uav_pos) + est.pos_perturb_std * z[0]
    vhat0 = (t_vel[0] - uav_vel) + est.vel_perturb_std * z[1]
    belief = Belief(
        xhat=np.array([xhat0, vhat0]),
        cov=np.diag([est.pos_var0, est.vel_var0]).astype(float),
    )
    ledger = EnergyLedger(budget=m.energy_budget)

    records: list[SlotRecord] = []
    for n in range(1, n_total + 1):
        pred_cov = f @ belief.cov @ f.T + q
        decision = policy.decide(
            SlotInputs(
                slot=n,
                xhat=float(belief.xhat[0]),
                vhat=float(belief.xhat[1]),
                pred_cov=pred_cov,
                uav_pos=uav_pos,
                uav_vel_prev=uav_vel,
                ledger=ledger,
            )
        )
        u = decision.v_applied - uav_vel
        prediction = predict(belief, u, dt, q)
        uav_pos += decision.v_applied * dt
        uav_vel = decision.v_applied
        truth = RelativeState(x=t_pos[n] - uav_pos, v=t_vel[n] - uav_vel)
        xb = RelativeState(x=float(prediction.xbreve[0]), v=float(prediction.xbreve[1]))

        vars_pred = meas_noise_vars(
            xb, derived.snr_gain, p.altitude,
            p.angle_noise_scale, p.range_noise_scale, p.doppler_noise_scale,
        )
        vars_true = meas_noise_vars(
            truth, derived.snr_gain, p.altitude,
            p.angle_noise_scale, p.range_noise_scale, p.doppler_noise_scale,
        )
        y = synth_measurement(truth, p.altitude, p.wavelength, vars_true, rng_meas)
        belief = update(prediction, y, vars_pred, p.altitude, p.wavelength)
        ledger = ledger.charge(propulsion_power(decision.v_applied, pp) * dt)

        ft = fisher_terms(xb, pred_cov, consts)
        pair = predicted_pcrb(ft, convention)
        records.append(
            SlotRecord(
                slot=n,
                tag=decision.tag,
                interval_lo=decision.geometry.interval.lo if decision.geometry else np.nan,
                interval_hi=decision.geometry.interval.hi if decision.geometry else np.nan,
                x_breve=decision.x_breve,
                v_applied=decision.v_applied,
                uav_pos=uav_pos,
                consumed=ledger.consumed,
                e_backup=decision.e_backup,
                gate_passed=decision.gate_passed,
                dinkelbach_iters=decision.dinkelbach.iterations if decision.dinkelbach else 0,
                objective_pred=weighted_objective(pair, m.alpha),
                pcrb_pred_pos=pair.pos,
                pcrb_pred_vel=pair.vel,
                weighted_actual=(
                    m.alpha * belief.cov[0, 0] + (1.0 - m.alpha) * belief.cov[1, 1]
                ),
                cov_pos=float(belief.cov[0, 0]),
                cov_vel=float(belief.cov[1, 1]),
                xhat=float(belief.xhat[0]),
                vhat=float(belief.xhat[1]),
                x_true=truth.x,
                v_true=truth.v,
            )
        )

    turning = next((r.slot for r in records if r.tag != MODE_CANDIDATE), n_total)
    return EpisodeResult(
        policy=policy_name,
        seed=seed,
        records=records,
        turning_slot=turning,
        consumed=ledger.consumed,
        final_uav_pos=uav_pos,
        final_pos_error=abs(uav_pos - m.final_pos),
    )
