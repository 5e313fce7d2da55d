"""Rotary-wing propulsion energy and minimum-energy return planning.

The propulsion power curve is non-convex (it dips below hover power around
the max-endurance speed), so the minimum-energy plan to cover a given
displacement is found by successive convex approximation: a slack variable
bounds the induced-power term and its defining constraint is linearized at
the current iterate, which leaves a convex subproblem. That subproblem is
separable across slots except for the single displacement equality, so it
is solved exactly by dualizing that one constraint and root-finding the
multiplier.

A dynamic-programming oracle over discretized velocities/displacements
provides an independent check of the planner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .scenario import Scenario

_GATE_TOL = 1e-9
_SCA_REL_DECREASE = 1e-6
_SCA_MAX_ITERS = 30
_DISPLACEMENT_TOL = 1e-6
_DP_OP_LIMIT = 2e8


class EnergyError(RuntimeError):
    """Base error for planning failures."""


class BackupInfeasibleError(EnergyError):
    """The required displacement is unreachable in the available slots."""


@dataclass(frozen=True)
class PropulsionParams:
    profile_power: float  # W
    induced_power: float  # W
    tip_speed: float  # m/s
    hover_induced_speed: float  # m/s
    parasite_coeff: float  # kg/m

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "PropulsionParams":
        p = scenario.params
        return cls(
            profile_power=p.profile_power,
            induced_power=p.induced_power,
            tip_speed=p.tip_speed,
            hover_induced_speed=p.hover_induced_speed,
            parasite_coeff=p.parasite_coeff,
        )


def induced_speed_factor(v, pp: PropulsionParams):
    """The induced-power speed factor, algebraically stable at high speed.

    Equal to sqrt(sqrt(1 + b^2) - b) with b = v^2 / (2 v_h^2), computed as
    1/sqrt(sqrt(1 + b^2) + b) to avoid the subtractive cancellation that
    form suffers once b is large.
    """
    v = np.asarray(v, dtype=float)
    b = v * v / (2.0 * pp.hover_induced_speed**2)
    out = 1.0 / np.sqrt(np.sqrt(1.0 + b * b) + b)
    return float(out) if out.ndim == 0 else out


def propulsion_power(v, pp: PropulsionParams):
    """Propulsion power (W) at level flight speed `v` (scalar or array)."""
    v = np.asarray(v, dtype=float)
    blade = pp.profile_power * (1.0 + 3.0 * v * v / pp.tip_speed**2)
    induced = pp.induced_power * induced_speed_factor(v, pp)
    parasite = 0.5 * pp.parasite_coeff * np.abs(v) ** 3
    out = blade + induced + parasite
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=32)
def min_power_speed(pp: PropulsionParams, v_max: float) -> float:
    """Speed in [0, v_max] minimizing propulsion power (max-endurance speed)."""
    res = minimize_scalar(
        lambda v: propulsion_power(v, pp),
        bounds=(0.0, v_max),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return float(res.x)


def feasible_speed_intervals(
    slot_energy: float, dt: float, v_max: float, pp: PropulsionParams
) -> list[tuple[float, float]]:
    """Speeds in [0, v_max] whose slot energy fits within `slot_energy`.

    The power curve decreases to the max-endurance speed and increases
    beyond it, so the sublevel set is empty or a single interval.
    """
    cap = slot_energy / dt
    v_me = min_power_speed(pp, v_max)
    if propulsion_power(v_me, pp) > cap:
        return []
    if propulsion_power(0.0, pp) <= cap:
        lo = 0.0
    else:
        lo = brentq(lambda v: propulsion_power(v, pp) - cap, 0.0, v_me, xtol=1e-12)
    if propulsion_power(v_max, pp) <= cap:
        hi = v_max
    else:
        hi = brentq(lambda v: propulsion_power(v, pp) - cap, v_me, v_max, xtol=1e-12)
    return [(float(lo), float(hi))]


@dataclass(frozen=True)
class EnergyLedger:
    """Cumulative propulsion energy against the mission budget."""

    budget: float
    consumed: float = 0.0

    @property
    def remaining(self) -> float:
        return self.budget - self.consumed

    def charge(self, energy: float) -> "EnergyLedger":
        return EnergyLedger(budget=self.budget, consumed=self.consumed + energy)


def feasibility_gate(
    ledger: EnergyLedger, v_candidate: float, dt: float, e_backup: float, pp: PropulsionParams
) -> bool:
    """True when the candidate slot plus the backup bound fits the budget."""
    cost = ledger.consumed + propulsion_power(v_candidate, pp) * dt + e_backup
    return cost <= ledger.budget + _GATE_TOL


# ---------------------------------------------------------------------------
# Minimum-energy backup plan via successive convex approximation


@dataclass(frozen=True)
class BackupPlan:
    """A committed velocity profile reaching the final position.

    `e_upper` is the surrogate (slack-based) energy, an upper bound on the
    true energy `e_actual`; the feasibility gate consumes the bound so that
    committing to the plan can never overdraw the budget.
    """

    velocities: np.ndarray
    xi: np.ndarray  # induced-term slack per slot, >= exact factor
    slot_upper: np.ndarray  # per-slot surrogate energy (J)
    slot_actual: np.ndarray  # per-slot true energy (J)
    kkt_residual: float
    objective_trace: np.ndarray

    @property
    def e_upper(self) -> float:
        return float(self.slot_upper.sum())

    @property
    def e_actual(self) -> float:
        return float(self.slot_actual.sum())

    @property
    def num_slots(self) -> int:
        return len(self.velocities)

    def tail(self) -> "BackupPlan":
        """The plan with its first slot consumed."""
        if self.num_slots == 0:
            raise EnergyError("cannot take the tail of an empty plan")
        return BackupPlan(
            velocities=self.velocities[1:],
            xi=self.xi[1:],
            slot_upper=self.slot_upper[1:],
            slot_actual=self.slot_actual[1:],
            kkt_residual=self.kkt_residual,
            objective_trace=self.objective_trace,
        )


def backup_plan(
    start_pos: float,
    final_pos: float,
    slots: int,
    dt: float,
    v_max: float,
    pp: PropulsionParams,
) -> BackupPlan:
    """Minimum-energy velocity profile covering `final_pos - start_pos`.

    Runs the SCA from two starts, a constant-velocity profile and a
    max-endurance alternating profile (which beats hovering when the net
    displacement is small); the start reaching the lower bound wins.
    """
    disp = final_pos - start_pos
    reach = slots * v_max * dt
    if abs(disp) > reach * (1.0 + 1e-12) + 1e-9:
        raise BackupInfeasibleError(
            f"displacement {disp!r} m exceeds reach {reach!r} m over {slots} slots"
        )
    if slots == 0:
        empty = np.zeros(0)
        return BackupPlan(empty, empty, empty, empty, 0.0, np.zeros(1))

    disp = float(np.clip(disp, -reach, reach))
    base = disp / (slots * dt)
    starts = [np.full(slots, base)]
    v_me = min_power_speed(pp, v_max)
    if abs(base) < v_me:
        # The relaxed per-slot problem mixes the two power minima at +-v_me
        # with weights matching the mean velocity; round the positive count
        # to whole slots, interleave the signs, and absorb the remainder
        # evenly so the displacement is exact.
        k = int(np.rint(0.5 * (1.0 + base / v_me) * slots))
        k = min(max(k, 0), slots)
        signs = np.empty(slots)
        acc = 0
        for i in range(slots):
            acc += k
            if acc >= slots:
                acc -= slots
                signs[i] = 1.0
            else:
                signs[i] = -1.0
        v0 = signs * v_me
        v0 += (disp - v0.sum() * dt) / (slots * dt)
        starts.append(np.clip(v0, -v_max, v_max))

    best: BackupPlan | None = None
    for v0 in starts:
        plan = _sca_from_start(v0, disp, slots, dt, v_max, pp)
        if best is None or (plan.e_upper, plan.e_actual) < (best.e_upper, best.e_actual):
            best = plan
    return best


def _sca_from_start(
    v0: np.ndarray, disp: float, slots: int, dt: float, v_max: float, pp: PropulsionParams
) -> BackupPlan:
    v = v0.copy()
    xi = induced_speed_factor(v, pp)
    trace = [float(_surrogate_power(v, xi, pp).sum() * dt)]
    kkt = math.inf
    for _ in range(_SCA_MAX_ITERS):
        v, xi, kkt = _solve_subproblem(v, xi, disp, slots, dt, v_max, pp)
        trace.append(float(_surrogate_power(v, xi, pp).sum() * dt))
        if trace[-2] - trace[-1] <= _SCA_REL_DECREASE * (1.0 + abs(trace[-1])):
            break
    xi = np.maximum(xi, induced_speed_factor(v, pp))
    slot_upper = _surrogate_power(v, xi, pp) * dt
    slot_actual = propulsion_power(v, pp) * dt
    return BackupPlan(
        velocities=v,
        xi=xi,
        slot_upper=slot_upper,
        slot_actual=np.asarray(slot_actual, dtype=float),
        kkt_residual=kkt,
        objective_trace=np.array(trace),
    )


def _surrogate_power(v: np.ndarray, xi: np.ndarray, pp: PropulsionParams) -> np.ndarray:
    blade = pp.profile_power * (1.0 + 3.0 * v * v / pp.tip_speed**2)
    return blade + pp.induced_power * xi + 0.5 * pp.parasite_coeff * np.abs(v) ** 3


def _solve_subproblem(
    v_ref: np.ndarray,
    xi_ref: np.ndarray,
    disp: float,
    slots: int,
    dt: float,
    v_max: float,
    pp: PropulsionParams,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Exact solution of one convex SCA subproblem by dualizing the
    displacement equality.

    With the linearized induced constraint tight, the slack is the positive
    root of a cubic in closed form; per-slot stationarity is solved by a
    safeguarded Newton iteration and the single multiplier by Brent.
    """
    vh2 = pp.hover_induced_speed**2
    q_blade = 3.0 * pp.profile_power / pp.tip_speed**2
    kappa = -(xi_ref**2) - v_ref**2 / vh2
    rho = 2.0 * v_ref / vh2

    def xi_min(v: np.ndarray) -> np.ndarray:
        return _cubic_positive_root(2.0 * xi_ref, kappa + rho * v)

    def grad_v(v: np.ndarray, xi: np.ndarray) -> np.ndarray:
        dxi = -rho / (2.0 * (xi**-3 + xi_ref))
        return 2.0 * q_blade * v + 1.5 * pp.parasite_coeff * v * np.abs(v) + pp.induced_power * dxi

    def hess_v(v: np.ndarray, xi: np.ndarray) -> np.ndarray:
        denom = xi**-3 + xi_ref
        d2xi = 3.0 * rho**2 * xi**-4 / (4.0 * denom**3)
        return 2.0 * q_blade + 3.0 * pp.parasite_coeff * np.abs(v) + pp.induced_power * d2xi

    def best_velocities(s: float) -> np.ndarray:
        """argmin_v psi_l(v) + s*v on [-v_max, v_max], per slot."""
        lo = np.full(slots, -v_max)
        hi = np.full(slots, v_max)
        g_lo = grad_v(lo, xi_min(lo)) + s
        g_hi = grad_v(hi, xi_min(hi)) + s
        v = np.clip(v_ref, -v_max, v_max)
        for _ in range(60):
            xi = xi_min(v)
            g = grad_v(v, xi) + s
            hi = np.where(g > 0.0, v, hi)
            lo = np.where(g > 0.0, lo, v)
            step = g / hess_v(v, xi)
            v_newton = v - step
            inside = (v_newton > lo) & (v_newton < hi)
            v_next = np.where(inside, v_newton, 0.5 * (lo + hi))
            if np.max(np.abs(v_next - v)) <= 1e-14 * v_max:
                v = v_next
                break
            v = v_next
        v = np.where(g_lo >= 0.0, -v_max, v)
        v = np.where(g_hi <= 0.0, v_max, v)
        return v

    def residual(nu: float) -> float:
        return float(best_velocities(nu * dt).sum() * dt - disp)

    # Bracket the multiplier: beyond the gradient bound all slots pin at a bound.
    grad_bound = (
        2.0 * q_blade * v_max
        + 1.5 * pp.parasite_coeff * v_max**2
        + pp.induced_power * float(np.max(np.abs(rho) / (2.0 * xi_ref)))
        + 1.0
    )
    nu_hi = grad_bound / dt
    r_lo, r_hi = residual(-nu_hi), residual(nu_hi)
    if r_lo < -_DISPLACEMENT_TOL or r_hi > _DISPLACEMENT_TOL:
        raise EnergyError("subproblem displacement is outside the reachable range")
    if r_lo <= 0.0:
        nu = -nu_hi
    elif r_hi >= 0.0:
        nu = nu_hi
    else:
        nu = brentq(residual, -nu_hi, nu_hi, xtol=1e-13, rtol=8.9e-16, maxiter=200)

    v = best_velocities(nu * dt)
    # Push the leftover displacement mismatch into the interior slots.
    gap = disp - float(v.sum() * dt)
    interior = np.abs(v) < v_max * (1.0 - 1e-12)
    if abs(gap) > 0.0 and interior.any():
        v = v + np.where(interior, gap / (dt * interior.sum()), 0.0)
        v = np.clip(v, -v_max, v_max)
    xi = xi_min(v)

    kkt = _kkt_residual(v, xi, nu, disp, dt, v_max, grad_v)
    return v, xi, kkt


def _kkt_residual(v, xi, nu, disp, dt, v_max, grad_v) -> float:
    g = grad_v(v, xi) + nu * dt
    at_hi = v >= v_max * (1.0 - 1e-12)
    at_lo = v <= -v_max * (1.0 - 1e-12)
    stat = np.where(at_hi, np.maximum(0.0, g), np.where(at_lo, np.maximum(0.0, -g), np.abs(g)))
    scale = 1.0 + abs(nu) * dt
    feas = abs(float(v.sum() * dt) - disp)
    return float(max(stat.max() / scale if len(v) else 0.0, feas))


def _cubic_positive_root(lead: np.ndarray, c: np.ndarray) -> np.ndarray:
    """The unique positive root of lead*x^3 + c*x^2 - 1 = 0 (lead > 0).

    Closed-form (Cardano / trigonometric) with a couple of Newton polish
    steps; vectorized over slots.
    """
    a = c / lead
    k = 1.0 / lead
    p = -(a * a) / 3.0
    q = 2.0 * a**3 / 27.0 - k
    delta = q * q / 4.0 + p**3 / 27.0

    sq = np.sqrt(np.maximum(delta, 0.0))
    w_cardano = np.cbrt(-q / 2.0 + sq) + np.cbrt(-q / 2.0 - sq)

    with np.errstate(invalid="ignore", divide="ignore"):
        m = 2.0 * np.sqrt(np.maximum(-p / 3.0, 0.0))
        cos_arg = np.where(p < 0.0, 3.0 * q / np.where(p < 0.0, p * m, 1.0), 0.0)
        theta = np.arccos(np.clip(cos_arg, -1.0, 1.0))
        w_trig = m * np.cos(theta / 3.0)

    x = np.where(delta >= 0.0, w_cardano, w_trig) - a / 3.0
    x = np.maximum(x, 1e-12)
    for _ in range(3):
        f = lead * x**3 + c * x * x - 1.0
        df = 3.0 * lead * x * x + 2.0 * c * x
        x = np.maximum(x - f / np.where(np.abs(df) > 0.0, df, 1.0), 1e-12)
    return x


# ---------------------------------------------------------------------------
# Dynamic-programming oracle


def dp_oracle(
    start_pos: float,
    final_pos: float,
    slots: int,
    dt: float,
    v_max: float,
    pp: PropulsionParams,
    v_step: float = 0.05,
    d_step: float = 0.01,
) -> tuple[np.ndarray, float]:
    """Minimum plan energy on a discretized velocity/displacement grid.

    Independent of the SCA machinery: plain forward DP over cumulative
    displacement, O(slots * velocities * displacement states). Returns the
    optimal velocity profile together with its energy.
    """
    if slots == 0:
        if abs(final_pos - start_pos) > _DISPLACEMENT_TOL:
            raise BackupInfeasibleError("nonzero displacement with zero slots")
        return np.zeros(0), 0.0
    k_max = int(round(v_max / v_step))
    velocities = np.arange(-k_max, k_max + 1) * v_step
    shifts = np.rint(velocities * dt / d_step).astype(int)
    energies = propulsion_power(velocities, pp) * dt
    # Multiple velocities may land in one displacement bucket; keep the cheapest.
    order = np.argsort(energies)
    seen: dict[int, tuple[float, float]] = {}
    for idx in order:
        seen.setdefault(int(shifts[idx]), (float(energies[idx]), float(velocities[idx])))
    moves = sorted((s, e, v) for s, (e, v) in seen.items())

    radius = slots * max(abs(s) for s, _, _ in moves)
    n_states = 2 * radius + 1
    if slots * len(moves) * n_states > _DP_OP_LIMIT:
        raise EnergyError(
            f"DP grid too large: {slots} slots x {len(moves)} moves x {n_states} states"
        )
    target = int(round((final_pos - start_pos) / d_step))
    if abs(target) > radius:
        raise BackupInfeasibleError("displacement exceeds the DP grid reach")

    inf = np.inf
    layers = [np.full(n_states, inf)]
    layers[0][radius] = 0.0
    for _ in range(slots):
        cost = layers[-1]
        nxt = np.full(n_states, inf)
        for shift, e, _ in moves:
            if shift >= 0:
                np.minimum(nxt[shift:], cost[: n_states - shift] + e, out=nxt[shift:])
            else:
                np.minimum(nxt[:shift], cost[-shift:] + e, out=nxt[:shift])
        layers.append(nxt)
    result = layers[slots][radius + target]
    if not np.isfinite(result):
        raise BackupInfeasibleError("target displacement unreachable on the DP grid")

    # Backtrack: at each slot pick the move whose predecessor cost matches.
    plan = np.empty(slots)
    state = radius + target
    for layer in range(slots, 0, -1):
        best_gap, best_shift, best_v = inf, 0, 0.0
        for shift, e, v in moves:
            prev = state - shift
            if 0 <= prev < n_states:
                gap = layers[layer - 1][prev] + e - layers[layer][state]
                if gap < best_gap:
                    best_gap, best_shift, best_v = gap, shift, v
        plan[layer - 1] = best_v
        state -= best_shift
    return plan, float(result)
