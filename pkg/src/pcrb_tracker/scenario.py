"""Scenario configuration: radar/UAV constants, mission setup, derived quantities.

All quantities are SI (watts, meters, seconds, m/s). Power-like inputs that
are usually quoted in dBm (transmit power, noise floor) are stored in watts;
use :func:`dbm_to_watts` to convert quoted values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import yaml


class ScenarioError(ValueError):
    """Raised when a scenario document violates the schema or an invariant."""


def dbm_to_watts(dbm: float) -> float:
    """Convert a dBm power level to watts (e.g. 20 dBm -> 0.1 W)."""
    return 10.0 ** (dbm / 10.0) * 1e-3


@dataclass(frozen=True)
class SystemParams:
    """Radar sensing and platform constants.

    Attributes:
        profile_power: blade profile power in hover (W).
        induced_power: induced power in hover (W).
        tip_speed: rotor blade tip speed (m/s).
        hover_induced_speed: mean rotor induced velocity in hover (m/s).
        parasite_coeff: fuselage drag coefficient chi in 0.5*chi*|v|^3 (kg/m).
        tx_power: radar transmit power (W).
        matched_gain: matched-filter gain (number of integrated symbols).
        wavelength: carrier wavelength (m).
        noise_power: receiver noise power (W).
        n_tx: transmit antennas.
        n_rx: receive antennas.
        rcs: target radar cross-section (m^2).
        angle_noise_scale: bearing error scale a1 (rad, before SNR division).
        range_noise_scale: range error scale a2 (m).
        doppler_noise_scale: Doppler error scale a3 (Hz).
        altitude: UAV flight altitude above ground (m).
        q_intensity: process noise intensity of the target motion model.
    """

    profile_power: float = 79.8563
    induced_power: float = 88.6279
    tip_speed: float = 120.0
    hover_induced_speed: float = 4.03
    parasite_coeff: float = 0.0185
    tx_power: float = 0.1
    matched_gain: float = 1e4
    wavelength: float = 0.01
    noise_power: float = 1e-11
    n_tx: int = 16
    n_rx: int = 16
    rcs: float = 100.0
    angle_noise_scale: float = 0.1
    range_noise_scale: float = 10.0
    doppler_noise_scale: float = 2000.0
    altitude: float = 50.0
    q_intensity: float = 1.0


@dataclass(frozen=True)
class MissionSpec:
    """Mission geometry, horizon and budget.

    Attributes:
        start_pos: UAV start position x-coordinate (m).
        final_pos: required UAV position at the last slot (m).
        num_slots: number of decision slots N.
        slot_dt: slot duration (s).
        energy_budget: total propulsion energy budget (J).
        v_max: maximum UAV speed (m/s).
        alpha: weight on the position error bound in the objective, in [0, 1].
        target_speed: target initial (mean) velocity (m/s).
        target_start: target initial position (m).
    """

    start_pos: float = 0.0
    final_pos: float = 60.0
    num_slots: int = 50
    slot_dt: float = 0.2
    energy_budget: float = 1800.0
    v_max: float = 30.0
    alpha: float = 0.5
    target_speed: float = 10.0
    target_start: float = 60.0


@dataclass(frozen=True)
class EstimatorInit:
    """Initial filter covariance and the initial-estimate perturbation.

    The initial estimate is the true initial relative state plus a zero-mean
    Gaussian perturbation with the given standard deviations, so the filter
    starts near-converged.
    """

    pos_var0: float = 1.0
    vel_var0: float = 1.0
    pos_perturb_std: float = 1.0
    vel_perturb_std: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class DerivedConstants:
    """Quantities derived from SystemParams (not configurable directly).

    Attributes:
        channel_gain: reference channel gain at unit distance,
            wavelength^2 * rcs / (64 pi^3).
        snr_gain: SNR numerator n_tx * n_rx * tx_power * matched_gain *
            channel_gain / noise_power; the effective SNR at distance d
            is snr_gain / d^4.
    """

    channel_gain: float
    snr_gain: float


def derive_constants(p: SystemParams) -> DerivedConstants:
    """Compute the derived channel and SNR constants for params `p`."""
    channel_gain = p.wavelength**2 * p.rcs / (64.0 * math.pi**3)
    snr_gain = p.n_tx * p.n_rx * p.tx_power * p.matched_gain * channel_gain / p.noise_power
    return DerivedConstants(channel_gain=channel_gain, snr_gain=snr_gain)


@dataclass(frozen=True)
class Scenario:
    """A fully validated simulation scenario."""

    params: SystemParams = field(default_factory=SystemParams)
    mission: MissionSpec = field(default_factory=MissionSpec)
    estimator: EstimatorInit = field(default_factory=EstimatorInit)

    def __post_init__(self) -> None:
        _validate(self.params, self.mission, self.estimator)

    @property
    def derived(self) -> DerivedConstants:
        return derive_constants(self.params)

    def to_config_text(self) -> str:
        """Serialize to the flat key-value config format (YAML)."""
        doc = {}
        for section in (self.params, self.mission, self.estimator):
            for f in fields(section):
                doc[f.name] = getattr(section, f.name)
        return yaml.safe_dump(doc, sort_keys=True)


def _require(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ScenarioError(f"{key}: {msg}")


def _validate(p: SystemParams, m: MissionSpec, e: EstimatorInit) -> None:
    positive = [
        ("profile_power", p.profile_power),
        ("induced_power", p.induced_power),
        ("tip_speed", p.tip_speed),
        ("hover_induced_speed", p.hover_induced_speed),
        ("parasite_coeff", p.parasite_coeff),
        ("tx_power", p.tx_power),
        ("matched_gain", p.matched_gain),
        ("wavelength", p.wavelength),
        ("noise_power", p.noise_power),
        ("rcs", p.rcs),
        ("angle_noise_scale", p.angle_noise_scale),
        ("range_noise_scale", p.range_noise_scale),
        ("doppler_noise_scale", p.doppler_noise_scale),
        ("altitude", p.altitude),
        ("q_intensity", p.q_intensity),
        ("slot_dt", m.slot_dt),
        ("energy_budget", m.energy_budget),
        ("v_max", m.v_max),
        ("pos_var0", e.pos_var0),
        ("vel_var0", e.vel_var0),
    ]
    for key, val in positive:
        _require(val > 0.0, key, f"must be positive, got {val!r}")
    for key, val in (("n_tx", p.n_tx), ("n_rx", p.n_rx), ("num_slots", m.num_slots)):
        _require(isinstance(val, int) and val >= 1, key, f"must be a positive integer, got {val!r}")
    for key, val in (("pos_perturb_std", e.pos_perturb_std), ("vel_perturb_std", e.vel_perturb_std)):
        _require(val >= 0.0, key, f"must be non-negative, got {val!r}")
    _require(0.0 <= m.alpha <= 1.0, "alpha", f"must lie in [0, 1], got {m.alpha!r}")
    # The final position must be reachable within the horizon at v_max.
    reach = m.num_slots * m.v_max * m.slot_dt
    _require(
        abs(m.final_pos - m.start_pos) <= reach,
        "final_pos",
        f"unreachable: |final_pos - start_pos| = {abs(m.final_pos - m.start_pos)!r} "
        f"exceeds num_slots * v_max * slot_dt = {reach!r}",
    )


_SECTION_TYPES = (SystemParams, MissionSpec, EstimatorInit)
_KEY_TO_SECTION = {
    f.name: (cls, f) for cls in _SECTION_TYPES for f in fields(cls)
}


def load_scenario(text: str) -> Scenario:
    """Parse a flat key-value config document into a Scenario.

    Every key is optional and falls back to its default; unknown keys are
    rejected. An empty document yields the default scenario.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"config does not parse: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ScenarioError(f"config must be a flat key-value mapping, got {type(doc).__name__}")

    section_kwargs: dict[type, dict] = {cls: {} for cls in _SECTION_TYPES}
    for key, val in doc.items():
        if key not in _KEY_TO_SECTION:
            raise ScenarioError(f"unknown config key: {key!r}")
        cls, f = _KEY_TO_SECTION[key]
        if f.type in ("int", int):
            if not isinstance(val, int) or isinstance(val, bool):
                raise ScenarioError(f"{key}: must be an integer, got {val!r}")
        else:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ScenarioError(f"{key}: must be a number, got {val!r}")
            val = float(val)
        section_kwargs[cls][key] = val

    return Scenario(
        params=SystemParams(**section_kwargs[SystemParams]),
        mission=MissionSpec(**section_kwargs[MissionSpec]),
        estimator=EstimatorInit(**section_kwargs[EstimatorInit]),
    )
