"""Relative target kinematics and the radar measurement model.

The tracked state is the target position/velocity relative to the UAV along
the flight axis. A constant-velocity model with white acceleration noise
drives the target; UAV maneuvers enter as a known control input on the
relative state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RelativeState:
    """Relative kinematics: target minus UAV, along-track."""

    x: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.v])


@dataclass(frozen=True)
class UavMotion:
    """UAV own position and velocity at the end of a slot."""

    pos: float
    vel: float


@dataclass(frozen=True)
class Observables:
    """Noise-free radar observables of a relative state."""

    bearing: float  # rad, in (0, pi)
    range: float  # m, slant range
    doppler: float  # Hz

    def as_array(self) -> np.ndarray:
        return np.array([self.bearing, self.range, self.doppler])


def transition_matrix(dt: float) -> np.ndarray:
    """Constant-velocity transition matrix [[1, dt], [0, 1]]."""
    return np.array([[1.0, dt], [0.0, 1.0]])


def process_noise_cov(dt: float, q_intensity: float) -> np.ndarray:
    """Integrated white-acceleration noise covariance for one slot."""
    return q_intensity * np.array(
        [[dt**3 / 3.0, dt**2 / 2.0], [dt**2 / 2.0, dt]]
    )


def evolve_relative(
    prev: RelativeState, u_delta_v: float, dt: float, noise: np.ndarray
) -> RelativeState:
    """Advance the relative state one slot.

    `u_delta_v` is the UAV velocity change v_A,n - v_A,n-1; it shifts both
    the relative position (through the position the UAV gains in the slot)
    and the relative velocity. `noise` is a process noise draw, 2-vector.
    """
    x = prev.x + dt * prev.v - u_delta_v * dt + float(noise[0])
    v = prev.v - u_delta_v + float(noise[1])
    return RelativeState(x=x, v=v)


def observables(rel: RelativeState, altitude: float, wavelength: float) -> Observables:
    """Map a relative state to (bearing, range, Doppler).

    Bearing is measured from the positive x-axis to the line of sight down
    to the UAV altitude, so it stays in (0, pi) and never wraps.
    """
    d = math.hypot(altitude, rel.x)
    phi = math.atan2(altitude, rel.x)
    mu = -2.0 * rel.v * rel.x / (wavelength * d)
    return Observables(bearing=phi, range=d, doppler=mu)


def meas_noise_vars(
    rel: RelativeState,
    snr_gain: float,
    altitude: float,
    a1: float,
    a2: float,
    a3: float,
) -> np.ndarray:
    """Measurement noise variances (bearing, range, Doppler) at a state.

    The effective SNR decays with the fourth power of slant range; the
    bearing variance additionally degrades toward grazing geometry through
    the 1/sin^2 factor.
    """
    d2 = altitude * altitude + rel.x * rel.x
    snr_eff = snr_gain / (d2 * d2)
    sin2 = altitude * altitude / d2
    return np.array(
        [
            a1 * a1 / (snr_eff * sin2),
            a2 * a2 / snr_eff,
            a3 * a3 / snr_eff,
        ]
    )


def synth_measurement(
    rel: RelativeState,
    altitude: float,
    wavelength: float,
    noise_vars: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw a noisy measurement vector at the true relative state.

    Deterministic given the generator's stream position: consumes exactly
    three standard normal draws.
    """
    clean = observables(rel, altitude, wavelength).as_array()
    return clean + np.sqrt(np.asarray(noise_vars)) * rng.standard_normal(3)
