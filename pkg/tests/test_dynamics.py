"""Kinematics and measurement model against closed-form and integral oracles."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from pcrb_tracker.dynamics import (
    RelativeState,
    evolve_relative,
    meas_noise_vars,
    observables,
    process_noise_cov,
    synth_measurement,
    transition_matrix,
)


def test_transition_matrix_form():
    f = transition_matrix(0.2)
    assert np.array_equal(f, [[1.0, 0.2], [0.0, 1.0]])


def test_process_noise_cov_matches_integral_oracle():
    """Q must equal the integrated white-acceleration covariance.

    For the constant-velocity model the exact covariance is
    q * integral_0^dt [tau, 1]^T [tau, 1] dtau, evaluated here by quadrature
    so the closed form is checked against something it was not copied from.
    """
    for dt, q in [(0.2, 1.0), (0.5, 0.3), (1.7, 2.5)]:
        oracle = np.empty((2, 2))
        oracle[0, 0] = quad(lambda s: s * s, 0.0, dt)[0]
        oracle[0, 1] = oracle[1, 0] = quad(lambda s: s, 0.0, dt)[0]
        oracle[1, 1] = quad(lambda s: 1.0, 0.0, dt)[0]
        np.testing.assert_allclose(process_noise_cov(dt, q), q * oracle, rtol=1e-12)


def test_process_noise_cov_positive_definite():
    q = process_noise_cov(0.2, 1.0)
    assert np.all(np.linalg.eigvalsh(q) > 0.0)


def test_evolve_relative_control_shift():
    prev = RelativeState(x=40.0, v=8.0)
    nxt = evolve_relative(prev, u_delta_v=3.0, dt=0.2, noise=np.zeros(2))
    # The platform gains u*dt of position and u of velocity on the target.
    assert nxt.x == pytest.approx(40.0 + 0.2 * 8.0 - 3.0 * 0.2, abs=1e-15)
    assert nxt.v == pytest.approx(8.0 - 3.0, abs=1e-15)


def test_evolve_relative_additive_noise():
    prev = RelativeState(x=1.0, v=1.0)
    base = evolve_relative(prev, 0.0, 0.2, np.zeros(2))
    noisy = evolve_relative(prev, 0.0, 0.2, np.array([0.3, -0.7]))
    assert noisy.x - base.x == pytest.approx(0.3, abs=1e-15)
    assert noisy.v - base.v == pytest.approx(-0.7, abs=1e-15)


def test_observables_symmetric_geometry():
    obs = observables(RelativeState(x=50.0, v=4.0), altitude=50.0, wavelength=0.01)
    assert obs.bearing == pytest.approx(math.pi / 4.0, rel=1e-14)
    assert obs.range == pytest.approx(50.0 * math.sqrt(2.0), rel=1e-14)
    assert obs.doppler == pytest.approx(
        -2.0 * 4.0 * 50.0 / (0.01 * 50.0 * math.sqrt(2.0)), rel=1e-14
    )


def test_observables_ranges_and_signs():
    rng = np.random.default_rng(101)
    for _ in range(200):
        x = rng.uniform(-500.0, 500.0)
        v = rng.uniform(-40.0, 40.0)
        obs = observables(RelativeState(x=x, v=v), altitude=50.0, wavelength=0.01)
        assert 0.0 < obs.bearing < math.pi
        assert obs.range >= 50.0
        # Closing geometry (v*x < 0) gives positive Doppler.
        if v * x != 0.0:
            assert np.sign(obs.doppler) == -np.sign(v * x)


def test_observables_behind_geometry():
    obs = observables(RelativeState(x=-50.0, v=0.0), altitude=50.0, wavelength=0.01)
    assert obs.bearing == pytest.approx(3.0 * math.pi / 4.0, rel=1e-14)


def test_meas_noise_vars_manual_substitution(scenario):
    p = scenario.params
    g = scenario.derived.snr_gain
    rel = RelativeState(x=50.0, v=0.0)
    d2 = p.altitude**2 + rel.x**2
    snr_eff = g / d2**2
    manual = np.array(
        [
            p.angle_noise_scale**2 * d2 / (snr_eff * p.altitude**2),
            p.range_noise_scale**2 / snr_eff,
            p.doppler_noise_scale**2 / snr_eff,
        ]
    )
    got = meas_noise_vars(
        rel, g, p.altitude, p.angle_noise_scale, p.range_noise_scale, p.doppler_noise_scale
    )
    np.testing.assert_allclose(got, manual, rtol=1e-12)
    # Range variance at the 45-degree point is about 1.94e-2 m^2.
    assert got[1] == pytest.approx(1.94e-2, rel=0.02)


def test_meas_noise_quartic_range_decay(scenario):
    p = scenario.params
    g = scenario.derived.snr_gain
    near = meas_noise_vars(RelativeState(0.0, 0.0), g, 50.0, 0.1, 10.0, 2000.0)
    x_far = math.sqrt(100.0**2 - 50.0**2)  # slant range doubles
    far = meas_noise_vars(RelativeState(x_far, 0.0), g, 50.0, 0.1, 10.0, 2000.0)
    assert far[1] / near[1] == pytest.approx(16.0, rel=1e-12)
    assert far[2] / near[2] == pytest.approx(16.0, rel=1e-12)


def test_bearing_noise_grazing_blowup(scenario):
    g = scenario.derived.snr_gain
    steep = meas_noise_vars(RelativeState(0.0, 0.0), g, 50.0, 0.1, 10.0, 2000.0)
    grazing = meas_noise_vars(RelativeState(500.0, 0.0), g, 50.0, 0.1, 10.0, 2000.0)
    d2_ratio = (50.0**2 + 500.0**2) / 50.0**2
    # var1 scales as d^4 / sin^2(phi) = d^6 / H^2.
    assert grazing[0] / steep[0] == pytest.approx(d2_ratio**3, rel=1e-12)


def test_synth_measurement_consumes_three_draws():
    rel = RelativeState(x=40.0, v=9.0)
    noise_vars = np.array([1e-4, 2e-2, 30.0])
    y = synth_measurement(rel, 50.0, 0.01, noise_vars, np.random.default_rng(55))

    shadow = np.random.default_rng(55)
    clean = observables(rel, 50.0, 0.01).as_array()
    manual = clean + np.sqrt(noise_vars) * shadow.standard_normal(3)
    np.testing.assert_array_equal(y, manual)

    # The generator must advance by exactly three standard normals.
    live = np.random.default_rng(55)
    synth_measurement(rel, 50.0, 0.01, noise_vars, live)
    assert live.standard_normal() == shadow.standard_normal()


def test_synth_measurement_zero_noise_is_exact():
    rel = RelativeState(x=-20.0, v=3.0)
    y = synth_measurement(rel, 50.0, 0.01, np.zeros(3), np.random.default_rng(1))
    np.testing.assert_array_equal(y, observables(rel, 50.0, 0.01).as_array())
