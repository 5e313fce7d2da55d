"""Extended Kalman filter for the relative target state.

The filter tracks a 2-state (position, velocity) relative model with the
nonlinear radar observation (bearing, range, Doppler). The covariance
update is computed in both gain form and information form; the two must
agree, and the information form is stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import RelativeState, observables, transition_matrix

_DET_GUARD = 1e-300
_COND_LIMIT = 1e12
_FORM_AGREEMENT_RTOL = 1e-8


class EkfNumericsError(RuntimeError):
    """Raised when an update is numerically untrustworthy."""


@dataclass(frozen=True)
class Belief:
    """Posterior state estimate and covariance after a measurement update."""

    xhat: np.ndarray  # shape (2,)
    cov: np.ndarray  # shape (2, 2)


@dataclass(frozen=True)
class Prediction:
    """Prior estimate and covariance after the motion step."""

    xbreve: np.ndarray  # shape (2,)
    cov: np.ndarray  # shape (2, 2), M_pred


def predict(prev: Belief, u_delta_v: float, dt: float, process_cov: np.ndarray) -> Prediction:
    """Propagate the belief one slot with known UAV velocity change."""
    g = transition_matrix(dt)
    u = np.array([u_delta_v * dt, u_delta_v])
    xbreve = g @ prev.xhat - u
    cov = g @ prev.cov @ g.T + process_cov
    return Prediction(xbreve=xbreve, cov=_symmetrize(cov))


def jacobian(xbreve: RelativeState, altitude: float, wavelength: float) -> np.ndarray:
    """Observation Jacobian (rows: bearing, range, Doppler; cols: x, v).

    Bearing decreases as the target moves out along +x, hence the negative
    x-derivative; bearing and range carry no velocity information.
    """
    x, v = xbreve.x, xbreve.v
    d2 = altitude * altitude + x * x
    d = np.sqrt(d2)
    return np.array(
        [
            [-altitude / d2, 0.0],
            [x / d, 0.0],
            [-2.0 * v * altitude * altitude / (wavelength * d * d2), -2.0 * x / (wavelength * d)],
        ]
    )


def update(
    pred: Prediction,
    y: np.ndarray,
    noise_vars: np.ndarray,
    altitude: float,
    wavelength: float,
) -> Belief:
    """Measurement update at the predicted state.

    Returns the posterior belief; raises EkfNumericsError when the
    innovation covariance is near-singular or the two covariance forms
    disagree beyond tolerance.
    """
    xb = RelativeState(x=float(pred.xbreve[0]), v=float(pred.xbreve[1]))
    h = jacobian(xb, altitude, wavelength)
    r = np.asarray(noise_vars, dtype=float)
    innov_cov = h @ pred.cov @ h.T + np.diag(r)
    cond = np.linalg.cond(innov_cov)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise EkfNumericsError(f"near-singular innovation covariance (cond ~ {cond:.3e})")

    gain = pred.cov @ h.T @ np.linalg.inv(innov_cov)
    innovation = np.asarray(y, dtype=float) - observables(xb, altitude, wavelength).as_array()
    xhat = pred.xbreve + gain @ innovation

    cov_gain = (np.eye(2) - gain @ h) @ pred.cov
    info = h.T @ np.diag(1.0 / r) @ h + _inv2(pred.cov)
    cov_info = _inv2(info)

    scale = max(np.abs(cov_info).max(), np.abs(cov_gain).max())
    if np.abs(cov_info - cov_gain).max() > _FORM_AGREEMENT_RTOL * scale:
        raise EkfNumericsError(
            "gain-form and information-form covariances disagree: "
            f"max diff {np.abs(cov_info - cov_gain).max():.3e} vs scale {scale:.3e}"
        )
    return Belief(xhat=xhat, cov=_symmetrize(cov_info))


def _inv2(m: np.ndarray) -> np.ndarray:
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) < _DET_GUARD:
        raise EkfNumericsError(f"2x2 inverse: determinant {det!r} below guard")
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return (m + m.T) / 2.0
