"""Fisher information and the predicted error-bound objective.

For a candidate predicted state the posterior information matrix is the
measurement information plus the inverse predicted covariance. Its inverse
diagonal gives the position/velocity error bounds; the planner minimizes
their convex combination. Closed-form Fisher terms below must match the
matrix product J = H^T Qm^-1 H + Mp^-1 exactly; a matrix-built oracle in
the tests holds them to that.

The whole objective is a ratio of two polynomials in the candidate
position once the candidate velocity is substituted as an affine function
of it; `build_ratio_polys` performs that lift by clearing the (H^2+x^2)
denominators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import RelativeState
from .polyopt import Polynomial, RatioPolys, poly_add, poly_multiply, poly_scale
from .scenario import Scenario

# Conventions for reading the error bounds off the information matrix. The
# matrix-consistent reading takes the true inverse diagonal (position bound
# carries Fv in the numerator); the alternative keeps the numerators as
# printed in some references, i.e. swapped.
MATRIX_CONSISTENT = "matrix-consistent"
SWAPPED_NUMERATORS = "swapped-numerators"
_CONVENTIONS = (MATRIX_CONSISTENT, SWAPPED_NUMERATORS)

# Test-only fault injection: scales the bearing information term so the
# selftest can prove its oracle comparison actually bites. Leave at 1.0.
_MUTATION_HOOK = {"bearing_term_scale": 1.0}


class PcrbError(ValueError):
    """Raised for invalid convention names or non-PD prior covariances."""


@dataclass(frozen=True)
class SensingConstants:
    """The constants entering the Fisher terms."""

    snr_gain: float
    altitude: float
    wavelength: float
    a1: float
    a2: float
    a3: float

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "SensingConstants":
        p = scenario.params
        return cls(
            snr_gain=scenario.derived.snr_gain,
            altitude=p.altitude,
            wavelength=p.wavelength,
            a1=p.angle_noise_scale,
            a2=p.range_noise_scale,
            a3=p.doppler_noise_scale,
        )


@dataclass(frozen=True)
class FisherTerms:
    """Entries of the 2x2 posterior information matrix at a candidate state."""

    fx: float  # position information
    fv: float  # velocity information
    det: float  # determinant of the full matrix
    prior_info: np.ndarray  # Mp^-1, 2x2


@dataclass(frozen=True)
class PcrbPair:
    pos: float  # m^2
    vel: float  # (m/s)^2


def _term_coeffs(sc: SensingConstants) -> tuple[float, float, float, float, float]:
    h2 = sc.altitude * sc.altitude
    g = sc.snr_gain
    bearing = _MUTATION_HOOK["bearing_term_scale"] * h2 * h2 * g / (sc.a1 * sc.a1)
    rng = g / (sc.a2 * sc.a2)
    lam2 = sc.wavelength * sc.wavelength
    dop_x = 4.0 * h2 * h2 * g / (sc.a3 * sc.a3 * lam2)
    dop_v = 4.0 * g / (sc.a3 * sc.a3 * lam2)
    dop_cross = 4.0 * h2 * g / (sc.a3 * sc.a3 * lam2)
    return bearing, rng, dop_x, dop_v, dop_cross


def _prior_info(pred_cov: np.ndarray) -> np.ndarray:
    det = pred_cov[0, 0] * pred_cov[1, 1] - pred_cov[0, 1] * pred_cov[1, 0]
    if det <= 0.0 or pred_cov[0, 0] <= 0.0:
        raise PcrbError(f"predicted covariance is not positive definite (det {det!r})")
    return (
        np.array([[pred_cov[1, 1], -pred_cov[0, 1]], [-pred_cov[1, 0], pred_cov[0, 0]]]) / det
    )


def fisher_terms(xbreve: RelativeState, pred_cov: np.ndarray, sc: SensingConstants) -> FisherTerms:
    """Closed-form information entries at a candidate predicted state."""
    bearing, rng, dop_x, dop_v, dop_cross = _term_coeffs(sc)
    r = _prior_info(pred_cov)
    x, v = xbreve.x, xbreve.v
    d2 = sc.altitude * sc.altitude + x * x
    d6 = d2 * d2 * d2
    d8 = d6 * d2
    d10 = d8 * d2
    fx = bearing / d10 + rng * x * x / d6 + dop_x * v * v / d10 + r[0, 0]
    fv = dop_v * x * x / d6 + r[1, 1]
    cross_meas = dop_cross * v * x / d8
    det = fx * fv - (r[0, 1] + cross_meas) * (r[1, 0] + cross_meas)
    return FisherTerms(fx=fx, fv=fv, det=det, prior_info=r)


def predicted_pcrb(ft: FisherTerms, convention: str = MATRIX_CONSISTENT) -> PcrbPair:
    """Position/velocity error bounds from the information entries."""
    if convention not in _CONVENTIONS:
        raise PcrbError(f"unknown convention {convention!r}; expected one of {_CONVENTIONS}")
    if convention == MATRIX_CONSISTENT:
        return PcrbPair(pos=ft.fv / ft.det, vel=ft.fx / ft.det)
    return PcrbPair(pos=ft.fx / ft.det, vel=ft.fv / ft.det)


def weighted_objective(pair: PcrbPair, alpha: float) -> float:
    return alpha * pair.pos + (1.0 - alpha) * pair.vel


def build_ratio_polys(
    xhat_prev: float,
    dt: float,
    pred_cov: np.ndarray,
    sc: SensingConstants,
    alpha: float,
    convention: str = MATRIX_CONSISTENT,
) -> RatioPolys:
    """Lift the weighted objective to a polynomial fraction b/a.

    The candidate velocity is the affine map v(x) = (x - xhat_prev) / dt;
    multiplying through by (H^2 + x^2)^8 clears every denominator, leaving
    a = det * lift and b = weighted-numerator * lift, both of degree <= 16
    and positive wherever the determinant is.
    """
    if convention not in _CONVENTIONS:
        raise PcrbError(f"unknown convention {convention!r}; expected one of {_CONVENTIONS}")
    bearing, rng, dop_x, dop_v, dop_cross = _term_coeffs(sc)
    r = _prior_info(pred_cov)
    h2 = sc.altitude * sc.altitude

    u = Polynomial([h2, 0.0, 1.0])  # H^2 + x^2
    u2 = poly_multiply(u, u)
    u3 = poly_multiply(u2, u)
    u4 = poly_multiply(u2, u2)
    u5 = poly_multiply(u4, u)
    x = Polynomial([0.0, 1.0])
    x2 = Polynomial([0.0, 0.0, 1.0])
    vline = Polynomial([-xhat_prev / dt, 1.0 / dt])
    v2 = poly_multiply(vline, vline)

    # fx * (H^2+x^2)^5 and fv * (H^2+x^2)^3
    fx_lift = poly_add(
        poly_add(Polynomial([bearing]), poly_scale(poly_multiply(x2, u2), rng)),
        poly_add(poly_scale(v2, dop_x), poly_scale(u5, r[0, 0])),
    )
    fv_lift = poly_add(poly_scale(x2, dop_v), poly_scale(u3, r[1, 1]))
    # (r12 + cross) * (H^2+x^2)^4, one per off-diagonal entry
    vx = poly_multiply(vline, x)
    cross_a = poly_add(poly_scale(u4, r[0, 1]), poly_scale(vx, dop_cross))
    cross_b = poly_add(poly_scale(u4, r[1, 0]), poly_scale(vx, dop_cross))

    a = poly_add(poly_multiply(fx_lift, fv_lift), poly_scale(poly_multiply(cross_a, cross_b), -1.0))
    if convention == MATRIX_CONSISTENT:
        b = poly_add(
            poly_scale(poly_multiply(fv_lift, u5), alpha),
            poly_scale(poly_multiply(fx_lift, u3), 1.0 - alpha),
        )
    else:
        b = poly_add(
            poly_scale(poly_multiply(fx_lift, u3), alpha),
            poly_scale(poly_multiply(fv_lift, u5), 1.0 - alpha),
        )
    return RatioPolys(a=a, b=b)
