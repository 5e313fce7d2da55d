"""Univariate polynomial optimization on an interval.

Three cooperating solvers live here:

* a companion-matrix root oracle (exact stationary points of the normalized
  polynomial, interval endpoints included),
* a truncated-moment semidefinite relaxation whose optimal first moment is
  the minimizer whenever the optimal moment matrix is rank one,
* a Dinkelbach iteration that reduces a polynomial fractional objective to a
  sequence of such interval minimizations.

Every solver maps its interval affinely onto [-1, 1] first; raw moments of
coordinates of magnitude ~100 raised to the 17th power would otherwise ruin
the conditioning of the moment matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MAX_DEGREE = 32
MOMENT_COUNT = 17  # moments t_1 .. t_17; t_0 == 1 is implicit
HANKEL_SIZE = 9

_IMAG_ROOT_TOL = 1e-8
_ROOT_MERGE_TOL = 1e-10
_EXTRACTION_RTOL = 1e-6
_BACKEND_ACCURACY = 1e-7


class PolyoptError(RuntimeError):
    """Base error for polynomial-optimization failures."""


class DegreeOverflowError(PolyoptError):
    """Product degree exceeded the supported cap."""


class SdpError(PolyoptError):
    """The SDP backend reported an impossible status for a moment problem."""


class SdpAccuracyError(SdpError):
    """The SDP backend finished below the required accuracy."""


class DivergenceError(PolyoptError):
    """The Dinkelbach value decreased: the inner solver is returning garbage."""


# ---------------------------------------------------------------------------
# Polynomial arithmetic


@dataclass(frozen=True)
class Polynomial:
    """Dense univariate polynomial, coefficients in ascending order.

    Trailing zero coefficients are trimmed on construction; the zero
    polynomial is stored as a single zero coefficient.
    """

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise PolyoptError("coefficients must form a non-empty 1-d array")
        if not np.all(np.isfinite(c)):
            raise PolyoptError("coefficients must be finite")
        nz = np.nonzero(c)[0]
        c = c[: nz[-1] + 1] if nz.size else c[:1]
        object.__setattr__(self, "coeffs", c.copy())

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1


def poly_eval(p: Polynomial, x):
    """Evaluate with Horner's scheme; `x` may be a scalar or an array."""
    x = np.asarray(x, dtype=float)
    acc = np.full(x.shape, p.coeffs[-1])
    for c in p.coeffs[-2::-1]:
        acc = acc * x + c
    return float(acc) if acc.ndim == 0 else acc


def poly_derivative(p: Polynomial) -> Polynomial:
    if p.degree == 0:
        return Polynomial(np.zeros(1))
    return Polynomial(p.coeffs[1:] * np.arange(1, len(p.coeffs)))


def poly_multiply(p: Polynomial, q: Polynomial) -> Polynomial:
    deg = p.degree + q.degree
    if deg > MAX_DEGREE:
        raise DegreeOverflowError(f"product degree {deg} exceeds cap {MAX_DEGREE}")
    return Polynomial(np.convolve(p.coeffs, q.coeffs))


def poly_add(p: Polynomial, q: Polynomial) -> Polynomial:
    n = max(len(p.coeffs), len(q.coeffs))
    c = np.zeros(n)
    c[: len(p.coeffs)] += p.coeffs
    c[: len(q.coeffs)] += q.coeffs
    return Polynomial(c)


def poly_scale(p: Polynomial, s: float) -> Polynomial:
    return Polynomial(p.coeffs * s)


def compose_affine(p: Polynomial, scale: float, shift: float) -> Polynomial:
    """Return q with q(u) = p(scale * u + shift), via Horner on polynomials."""
    lin = np.array([shift, scale])
    acc = np.array([p.coeffs[-1]])
    for c in p.coeffs[-2::-1]:
        acc = np.convolve(acc, lin)
        acc[0] += c
    return Polynomial(acc)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise PolyoptError("interval endpoints must be finite")
        if self.lo > self.hi:
            raise PolyoptError(f"empty interval: lo {self.lo!r} > hi {self.hi!r}")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)


# ---------------------------------------------------------------------------
# Companion-matrix minimization oracle


def minimize_on_interval(p: Polynomial, iv: Interval) -> tuple[float, float]:
    """Global minimum of `p` on `iv` via stationary points of the derivative.

    The interval is mapped onto [-1, 1]; derivative roots are the
    eigenvalues of the companion matrix of the monic derivative. Roots with
    |imag| < 1e-8 are kept, clamped to the interval, merged within 1e-10,
    and compared together with the endpoints.
    """
    if iv.lo == iv.hi:
        return iv.lo, poly_eval(p, iv.lo)
    scale, shift = iv.width / 2.0, iv.mid
    pn = compose_affine(p, scale, shift)
    candidates = [-1.0, 1.0]
    deriv = poly_derivative(pn)
    if deriv.degree >= 1:
        monic = deriv.coeffs / deriv.coeffs[-1]
        roots = np.linalg.eigvals(_companion(monic))
        real = np.sort(roots[np.abs(roots.imag) < _IMAG_ROOT_TOL].real)
        merged: list[float] = []
        for r in real:
            if not merged or r - merged[-1] > _ROOT_MERGE_TOL:
                merged.append(float(r))
        candidates.extend(np.clip(merged, -1.0, 1.0))
    candidates = np.array(sorted(candidates))
    values = poly_eval(pn, candidates)
    u = float(candidates[int(np.argmin(values))])
    # the affine map can wander a last-place unit past the endpoints
    x = min(max(scale * u + shift, iv.lo), iv.hi)
    return x, float(poly_eval(p, x))


def _companion(monic: np.ndarray) -> np.ndarray:
    n = len(monic) - 1
    c = np.zeros((n, n))
    c[1:, :-1] = np.eye(n - 1)
    c[:, -1] = -monic[:-1]
    return c


# ---------------------------------------------------------------------------
# Truncated moment vector and the Hankel pair


@dataclass(frozen=True)
class MomentVector:
    """Moments t_1 .. t_17 of a probability measure (t_0 = 1 implicit)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (MOMENT_COUNT,):
            raise PolyoptError(f"moment vector must have shape ({MOMENT_COUNT},)")
        object.__setattr__(self, "values", v.copy())

    @classmethod
    def dirac(cls, x: float) -> "MomentVector":
        return cls(np.power(x, np.arange(1, MOMENT_COUNT + 1, dtype=float)))


def hankel_pair(t: MomentVector) -> tuple[np.ndarray, np.ndarray]:
    """Hankel matrices (L, M) of the moment sequence.

    L[i, j] = t_{i+j} with t_0 = 1; M[i, j] = t_{i+j+1}; both 9x9. A measure
    supported on [lo, hi] satisfies hi*L >= M >= lo*L in the PSD order.
    """
    full = np.concatenate(([1.0], t.values))
    idx = np.arange(HANKEL_SIZE)
    return full[idx[:, None] + idx[None, :]], full[idx[:, None] + idx[None, :] + 1]


# ---------------------------------------------------------------------------
# SDP backend interface


@dataclass(frozen=True)
class SdpSolution:
    """Raw backend output for one solve."""

    x: np.ndarray
    status: str
    objective: float
    primal_residual: float
    relative_gap: float | None

    @property
    def converged(self) -> bool:
        """Accuracy-based: the reported residual and gap decide, not the label."""
        gap_ok = self.relative_gap is not None and self.relative_gap <= _BACKEND_ACCURACY
        return (
            bool(np.all(np.isfinite(self.x)))
            and self.primal_residual <= _BACKEND_ACCURACY
            and gap_ok
        )


class SdpBackend:
    """Interface for linear-cost SDPs with affine PSD constraints.

    A problem is min c.x subject to const_k + sum_q x_q coeff_k[q] >= 0
    (PSD) for each block k.
    """

    def solve(
        self, cost: np.ndarray, blocks: Sequence[tuple[np.ndarray, np.ndarray]]
    ) -> SdpSolution:
        raise NotImplementedError


class CvxoptSdpBackend(SdpBackend):
    """Interior-point backend on cvxopt's semidefinite cone."""

    def __init__(self, options: dict | None = None):
        self._options = {
            "show_progress": False,
            "abstol": 1e-9,
            "reltol": 1e-9,
            "feastol": 1e-9,
            "maxiters": 200,
        }
        if options:
            self._options.update(options)

    def solve(self, cost, blocks):
        from cvxopt import matrix, solvers

        n = len(cost)
        gs, hs = [], []
        for const, coeff in blocks:
            size = const.shape[0]
            g = np.empty((size * size, n))
            for q in range(n):
                g[:, q] = -coeff[q].reshape(size * size)
            gs.append(matrix(g))
            hs.append(matrix(np.asarray(const, dtype=float)))
        try:
            sol = solvers.sdp(
                matrix(np.asarray(cost, dtype=float)), Gs=gs, hs=hs, options=self._options
            )
        except (ArithmeticError, ValueError) as exc:
            # cvxopt's interior point can die mid-iteration on degenerate
            # data; report it as a non-converged solve instead of crashing.
            return SdpSolution(
                x=np.full(n, np.nan),
                status=f"solver exception: {exc}",
                objective=float("nan"),
                primal_residual=np.inf,
                relative_gap=None,
            )
        status = sol["status"]
        x = np.array(sol["x"]).ravel() if sol["x"] is not None else np.full(n, np.nan)
        pobj = sol["primal objective"] if sol["primal objective"] is not None else np.nan
        dobj = sol["dual objective"] if sol["dual objective"] is not None else pobj
        pres = sol["primal infeasibility"]
        # cvxopt's own "relative gap" divides by |pobj| alone, which blows up
        # for near-zero optima; normalize the duality gap DIMACS-style.
        relgap = sol["relative gap"]
        if sol["gap"] is not None and np.isfinite(pobj):
            relgap = sol["gap"] / max(1.0, abs(pobj), abs(dobj))
        return SdpSolution(
            x=x,
            status=status,
            objective=float(pobj),
            primal_residual=float(pres) if pres is not None else np.inf,
            relative_gap=float(relgap) if relgap is not None else None,
        )


def default_sdp_backend() -> SdpBackend | None:
    """The preferred available backend, or None when no solver is importable."""
    try:
        import cvxopt  # noqa: F401
    except ImportError:
        return None
    return CvxoptSdpBackend()


# ---------------------------------------------------------------------------
# Moment relaxation for interval minimization


def _moment_blocks() -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    a_l = np.zeros((MOMENT_COUNT + 1, HANKEL_SIZE, HANKEL_SIZE))
    a_m = np.zeros((MOMENT_COUNT + 1, HANKEL_SIZE, HANKEL_SIZE))
    for i in range(HANKEL_SIZE):
        for j in range(HANKEL_SIZE):
            a_l[i + j, i, j] = 1.0
            a_m[i + j + 1, i, j] = 1.0
    const = a_l[0]
    upper = a_l[1:] - a_m[1:]  # (1)L - M  >= 0  for the interval top at +1
    lower = a_l[1:] + a_m[1:]  # M - (-1)L >= 0  for the interval bottom at -1
    return (const, upper), (const, lower)


_MOMENT_BLOCKS = _moment_blocks()


@dataclass(frozen=True)
class MomentSdpResult:
    t: MomentVector
    x_star: float
    objective: float
    used_fallback: bool = False
    diagnostic: str = ""


def solve_moment_sdp(c: Polynomial, iv: Interval, sdp: SdpBackend) -> MomentSdpResult:
    """Minimize polynomial `c` (degree <= 16) on `iv` via the moment SDP.

    The minimizer is read off the first moment and post-verified against the
    optimal value; when the optimal moment matrix is not numerically rank
    one the companion-matrix oracle supplies the minimizer instead and a
    diagnostic is attached.
    """
    if c.degree > MOMENT_COUNT - 1:
        raise PolyoptError(f"moment relaxation supports degree <= 16, got {c.degree}")
    if iv.lo == iv.hi:
        return MomentSdpResult(
            t=MomentVector.dirac(0.0), x_star=iv.lo, objective=poly_eval(c, iv.lo)
        )
    scale, shift = iv.width / 2.0, iv.mid
    cn = compose_affine(c, scale, shift)
    cost = np.zeros(MOMENT_COUNT)
    cost[: cn.degree] = cn.coeffs[1:]
    const_term = float(cn.coeffs[0])
    mag = np.abs(cost).max()
    if mag == 0.0:
        return MomentSdpResult(
            t=MomentVector.dirac(0.0), x_star=shift, objective=const_term
        )

    sol = sdp.solve(cost / mag, _MOMENT_BLOCKS)
    if sol.status in ("primal infeasible", "dual infeasible"):
        raise SdpError(f"moment SDP reported {sol.status!r}: the feasible set is never empty")
    if not sol.converged:
        raise SdpAccuracyError(
            f"backend accuracy below tolerance (status {sol.status!r}, "
            f"primal residual {sol.primal_residual:.2e}, relative gap {sol.relative_gap!r})"
        )

    t = MomentVector(sol.x)
    objective = float(sol.objective * mag + const_term)
    u_star = float(np.clip(sol.x[0], -1.0, 1.0))
    x_star = scale * u_star + shift
    gap = abs(poly_eval(c, x_star) - objective)
    if gap <= _EXTRACTION_RTOL * (1.0 + abs(objective)):
        return MomentSdpResult(t=t, x_star=x_star, objective=objective)
    x_oracle, _ = minimize_on_interval(c, iv)
    return MomentSdpResult(
        t=t,
        x_star=x_oracle,
        objective=objective,
        used_fallback=True,
        diagnostic=(
            "first-moment extraction failed post-verification "
            f"(value gap {gap:.3e}); optimal moment matrix likely rank-deficient, "
            "minimizer taken from the root oracle"
        ),
    )


# ---------------------------------------------------------------------------
# Dinkelbach iteration for the fractional objective


@dataclass(frozen=True)
class RatioPolys:
    """Fraction b/a of two polynomials, both positive on the domain of use."""

    a: Polynomial
    b: Polynomial


@dataclass(frozen=True)
class DinkelbachResult:
    x_star: float
    ratio: float  # b/a at x_star
    zeta_trace: np.ndarray
    global_flag: bool
    iterations: int
    converged: bool


def dinkelbach_minimize_ratio(
    polys: RatioPolys,
    iv: Interval,
    tol: float = 1e-9,
    max_iter: int = 50,
    sdp: SdpBackend | None = None,
    inner_log: list | None = None,
) -> DinkelbachResult:
    """Minimize b/a on `iv` by maximizing a/b with Dinkelbach's transform.

    Each inner step minimizes C = -a + zeta*b over the interval, through the
    moment SDP when a backend is supplied and the root oracle otherwise.
    The value sequence zeta_k = a(x_k)/b(x_k) is non-decreasing; a decrease
    beyond tolerance raises DivergenceError.
    """
    _assert_positive(polys.a, iv, "a")
    _assert_positive(polys.b, iv, "b")

    def value(x: float) -> float:
        return poly_eval(polys.a, x) / poly_eval(polys.b, x)

    if iv.lo == iv.hi:
        x = iv.lo
        return DinkelbachResult(
            x_star=x,
            ratio=1.0 / value(x),
            zeta_trace=np.array([value(x)]),
            global_flag=_concavity_flag(polys, iv),
            iterations=0,
            converged=True,
        )

    zeta = value(iv.mid)
    trace = [zeta]
    x_star = iv.mid
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        c = poly_add(poly_scale(polys.a, -1.0), poly_scale(polys.b, zeta))
        if sdp is not None:
            try:
                x_star = solve_moment_sdp(c, iv, sdp).x_star
            except SdpError:
                # Degenerate inner instance the backend failed on; one root
                # oracle step keeps the outer iteration sound.
                x_star, _ = minimize_on_interval(c, iv)
        else:
            x_star, _ = minimize_on_interval(c, iv)
        if inner_log is not None:
            inner_log.append((c, iv, x_star))
        zeta_next = value(x_star)
        if not np.isfinite(zeta_next):
            raise DivergenceError(f"non-finite ratio value at x = {x_star!r}")
        if zeta_next < zeta - 10.0 * tol * (1.0 + abs(zeta)):
            raise DivergenceError(
                f"Dinkelbach value decreased from {zeta!r} to {zeta_next!r}"
            )
        done = abs(zeta_next - zeta) <= tol * (1.0 + abs(zeta))
        # The operative value sequence: inner-solver rounding may nick the
        # theoretical monotone increase by a few ulp, never a real decrease.
        zeta = max(zeta, zeta_next)
        trace.append(zeta)
        if done:
            converged = True
            break

    return DinkelbachResult(
        x_star=x_star,
        ratio=1.0 / zeta,
        zeta_trace=np.array(trace),
        global_flag=_concavity_flag(polys, iv),
        iterations=iterations,
        converged=converged,
    )


def _assert_positive(p: Polynomial, iv: Interval, name: str, npts: int = 1000) -> None:
    grid = np.linspace(iv.lo, iv.hi, npts) if iv.lo < iv.hi else np.array([iv.lo])
    vals = poly_eval(p, grid)
    if np.min(vals) <= 0.0:
        raise PolyoptError(
            f"polynomial {name!r} is not positive on the interval "
            f"(min {np.min(vals):.3e} at x = {grid[int(np.argmin(vals))]!r})"
        )


def _concavity_flag(polys: RatioPolys, iv: Interval, npts: int = 64) -> bool:
    """Sufficient global-optimality condition: a concave and b convex on iv."""
    grid = np.linspace(iv.lo, iv.hi, npts) if iv.lo < iv.hi else np.array([iv.lo])
    a2 = poly_eval(poly_derivative(poly_derivative(polys.a)), grid)
    b2 = poly_eval(poly_derivative(poly_derivative(polys.b)), grid)
    a2 = np.atleast_1d(a2)
    b2 = np.atleast_1d(b2)
    slack_a = 1e-9 * max(1.0, float(np.abs(a2).max()))
    slack_b = 1e-9 * max(1.0, float(np.abs(b2).max()))
    return bool(np.all(a2 <= slack_a) and np.all(b2 >= -slack_b))
