"""Expanding polynomials normalized so that T^-1([-xi, xi]) lies inside [-xi, xi].

Polynomials are stored monic with ascending coefficients. Between consecutive
critical points a valid polynomial is monotone, so every preimage problem is
solved by bracketed root finding on those monotone pieces.
"""

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.chebyshev import cheb2poly
from scipy.optimize import brentq

from constants import (
    CRITICAL_POINT_TOL, SECOND_DERIVATIVE_TOL, ROOT_TOL, PREIMAGE_SLACK, CONTRACTION_MARGIN
)
from utils.common import setup_logging
from utils.errors import (
    ContractivityWarning, DegenerateCritical, RootFindingError, ValidationError
)

logger = setup_logging(__name__)

Interval = Tuple[float, float]


@dataclass(frozen=True)
class ExpandingPolynomial:
    """Monic real polynomial T with T^-1([-xi, xi]) inside [-xi, xi].

    Build instances with `from_coefficients` or `make_chebyshev_family`; both
    run the full invariant validation.
    """

    coefficients: Tuple[float, ...]
    xi: float
    critical_points: Tuple[float, ...]
    critical_values: Tuple[float, ...]
    second_derivatives: Tuple[float, ...]
    margin: float

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @cached_property
    def polynomial(self) -> Polynomial:
        return Polynomial(self.coefficients)

    @cached_property
    def derivative(self) -> Polynomial:
        return self.polynomial.deriv()

    @cached_property
    def second_derivative(self) -> Polynomial:
        return self.polynomial.deriv(2)

    def eval(self, z):
        """Horner evaluation of T (real or complex, scalar or array)"""
        return self.polynomial(z)

    def eval_derivative(self, z):
        return self.derivative(z)

    @property
    def meets_contraction_margin(self) -> bool:
        return self.margin >= CONTRACTION_MARGIN

    @property
    def root_bound(self) -> float:
        """Cauchy bound for every solution of T(z) = v with |v| <= xi"""
        lower = np.abs(np.asarray(self.coefficients[:-1], dtype=float))
        lower[0] += self.xi
        return max(self.xi, 1.0 + float(lower.max())) + 1.0

    def monotone_pieces(self) -> List[Interval]:
        """Intervals between consecutive critical points, capped by the root bound"""
        edges = [-self.root_bound, *self.critical_points, self.root_bound]
        return list(zip(edges[:-1], edges[1:]))

    @classmethod
    def from_coefficients(
        cls,
        coefficients: Sequence[float],
        xi: float,
        critical_points: Optional[Sequence[float]] = None,
    ) -> "ExpandingPolynomial":
        """Validate a monic coefficient sequence (ascending) against radius xi

        Args:
            coefficients: a_0 .. a_d with a_d == 1
            xi: interval radius
            critical_points: known critical points; computed from T' if omitted

        Raises:
            ValidationError: the failing invariant is named on the error
        """
        coeffs = np.asarray(coefficients, dtype=float)
        if coeffs.ndim != 1 or coeffs.size < 3:
            raise ValidationError("degree d >= 2 required", invariant="degree")
        if not np.all(np.isfinite(coeffs)):
            raise ValidationError("coefficients must be finite", invariant="coefficients")
        if abs(coeffs[-1] - 1.0) > 1e-12:
            raise ValidationError(
                f"leading coefficient {coeffs[-1]!r} is not 1", invariant="monic"
            )
        coeffs[-1] = 1.0
        if not xi > 0:
            raise ValidationError(f"xi must be positive, got {xi!r}", invariant="xi")

        degree = coeffs.size - 1
        poly = Polynomial(coeffs)
        deriv = poly.deriv()
        deriv2 = poly.deriv(2)

        if critical_points is None:
            crit = _real_critical_points(deriv)
        else:
            crit = np.asarray(critical_points, dtype=float)
        crit = np.sort(_newton_polish(deriv, deriv2, crit))

        if crit.size != degree - 1:
            raise ValidationError(
                f"expected {degree - 1} real critical points, found {crit.size}",
                invariant="critical points",
            )
        if crit.size > 1 and np.any(np.diff(crit) <= 0):
            raise ValidationError(
                "critical points are not strictly increasing", invariant="critical points"
            )

        scale = np.maximum(1.0, _derivative_scale(coeffs, crit))
        residual = np.abs(deriv(crit))
        if np.any(residual > CRITICAL_POINT_TOL * scale):
            raise ValidationError(
                f"T'(c) residual {residual.max():.3e} exceeds tolerance",
                invariant="critical points",
            )

        second = deriv2(crit)
        if np.any(np.abs(second) <= SECOND_DERIVATIVE_TOL):
            raise DegenerateCritical(
                "critical point is not simple (|T''(c)| <= 1e-8)", invariant="simple critical points"
            )

        values = poly(crit)
        margin = float(np.min(np.abs(values)) / xi)
        if margin <= 1.0:
            raise ValidationError(
                f"expansion margin {margin:.4g} <= 1: T is not expanding over [-{xi}, {xi}]",
                invariant="expansion margin",
            )

        result = cls(
            coefficients=tuple(float(c) for c in coeffs),
            xi=float(xi),
            critical_points=tuple(float(c) for c in crit),
            critical_values=tuple(float(v) for v in values),
            second_derivatives=tuple(float(s) for s in second),
            margin=margin,
        )
        _check_preimage_condition(result)
        return result


def _real_critical_points(deriv: Polynomial) -> np.ndarray:
    roots = deriv.roots()
    if np.any(np.abs(roots.imag) > 1e-8 * np.maximum(1.0, np.abs(roots.real))):
        raise ValidationError("T has non-real critical points", invariant="critical points")
    return np.sort(roots.real)


def _newton_polish(deriv: Polynomial, deriv2: Polynomial, points: np.ndarray, steps: int = 3) -> np.ndarray:
    points = np.array(points, dtype=float)
    for _ in range(steps):
        curvature = deriv2(points)
        safe = np.abs(curvature) > SECOND_DERIVATIVE_TOL
        update = np.zeros_like(points)
        update[safe] = deriv(points[safe]) / curvature[safe]
        points = points - update
    return points


def _derivative_scale(coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Sum of |k a_k z^(k-1)|: the rounding scale of evaluating T' at z"""
    powers = np.arange(1, coeffs.size)
    terms = np.abs(coeffs[1:] * powers) * np.abs(points[:, None]) ** (powers - 1)
    return terms.sum(axis=1)


def _check_preimage_condition(T: ExpandingPolynomial) -> None:
    intervals = preimage_intervals(T, (-T.xi, T.xi))
    bound = T.xi * (1.0 + PREIMAGE_SLACK)
    if len(intervals) != T.degree:
        raise ValidationError(
            f"preimage of [-xi, xi] has {len(intervals)} bands, expected {T.degree}",
            invariant="preimage condition",
        )
    for lo, hi in intervals:
        if lo < -bound or hi > bound:
            raise ValidationError(
                f"preimage band [{lo:.6g}, {hi:.6g}] leaves [-{T.xi}, {T.xi}]",
                invariant="preimage condition",
            )
    for (_, prev_hi), (next_lo, _) in zip(intervals[:-1], intervals[1:]):
        if next_lo <= prev_hi:
            raise ValidationError("preimage bands overlap", invariant="preimage condition")


def solve_monotone(T: ExpandingPolynomial, value: float, a: float, b: float) -> float:
    """Solve T(z) = value on [a, b] where T is monotone

    Brent's bracketed method followed by one guarded Newton step.
    """
    fa = T.eval(a) - value
    fb = T.eval(b) - value
    if fa == 0.0:
        return float(a)
    if fb == 0.0:
        return float(b)
    if np.sign(fa) == np.sign(fb):
        raise RootFindingError(
            f"T(z) = {value:.6g} has no bracketed root on [{a:.6g}, {b:.6g}]",
            invariant="monotone bracket",
        )
    try:
        root = brentq(lambda z: T.eval(z) - value, a, b, xtol=ROOT_TOL, maxiter=200)
    except (RuntimeError, ValueError) as e:
        raise RootFindingError(str(e), invariant="root convergence") from e

    slope = T.eval_derivative(root)
    if slope != 0.0:
        polished = root - (T.eval(root) - value) / slope
        if a <= polished <= b and abs(T.eval(polished) - value) < abs(T.eval(root) - value):
            root = polished
    return float(root)


def make_chebyshev_family(d: int, a: float, xi: float) -> ExpandingPolynomial:
    """Monic scaled Chebyshev polynomial (a^d / 2^(d-1)) Cheb_d(z / a)

    Critical points are a cos(j pi / d) and every critical value has magnitude
    a^d / 2^(d-1).
    """
    if int(d) != d or d < 2:
        raise ValidationError(f"degree must be an integer >= 2, got {d!r}", invariant="degree")
    if not a > 0:
        raise ValidationError(f"a must be positive, got {a!r}", invariant="family parameter")
    d = int(d)
    basis = cheb2poly([0.0] * d + [1.0])
    powers = np.arange(d + 1)
    coeffs = basis * np.power(float(a), d - powers) / 2.0 ** (d - 1)
    crit = np.sort(a * np.cos(np.pi * np.arange(1, d) / d))
    return ExpandingPolynomial.from_coefficients(coeffs, xi, critical_points=crit)


def chebyshev_parameter(d: int, critical_value: float) -> float:
    """Family parameter a giving critical values of magnitude `critical_value`"""
    return float((2.0 ** (d - 1) * abs(critical_value)) ** (1.0 / d))


def compose(outer: ExpandingPolynomial, inner: ExpandingPolynomial) -> ExpandingPolynomial:
    """The monic composition outer(inner(z)), revalidated as a whole"""
    if outer.degree < 2 or inner.degree < 2:
        raise ValidationError("degree d >= 2 required for both factors", invariant="degree")
    if abs(outer.xi - inner.xi) > 1e-12 * max(outer.xi, inner.xi):
        raise ValidationError(
            f"radius mismatch: {outer.xi} vs {inner.xi}", invariant="shared xi"
        )

    composite = Polynomial([outer.coefficients[-1]])
    for coefficient in reversed(outer.coefficients[:-1]):
        composite = composite * inner.polynomial + coefficient

    crit = list(inner.critical_points)
    for c in outer.critical_points:
        crit.extend(solve_monotone(inner, c, a, b) for a, b in inner.monotone_pieces())

    coeffs = np.zeros(outer.degree * inner.degree + 1)
    coeffs[: composite.coef.size] = composite.coef
    logger.debug(f"Composed degree {outer.degree} with degree {inner.degree}")
    return ExpandingPolynomial.from_coefficients(coeffs, outer.xi, critical_points=sorted(crit))


def preimage_intervals(T: ExpandingPolynomial, interval: Interval) -> List[Interval]:
    """The d maximal closed intervals of T^-1([lo, hi]), sorted

    Raises:
        ValidationError: [lo, hi] is not inside [-xi, xi], or a monotone piece
            of T does not cover it
        RootFindingError: on non-convergence
    """
    lo, hi = float(interval[0]), float(interval[1])
    bound = T.xi * (1.0 + 1e-12)
    if lo > hi or lo < -bound or hi > bound:
        raise ValidationError(
            f"interval [{lo}, {hi}] is not inside [-{T.xi}, {T.xi}]", invariant="preimage domain"
        )

    result = []
    for a, b in T.monotone_pieces():
        ta, tb = T.eval(a), T.eval(b)
        low_end, high_end = min(ta, tb), max(ta, tb)
        if lo < low_end or hi > high_end:
            raise ValidationError(
                f"monotone piece [{a:.6g}, {b:.6g}] does not cover [{lo}, {hi}]",
                invariant="preimage condition",
            )
        x_lo = solve_monotone(T, lo, a, b)
        x_hi = solve_monotone(T, hi, a, b)
        result.append((min(x_lo, x_hi), max(x_lo, x_hi)))
    return sorted(result)


def evaluate(T: ExpandingPolynomial, z):
    return T.eval(z)


def evaluate_derivative(T: ExpandingPolynomial, z):
    return T.eval_derivative(z)


def warn_if_below_margin(T: ExpandingPolynomial, context: str = "") -> None:
    """Emit ContractivityWarning when 1 < margin < 10"""
    if T.meets_contraction_margin:
        return
    message = (
        f"expansion margin {T.margin:.4g} is below {CONTRACTION_MARGIN:g}; "
        f"contraction is not guaranteed{' in ' + context if context else ''}"
    )
    logger.warning(message)
    warnings.warn(message, ContractivityWarning, stacklevel=3)
