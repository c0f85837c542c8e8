"""Inverse spectral reconstruction of finite Jacobi blocks

A block's (0,0) resolvent is (T'(z)/d) / T^(s)(z). From the block polynomial
T^(s) we recover the spectral measure (roots and residues) and from the
measure the block itself (Lanczos on diag(nodes)).
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq

from constants import (
    DIVISION_REMAINDER_TOL, MAX_BLOCK_DEGREE, MEASURE_SUM_TOL, NODE_GAP, ROOT_TOL,
    SECOND_DERIVATIVE_TOL, WEIGHT_SUM_TOL, DEFAULT_TOLERANCE
)
from services.jacobi import JacobiWindow
from services.poly import ExpandingPolynomial
from utils.common import setup_logging
from utils.errors import (
    DegenerateCritical, NegativeWeight, NodeCollision, NonRealRoots, ValidationError,
    VerificationError
)

logger = setup_logging(__name__)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite measure sum_j w_j delta(x - x_j) with sorted distinct nodes

    `normalized=False` admits measures of arbitrary positive mass.
    """

    nodes: np.ndarray
    weights: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).ravel()
        weights = np.array(self.weights, dtype=float).ravel()
        if nodes.size == 0 or nodes.size != weights.size:
            raise ValidationError("nodes and weights must be non-empty and aligned", invariant="measure shape")
        order = np.argsort(nodes, kind="stable")
        nodes, weights = nodes[order], weights[order]
        if nodes.size > 1 and np.min(np.diff(nodes)) <= NODE_GAP:
            raise NodeCollision(
                f"node gap {np.min(np.diff(nodes)):.3e} is below {NODE_GAP:g}", invariant="node gap"
            )
        if np.any(weights <= 0):
            raise NegativeWeight("weights must be positive", invariant="positive weights")
        if self.normalized and abs(weights.sum() - 1.0) > MEASURE_SUM_TOL:
            raise ValidationError(
                f"weights sum to {weights.sum()!r}, not 1", invariant="normalization"
            )
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def stieltjes_transform(self, z):
        """sum_j w_j / (z - x_j)"""
        return np.sum(self.weights / (z - self.nodes))


@dataclass(frozen=True)
class BlockCharPoly:
    """Block polynomial T^(s) stored as its leading shift and its values at the critical points of T

    Values produced from an input with spectrum in [-xi, xi] satisfy
    |T^(s)(c)| >= (margin - 1) xi; `check_bound=False` admits arbitrary values.

    Raises:
        VerificationError: a value falls below that floor
    """

    T: ExpandingPolynomial
    q_shift: float
    critical_values: Tuple[float, ...]
    check_bound: bool = field(default=True, compare=False)

    def __post_init__(self):
        values = tuple(float(v) for v in self.critical_values)
        if len(values) != len(self.T.critical_points):
            raise ValidationError(
                f"expected {len(self.T.critical_points)} critical values, got {len(values)}",
                invariant="critical values",
            )
        object.__setattr__(self, "critical_values", values)
        if self.check_bound:
            floor = (self.T.margin - 1.0) * self.T.xi
            weakest = min(abs(v) for v in values)
            if weakest < floor * (1.0 - 1e-9):
                message = f"|T^(s)(c)| = {weakest:.6g} is below (margin - 1) xi = {floor:.6g}"
                logger.warning(message)
                raise VerificationError(message, invariant="critical value floor")

    @property
    def degree(self) -> int:
        return self.T.degree

    @cached_property
    def polynomial(self) -> Polynomial:
        return Polynomial(assemble_block_poly(self))


def assemble_block_poly(bp: BlockCharPoly) -> np.ndarray:
    """Monic ascending coefficients of

        T^(s)(z) = (z - q) T'(z)/d + sum_c T'(z) / ((z - c) T''(c)) * T^(s)(c)

    Raises:
        DegenerateCritical: |T''(c)| < 1e-8 for some critical point
        ValidationError: T'(z) / (z - c) leaves a remainder
    """
    T = bp.T
    d = T.degree
    deriv = T.derivative
    scale = max(1.0, float(np.abs(deriv.coef).max()))

    result = Polynomial([-bp.q_shift, 1.0]) * deriv / d
    for c, value, curvature in zip(T.critical_points, bp.critical_values, T.second_derivatives):
        if abs(curvature) < SECOND_DERIVATIVE_TOL:
            raise DegenerateCritical(
                f"T''({c:.6g}) = {curvature:.3e}", invariant="simple critical points"
            )
        quotient, remainder = divmod(deriv, Polynomial([-c, 1.0]))
        if np.abs(remainder.coef).max() > DIVISION_REMAINDER_TOL * scale:
            raise ValidationError(
                f"T'(z) / (z - {c:.6g}) is not exact", invariant="exact division"
            )
        result = result + quotient * (value / curvature)

    coeffs = np.zeros(d + 1)
    coeffs[: result.coef.size] = result.coef[: d + 1]
    coeffs[-1] = 1.0
    return coeffs


def _real_root(poly: Polynomial, a: float, b: float) -> Optional[float]:
    fa, fb = poly(a), poly(b)
    if fa == 0.0:
        return float(a)
    if fb == 0.0:
        return float(b)
    if np.sign(fa) == np.sign(fb):
        return None
    root = brentq(poly, a, b, xtol=ROOT_TOL, maxiter=200)
    slope = poly.deriv()(root)
    if slope != 0.0:
        polished = root - poly(root) / slope
        if a <= polished <= b and abs(poly(polished)) < abs(poly(root)):
            root = polished
    return float(root)


def _cauchy_bound(poly: Polynomial) -> float:
    coef = poly.coef / poly.coef[-1]
    return 1.0 + float(np.abs(coef[:-1]).max())


def real_roots(poly: Polynomial, brackets: Sequence[float]) -> np.ndarray:
    """All roots of a real-rooted polynomial, one per bracket interval

    Falls back to companion-matrix eigenvalues when a bracket shows no sign
    change.

    Raises:
        NonRealRoots: roots with non-negligible imaginary part
    """
    edges = list(brackets)
    roots = [_real_root(poly, a, b) for a, b in zip(edges[:-1], edges[1:])]
    if all(r is not None for r in roots) and len(roots) == poly.degree():
        return np.array(roots)

    logger.debug("Bracketing failed; falling back to companion eigenvalues")
    candidates = poly.roots()
    scale = np.maximum(1.0, np.abs(candidates))
    if np.any(np.abs(candidates.imag) > 1e-8 * scale):
        raise NonRealRoots(
            f"block polynomial has non-real roots {candidates[np.abs(candidates.imag) > 0]}",
            invariant="real roots",
        )
    roots = np.sort(candidates.real)
    slope = poly.deriv()
    for _ in range(2):
        step = poly(roots) / np.where(slope(roots) == 0.0, 1.0, slope(roots))
        roots = roots - step
    return np.sort(roots)


def measure_from_polynomials(numerator: Polynomial, denominator: Polynomial,
                             brackets: Sequence[float]) -> DiscreteMeasure:
    """Spectral measure of numerator / denominator (monic degrees d - 1 and d)

    Nodes are the roots of the denominator and weights the residues there.
    """
    nodes = real_roots(denominator, brackets)
    weights = numerator(nodes) / denominator.deriv()(nodes)
    if np.any(weights <= 0):
        raise NegativeWeight(
            f"non-positive residue {weights.min():.3e}", invariant="positive weights"
        )
    total = weights.sum()
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise NegativeWeight(
            f"residues sum to {total!r}, not 1", invariant="weight normalization"
        )
    return DiscreteMeasure(nodes, weights / total)


def measure_from_resolvent(bp: BlockCharPoly) -> DiscreteMeasure:
    """Measure of (T'(z)/d) / T^(s)(z)

    Zeros of T' interlace the roots of T^(s), so the critical points of T
    bracket one root each.
    """
    T = bp.T
    denominator = bp.polynomial
    numerator = T.derivative / T.degree
    reach = max(T.root_bound, _cauchy_bound(denominator)) + 1.0
    brackets = [-reach, *T.critical_points, reach]
    return measure_from_polynomials(numerator, denominator, brackets)


def stieltjes(mu: DiscreteMeasure, d: Optional[int] = None) -> JacobiWindow:
    """Jacobi block whose spectral measure at site 0 is mu (up to total mass)

    Lanczos on diag(nodes) from the start vector sqrt(w), with full
    reorthogonalization applied twice per step.

    Raises:
        NodeCollision: the Krylov space breaks down before reaching d
    """
    d = mu.size if d is None else int(d)
    if d != mu.size:
        raise ValidationError(f"measure has {mu.size} nodes, block size is {d}", invariant="block size")
    if d > MAX_BLOCK_DEGREE:
        raise ValidationError(f"block size {d} exceeds {MAX_BLOCK_DEGREE}", invariant="block size")

    x = mu.nodes
    basis = np.zeros((d, d))
    basis[:, 0] = np.sqrt(mu.weights) / np.linalg.norm(np.sqrt(mu.weights))
    diag = np.zeros(d)
    off_diag = np.zeros(d - 1)

    for j in range(d):
        vec = x * basis[:, j]
        diag[j] = basis[:, j] @ vec
        if j == d - 1:
            break
        vec -= diag[j] * basis[:, j]
        if j > 0:
            vec -= off_diag[j - 1] * basis[:, j - 1]
        for _ in range(2):
            vec -= basis[:, : j + 1] @ (basis[:, : j + 1].T @ vec)
        beta = np.linalg.norm(vec)
        if beta <= NODE_GAP * max(1.0, float(np.abs(x).max())):
            raise NodeCollision(f"Lanczos breakdown at step {j + 1}", invariant="node gap")
        off_diag[j] = beta
        basis[:, j + 1] = vec / beta

    return JacobiWindow(0, diag, off_diag)


def characteristic_polynomial(block: JacobiWindow) -> Polynomial:
    """det(z - J) of a finite block, by the three-term recurrence"""
    previous = Polynomial([1.0])
    current = Polynomial([-block.q[0], 1.0])
    for k in range(1, block.length):
        z_minus_q = Polynomial([-block.q[k], 1.0])
        previous, current = current, z_minus_q * current - block.p[k - 1] ** 2 * previous
    return current


def block_from_char_poly(bp: BlockCharPoly, tolerance: float = DEFAULT_TOLERANCE) -> JacobiWindow:
    """Reconstruct the d x d block of bp and check that its leading diagonal is the shift

    Raises:
        VerificationError: q_0 differs from bp.q_shift
    """
    block = stieltjes(measure_from_resolvent(bp), bp.degree)
    drift = abs(block.q[0] - bp.q_shift)
    if drift > tolerance * max(1.0, bp.T.xi):
        raise VerificationError(
            f"reconstructed q_0 = {block.q[0]!r} differs from the shift {bp.q_shift!r}",
            invariant="leading diagonal",
        )
    return block


def _three_term(block: JacobiWindow, couplings: np.ndarray, z: float, start: int,
                prev: float, curr: float) -> Tuple[float, float]:
    """Run p_{k+1} X_{k+1} = (z - q_k) X_k - p_k X_{k-1} from k = start up to X_d"""
    for k in range(start, block.length):
        p_k = couplings[k - 1] if k > 0 else 0.0
        prev, curr = curr, ((z - block.q[k]) * curr - p_k * prev) / couplings[k]
    return prev, curr


def orthonormal_polynomials(block: JacobiWindow, closing_p: float, z: float) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """((P_{d-1}, P_d), (Q_{d-1}, Q_d)) at z

    P starts from P_{-1} = 0, P_0 = 1 and Q from Q_0 = 0, Q_1 = 1/p_1. p_d is
    the coupling closing the block into the chain.
    """
    couplings = np.append(block.p, closing_p)
    first_kind = _three_term(block, couplings, z, 0, 0.0, 1.0)
    second_kind = _three_term(block, couplings, z, 1, 0.0, 1.0 / couplings[0])
    return first_kind, second_kind


def wronskian_check(block: JacobiWindow, T: ExpandingPolynomial, closing_p: float) -> float:
    """max over critical points c of |p_d Q_{d-1}(c) P_d(c) + 1|"""
    if block.length == 1:
        return 0.0
    if block.length != T.degree:
        raise ValidationError(
            f"block size {block.length} does not match degree {T.degree}", invariant="block size"
        )
    if not closing_p > 0:
        raise ValidationError("closing coupling must be positive", invariant="p > 0")

    residual = 0.0
    for c in T.critical_points:
        (_, p_d), (q_prev, _) = orthonormal_polynomials(block, closing_p, c)
        residual = max(residual, abs(closing_p * q_prev * p_d + 1.0))
    return float(residual)


def perturbation_gap(mu: DiscreteMeasure, f: Sequence[float], eps: float) -> Tuple[float, float]:
    """Coefficient deviation between the blocks of mu and of f * mu, against eps ||J||

    Returns:
        (max_s |p~_s - p_s|, eps * ||J(mu)||)

    Raises:
        ValidationError: a multiplier leaves [1/(1+eps), 1+eps]
        VerificationError: the deviation exceeds the bound
    """
    factors = np.asarray(f, dtype=float)
    if factors.size != mu.size:
        raise ValidationError("one multiplier per node required", invariant="multipliers")
    slack = 1e-12
    if np.any(factors < 1.0 / (1.0 + eps) - slack) or np.any(factors > 1.0 + eps + slack):
        raise ValidationError(
            f"multipliers must lie in [1/(1+{eps}), 1+{eps}]", invariant="multipliers"
        )

    perturbed = DiscreteMeasure(mu.nodes, mu.weights * factors, normalized=False)
    J = stieltjes(mu)
    J_tilde = stieltjes(perturbed)
    deviation = float(np.abs(J_tilde.p - J.p).max()) if J.p.size else 0.0
    bound = float(eps * np.abs(mu.nodes).max())

    if deviation > bound + slack:
        raise VerificationError(
            f"coefficient deviation {deviation:.3e} exceeds eps ||J|| = {bound:.3e}",
            invariant="absolute continuity bound",
        )
    return deviation, bound
