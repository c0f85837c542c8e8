"""One renormalization step J~ -> J(eps, J~; T) and its verifiers

Block s of the output (sites eps + d s .. eps + d s + d - 1) is restored from
the values of its block polynomial at the critical points of T, which are
left continued fractions of J~ at w = T(c). The coupling closing the block is
fixed by p_{sd+1} ... p_{sd+d} = p~_{s+1}.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_banded

from config.settings import Config
from constants import (
    DEFAULT_CF_DEPTH, DEFAULT_DIAGONAL, DEFAULT_TOLERANCE, DIAGONAL_CONVENTIONS,
    MIN_CF_DEPTH, NEAR_SPECTRUM_RATIO, BLOCK_IDENTITY_TOL
)
from services.inverse_spectral import BlockCharPoly, block_from_char_poly
from services.jacobi import JacobiWindow, section_spectrum
from services.poly import ExpandingPolynomial, preimage_intervals, warn_if_below_margin
from utils.common import setup_logging
from utils.errors import (
    NearSpectrum, ValidationError, VerificationError, WindowTooShort
)

logger = setup_logging(__name__)


@dataclass(frozen=True)
class RenormOptions:
    """Options of one renormalization step

    Attributes:
        cf_depth: truncation depth N of the left continued fractions
        epsilon: block offset digit, 0 <= epsilon < d
        tolerance: tolerance of the per-block identity assertions
        diagonal: "resolvent" fixes each block's leading diagonal to
            -a_{d-1}/d, "literal" copies q~_s
        threads: block-level worker cap; None reads RENORM_THREADS
    """

    cf_depth: int = DEFAULT_CF_DEPTH
    epsilon: int = 0
    tolerance: float = DEFAULT_TOLERANCE
    diagonal: str = DEFAULT_DIAGONAL
    threads: Optional[int] = None

    def __post_init__(self):
        if int(self.cf_depth) != self.cf_depth or self.cf_depth < MIN_CF_DEPTH:
            raise ValidationError(
                f"cf_depth must be an integer >= {MIN_CF_DEPTH}, got {self.cf_depth!r}",
                invariant="cf_depth",
            )
        if int(self.epsilon) != self.epsilon or self.epsilon < 0:
            raise ValidationError(f"epsilon must be a non-negative integer, got {self.epsilon!r}",
                                  invariant="digit bound")
        if not self.tolerance > 0:
            raise ValidationError("tolerance must be positive", invariant="tolerance")
        if self.diagonal not in DIAGONAL_CONVENTIONS:
            raise ValidationError(
                f"diagonal must be one of {DIAGONAL_CONVENTIONS}, got '{self.diagonal}'",
                invariant="diagonal convention",
            )
        if self.threads is not None and self.threads < 1:
            raise ValidationError("threads must be positive", invariant="threads")

    def worker_count(self) -> int:
        return self.threads if self.threads is not None else Config.threads()


@dataclass(frozen=True)
class BlockSolution:
    """The s-th d x d block of J(eps, J~) with the coupling to block s + 1"""

    s: int
    block: JacobiWindow
    closing_p: float
    char_poly: BlockCharPoly


def block_shift(T: ExpandingPolynomial, q_tilde: float, diagonal: str) -> float:
    """Leading diagonal entry of a block under the given convention"""
    if diagonal == "literal":
        return float(q_tilde)
    return -T.coefficients[-2] / T.degree


def _left_fraction(Jt: JacobiWindow, s: int, w: float, N: int, xi: Optional[float]) -> float:
    if s - N < Jt.lo or s > Jt.hi:
        raise WindowTooShort(
            f"continued fraction at block {s} needs sites [{s - N}, {s}], window is [{Jt.lo}, {Jt.hi}]",
            invariant="cf window",
        )
    radius = xi if xi is not None else Jt.section(s - N, s).norm_bound()
    if abs(w) < radius * (1.0 + NEAR_SPECTRUM_RATIO):
        raise NearSpectrum(
            f"|w| = {abs(w):.6g} is within {NEAR_SPECTRUM_RATIO:g} of the radius {radius:.6g}",
            invariant="cf domain",
        )

    q = Jt.q_slice(s - N, s)
    p = Jt.p_slice(s - N, s)
    g = w - q[0]
    for k in range(1, q.size):
        g = w - q[k] - p[k - 1] ** 2 / g
    return float(g)


def left_resolvent_cf(Jt: JacobiWindow, s: int, w: float, N: int, xi: Optional[float] = None) -> float:
    """<s|(w - J~ restricted to (-inf, s])^-1|s> truncated N levels down

    Args:
        Jt: input window, must contain sites s - N .. s
        s: block index
        w: spectral parameter, a critical value T(c)
        N: truncation depth; the tail starts at w - q~_{s-N}
        xi: spectral radius of J~; defaults to the coefficient norm bound

    Raises:
        WindowTooShort: the window misses sites s - N .. s
        NearSpectrum: |w| < xi (1 + 1e-3)
    """
    return 1.0 / _left_fraction(Jt, s, w, N, xi)


def renorm_block(Jt: JacobiWindow, s: int, T: ExpandingPolynomial, N: int = DEFAULT_CF_DEPTH,
                 epsilon: int = 0, tolerance: float = DEFAULT_TOLERANCE,
                 diagonal: str = DEFAULT_DIAGONAL) -> BlockSolution:
    """Restore block s of J(eps, J~; T) from J~

    Raises:
        WindowTooShort: J~ misses sites s - N .. s + 1
        VerificationError: the leading diagonal or coupling product identity fails
    """
    if s + 1 > Jt.hi:
        raise WindowTooShort(f"block {s} needs p~_{s + 1}, window ends at {Jt.hi}", invariant="cf window")

    values = [_left_fraction(Jt, s, t, N, T.xi) for t in T.critical_values]
    bp = BlockCharPoly(T, block_shift(T, Jt.q_at(s), diagonal), tuple(values))
    local = block_from_char_poly(bp, tolerance)

    inner = float(np.prod(local.p)) if local.p.size else 1.0
    p_next = Jt.p_at(s + 1)
    closing = p_next / inner
    product = inner * closing
    if abs(product - p_next) > tolerance * p_next:
        raise VerificationError(
            f"coupling product {product!r} differs from p~_{s + 1} = {p_next!r}",
            invariant="coupling product",
        )

    logger.debug(f"Block {s}: T^(s)(c) = {values}, inner product {inner:.6g}, closing {closing:.6g}")
    placed = JacobiWindow(epsilon + T.degree * s, local.q, local.p)
    return BlockSolution(s=s, block=placed, closing_p=closing, char_poly=bp)


def renormalizable_blocks(Jt: JacobiWindow, N: int) -> Tuple[int, int]:
    """Block indices whose dependencies s - N .. s + 1 lie inside the window"""
    return Jt.lo + N, Jt.hi - 1


def renorm_step(Jt: JacobiWindow, T: ExpandingPolynomial, opts: Optional[RenormOptions] = None) -> JacobiWindow:
    """J(eps, J~; T) on every block determined by the window

    The output covers sites [eps + d s_min, eps + d s_max + d - 1]. Blocks are
    independent and may run on a thread pool; results are merged in block
    order.
    """
    opts = opts or RenormOptions()
    d = T.degree
    if opts.epsilon >= d:
        raise ValidationError(f"epsilon {opts.epsilon} must be below d = {d}", invariant="digit bound")

    s_min, s_max = renormalizable_blocks(Jt, opts.cf_depth)
    if s_min > s_max:
        raise WindowTooShort(
            f"window [{Jt.lo}, {Jt.hi}] is too short for cf_depth {opts.cf_depth}",
            invariant="cf window",
        )
    warn_if_below_margin(T, "renorm_step")

    def solve(s: int) -> BlockSolution:
        return renorm_block(Jt, s, T, opts.cf_depth, opts.epsilon, opts.tolerance, opts.diagonal)

    indices = range(s_min, s_max + 1)
    workers = min(opts.worker_count(), len(indices))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solutions = list(pool.map(solve, indices))
    else:
        solutions = [solve(s) for s in indices]

    q_parts, p_parts = [], []
    for solution in solutions:
        q_parts.append(solution.block.q)
        p_parts.append(solution.block.p)
        p_parts.append([solution.closing_p])
    q = np.concatenate(q_parts)
    p = np.concatenate(p_parts)[:-1]

    logger.debug(f"Renormalized blocks [{s_min}, {s_max}] with degree {d}, epsilon {opts.epsilon}")
    return JacobiWindow(opts.epsilon + d * s_min, q, p)


def extract_block(J: JacobiWindow, s: int, d: int, epsilon: int = 0) -> Tuple[JacobiWindow, Optional[float]]:
    """Block s of J re-based at 0, with its closing coupling (None past the window)"""
    start = epsilon + d * s
    section = J.section(start, start + d - 1)
    closing = J.p_at(start + d) if start + d <= J.hi else None
    return JacobiWindow(0, section.q, section.p), closing


def complete_blocks(J: JacobiWindow, Jt: JacobiWindow, d: int, epsilon: int) -> List[int]:
    """Blocks fully inside J that have a closing coupling and a partner p~_{s+1}"""
    first = -((epsilon - J.lo) // d)
    last = (J.hi - epsilon - d) // d
    return [s for s in range(first, last + 1) if Jt.lo <= s and s + 1 <= Jt.hi]


def verify_block_identities(J: JacobiWindow, Jt: JacobiWindow, T: ExpandingPolynomial, epsilon: int = 0,
                            diagonal: str = DEFAULT_DIAGONAL,
                            tolerance: float = BLOCK_IDENTITY_TOL) -> Dict[str, float]:
    """Per-block identities of a renormalized window

    Returns:
        product: max relative error of p_{sd+1}...p_{sd+d} = p~_{s+1}
        diagonal: max |q_{sd} - shift|
        coupling_excess: max of 1/(p_{sd+1}...p_{sd+d-1}) - 1/(margin - 1), <= 0 when the bound holds
        outside: block eigenvalues outside T^-1([-xi, xi]) dilated by 1e-8
        blocks: number of blocks checked
    """
    d = T.degree
    bands = preimage_intervals(T, (-T.xi, T.xi))
    bound = 1.0 / (T.margin - 1.0)
    product = diagonal_error = 0.0
    excess = -np.inf
    outside = 0

    blocks = complete_blocks(J, Jt, d, epsilon)
    for s in blocks:
        block, closing = extract_block(J, s, d, epsilon)
        inner = float(np.prod(block.p)) if block.p.size else 1.0
        product = max(product, abs(inner * closing / Jt.p_at(s + 1) - 1.0))
        diagonal_error = max(diagonal_error, abs(block.q[0] - block_shift(T, Jt.q_at(s), diagonal)))
        excess = max(excess, 1.0 / inner - bound)
        for value in section_spectrum(block):
            if not any(lo - 1e-8 <= value <= hi + 1e-8 for lo, hi in bands):
                outside += 1

    if outside:
        logger.warning(f"{outside} block eigenvalues lie outside T^-1([-xi, xi])")
    if blocks and (product > tolerance or diagonal_error > tolerance * max(1.0, T.xi)):
        logger.warning(f"Block identities exceed {tolerance:g}: product {product:.3e}, diagonal {diagonal_error:.3e}")
    if blocks and excess > tolerance:
        logger.warning(f"Inner couplings break 1/(p...p) <= {bound:.4g} by {excess:.3e}")
    return {
        "product": float(product),
        "diagonal": float(diagonal_error),
        "coupling_excess": float(excess) if blocks else 0.0,
        "outside": int(outside),
        "blocks": len(blocks),
    }


def aligned_blocks(J: JacobiWindow, Jt: JacobiWindow, d: int, epsilon: int, L: int) -> Tuple[int, int]:
    """Central run of at most L blocks k with sites eps + d k .. eps + d k + d - 1 inside J"""
    first = max(Jt.lo, -((epsilon - J.lo) // d))
    last = min(Jt.hi, (J.hi - epsilon - d + 1) // d)
    available = last - first + 1
    if available < 4:
        raise WindowTooShort(
            f"only {max(available, 0)} aligned blocks between J and J~", invariant="section length"
        )
    count = min(int(L), available)
    start = first + (available - count) // 2
    return start, start + count - 1


def _banded(section: JacobiWindow, shift) -> np.ndarray:
    """Banded storage of (shift - J) for scipy.linalg.solve_banded"""
    n = section.length
    dtype = np.result_type(shift, float)
    ab = np.zeros((3, n), dtype=dtype)
    ab[0, 1:] = -section.p
    ab[1, :] = shift - section.q
    ab[2, :-1] = -section.p
    return ab


def verify_renorm_identity(J: JacobiWindow, Jt: JacobiWindow, T: ExpandingPolynomial, epsilon: int,
                           z_samples: Sequence[float], L: int) -> float:
    """max |V*(z - J)^-1 V - (T(z) - J~)^-1 T'(z)/d| over central entries

    Sections of J over d L sites and of J~ over L sites are compared on their
    central L/2 x L/2 sub-blocks.

    Raises:
        NearSpectrum: some z lies within xi of [-xi, xi]
    """
    d = T.degree
    k_lo, k_hi = aligned_blocks(J, Jt, d, epsilon, L)
    J_section = J.section(epsilon + d * k_lo, epsilon + d * k_hi + d - 1)
    Jt_section = Jt.section(k_lo, k_hi)

    count = k_hi - k_lo + 1
    quarter = count // 4
    central = np.arange(quarter, quarter + max(count // 2, 1))
    rows = d * central

    residual = 0.0
    for z in z_samples:
        distance = max(abs(np.real(z)) - T.xi, 0.0) if np.imag(z) == 0 else abs(np.imag(z))
        if distance < T.xi:
            raise NearSpectrum(
                f"z = {z} is within xi of [-{T.xi}, {T.xi}]", invariant="resolvent domain"
            )
        unit = np.zeros((J_section.length, rows.size))
        unit[rows, np.arange(rows.size)] = 1.0
        left = solve_banded((1, 1), _banded(J_section, z), unit)[rows, :]

        unit = np.zeros((Jt_section.length, central.size))
        unit[central, np.arange(central.size)] = 1.0
        right = solve_banded((1, 1), _banded(Jt_section, T.eval(z)), unit)[central, :]
        right = right * T.eval_derivative(z) / d

        residual = max(residual, float(np.max(np.abs(left - right))))
    return residual


def _matrix_horner(coefficients: Sequence[float], M: np.ndarray) -> np.ndarray:
    result = np.zeros_like(M)
    identity = np.eye(M.shape[0])
    for coefficient in reversed(coefficients):
        result = result @ M + coefficient * identity
    return result


def verify_polynomial_forms(J: JacobiWindow, Jt: JacobiWindow, T: ExpandingPolynomial, epsilon: int, L: int,
                            z_samples: Optional[Sequence[float]] = None) -> Tuple[float, float]:
    """Residuals of V* T(J) = J~ V* and V* [(T(z) - T(J))/(z - J)] V = T'(z)/d

    T(J) is evaluated on a section padded by d * deg T sites on both sides so
    that the compared central rows are exact.
    """
    d = T.degree
    if z_samples is None:
        z_samples = T.xi * np.array([-1.5, -0.5, 0.25, 0.75, 1.25])
    pad_blocks = d
    k_lo, k_hi = aligned_blocks(J, Jt, d, epsilon, L)
    if k_hi - k_lo + 1 <= 2 * pad_blocks:
        raise WindowTooShort("section too short for the polynomial padding", invariant="section length")

    start = epsilon + d * k_lo
    M = J.section(start, epsilon + d * k_hi + d - 1).to_dense()
    central = np.arange(pad_blocks, k_hi - k_lo + 1 - pad_blocks)
    rows = d * central

    T_of_M = _matrix_horner(T.coefficients, M)
    expected = np.zeros((central.size, M.shape[0]))
    Jt_dense = Jt.section(k_lo, k_hi).to_dense()
    expected[:, d * np.arange(k_hi - k_lo + 1)] = Jt_dense[central, :]
    residual_1 = float(np.max(np.abs(T_of_M[rows, :] - expected)))

    coefficients = np.asarray(T.coefficients)
    residual_2 = 0.0
    for z in z_samples:
        divided = [
            float(np.sum(coefficients[j + 1:] * np.power(z, np.arange(coefficients.size - j - 1))))
            for j in range(d)
        ]
        D = _matrix_horner(divided, M)[np.ix_(rows, rows)]
        target = T.eval_derivative(z) / d * np.eye(rows.size)
        residual_2 = max(residual_2, float(np.max(np.abs(D - target))))
    return residual_1, residual_2
