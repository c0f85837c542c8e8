"""Finite windows of two-sided Jacobi matrices

A window stores q_k for k in [base, base + L - 1] and p_k for k in
[base + 1, base + L - 1], where p_k couples sites k - 1 and k. Index ranges
passed around this package are inclusive (lo, hi) pairs.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from constants import NEAR_SPECTRUM_DISTANCE
from utils.common import setup_logging
from utils.errors import EmptyOverlap, NearSpectrum, ValidationError

logger = setup_logging(__name__)

IndexRange = Tuple[int, int]


def _frozen(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class JacobiWindow:
    """Coefficients of a Jacobi matrix on the contiguous index window [lo, hi]"""

    base: int
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = _frozen(np.atleast_1d(self.q))
        p = _frozen(np.atleast_1d(self.p) if np.size(self.p) else [])
        if q.ndim != 1 or q.size < 1:
            raise ValidationError("window length must be at least 1", invariant="window length")
        if p.size != q.size - 1:
            raise ValidationError(
                f"expected {q.size - 1} off-diagonal entries, got {p.size}", invariant="window shape"
            )
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValidationError("coefficients must be finite", invariant="finite coefficients")
        if np.any(p <= 0):
            raise ValidationError("off-diagonal entries must be positive", invariant="p > 0")
        object.__setattr__(self, "base", int(self.base))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def lo(self) -> int:
        return self.base

    @property
    def hi(self) -> int:
        return self.base + self.q.size - 1

    @property
    def length(self) -> int:
        return self.q.size

    @property
    def index_range(self) -> IndexRange:
        return self.lo, self.hi

    def contains(self, index_range: IndexRange) -> bool:
        lo, hi = index_range
        return lo <= hi and self.lo <= lo and hi <= self.hi

    def q_at(self, k: int) -> float:
        return float(self.q[k - self.base])

    def p_at(self, k: int) -> float:
        """Coupling between sites k - 1 and k"""
        return float(self.p[k - self.base - 1])

    def q_slice(self, lo: int, hi: int) -> np.ndarray:
        return self.q[lo - self.base: hi - self.base + 1]

    def p_slice(self, lo: int, hi: int) -> np.ndarray:
        """Couplings internal to sites lo..hi, i.e. p_{lo+1}..p_hi"""
        return self.p[lo - self.base: hi - self.base]

    def section(self, lo: int, hi: int) -> "JacobiWindow":
        if not self.contains((lo, hi)):
            raise ValidationError(
                f"section [{lo}, {hi}] is not inside [{self.lo}, {self.hi}]", invariant="section range"
            )
        return JacobiWindow(lo, self.q_slice(lo, hi), self.p_slice(lo, hi))

    def to_dense(self) -> np.ndarray:
        return np.diag(self.q) + np.diag(self.p, 1) + np.diag(self.p, -1)

    def norm_bound(self) -> float:
        """max |q| + 2 max p, an upper bound for every section's operator norm"""
        p_max = float(self.p.max()) if self.p.size else 0.0
        return float(np.abs(self.q).max()) + 2.0 * p_max

    def perturbed(self, kind: str, k: int, delta: float) -> "JacobiWindow":
        """Copy with q_k or p_k shifted by delta"""
        q, p = self.q.copy(), self.p.copy()
        if kind == "q":
            q[k - self.base] += delta
        elif kind == "p":
            p[k - self.base - 1] += delta
        else:
            raise ValidationError(f"unknown coefficient kind '{kind}'", invariant="perturbation")
        return JacobiWindow(self.base, q, p)

    def __eq__(self, other) -> bool:
        if not isinstance(other, JacobiWindow):
            return NotImplemented
        return (
            self.base == other.base
            and np.array_equal(self.q, other.q)
            and np.array_equal(self.p, other.p)
        )

    __hash__ = None


def constant_window(q: float, p: float, lo: int, hi: int) -> JacobiWindow:
    length = hi - lo + 1
    return JacobiWindow(lo, np.full(length, float(q)), np.full(max(length - 1, 0), float(p)))


def shift_conjugate(J: JacobiWindow, m: int) -> JacobiWindow:
    """Window of S^-m J S^m: output coefficient at k is the input's at k + m"""
    return JacobiWindow(J.base - int(m), J.q, J.p)


def _resolve_overlap(J1: JacobiWindow, J2: JacobiWindow, overlap: Optional[IndexRange]) -> IndexRange:
    if overlap is None:
        overlap = (max(J1.lo, J2.lo), min(J1.hi, J2.hi))
    lo, hi = int(overlap[0]), int(overlap[1])
    if lo > hi or not (J1.contains((lo, hi)) and J2.contains((lo, hi))):
        raise EmptyOverlap(
            f"range [{lo}, {hi}] is empty or not shared by [{J1.lo}, {J1.hi}] and [{J2.lo}, {J2.hi}]",
            invariant="overlap",
        )
    return lo, hi


def coef_sup_dist(J1: JacobiWindow, J2: JacobiWindow, overlap: Optional[IndexRange] = None) -> float:
    """sup over the overlap of max(|dq_k|, |dp_k|)

    Only couplings internal to the overlap are compared.
    """
    lo, hi = _resolve_overlap(J1, J2, overlap)
    dq = np.abs(J1.q_slice(lo, hi) - J2.q_slice(lo, hi))
    dp = np.abs(J1.p_slice(lo, hi) - J2.p_slice(lo, hi))
    return float(max(dq.max(), dp.max() if dp.size else 0.0))


def section_spectrum(J: JacobiWindow, index_range: Optional[IndexRange] = None) -> np.ndarray:
    """Sorted eigenvalues of the symmetric tridiagonal section"""
    lo, hi = index_range if index_range is not None else J.index_range
    section = J.section(lo, hi)
    if section.length == 1:
        return section.q.copy()
    return eigvalsh_tridiagonal(section.q, section.p)


def _eigen_resolvent(block: JacobiWindow, z) -> complex:
    values, vectors = np.linalg.eigh(block.to_dense())
    return np.sum(vectors[0, :] ** 2 / (z - values))


def resolvent_00(block: JacobiWindow, z):
    """<0|(z - J)^-1|0> of a finite block, by the continued fraction from the bottom

    Raises:
        NearSpectrum: z within 1e-8 of a block eigenvalue
    """
    eigenvalues = section_spectrum(block)
    distance = float(np.min(np.abs(z - eigenvalues)))
    if distance < NEAR_SPECTRUM_DISTANCE:
        raise NearSpectrum(
            f"z = {z} is {distance:.3e} from the block spectrum", invariant="resolvent domain"
        )

    g = z - block.q[-1]
    for i in range(block.length - 2, -1, -1):
        if abs(g) < NEAR_SPECTRUM_DISTANCE:
            # z hits a sub-block eigenvalue; the fraction is singular mid-way
            return _eigen_resolvent(block, z)
        g = z - block.q[i] - block.p[i] ** 2 / g
    return 1.0 / g


def section_opnorm_diff(J1: JacobiWindow, J2: JacobiWindow, index_range: Optional[IndexRange] = None) -> float:
    """Operator norm of the section of J1 - J2 (largest absolute eigenvalue)"""
    lo, hi = _resolve_overlap(J1, J2, index_range)
    dq = J1.q_slice(lo, hi) - J2.q_slice(lo, hi)
    dp = J1.p_slice(lo, hi) - J2.p_slice(lo, hi)
    if dq.size == 1:
        return float(abs(dq[0]))
    eigenvalues = eigvalsh_tridiagonal(dq, dp)
    return float(np.max(np.abs(eigenvalues)))
