"""Diagnostics of tower outputs: shift metric, band structure, contraction"""

import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from constants import (
    BAND_DILATION, DEFAULT_CF_DEPTH, DEFAULT_DIAGONAL, DEFAULT_PROBE_TRIALS, OUTLIER_ALLOWANCE,
    PROBE_NOISE, SEED_BOUND_SLACK, CONTRACTION_MARGIN
)
from services.jacobi import (
    IndexRange, JacobiWindow, section_opnorm_diff, section_spectrum, shift_conjugate
)
from services.poly import ExpandingPolynomial, preimage_intervals
from services.renorm import RenormOptions, renorm_step
from utils.common import setup_logging
from utils.errors import ContractivityWarning, ValidationError, VerificationError, WindowTooShort

logger = setup_logging(__name__)

Band = Tuple[float, float]
SeedPairGenerator = Callable[[np.random.Generator, int, int, float], Tuple[JacobiWindow, JacobiWindow]]


@dataclass
class MetricReport:
    """Finite-section values of rho_J(k) for k = d_1...d_l m"""

    rows: List[Tuple[int, int, int, float]]
    section: IndexRange
    slope: Optional[float] = None
    rate: Optional[float] = None

    @property
    def section_size(self) -> int:
        return self.section[1] - self.section[0] + 1

    def column(self, m: int) -> List[float]:
        """rho values for a fixed multiplier m, ordered by l"""
        return [rho for _, mm, _, rho in sorted(self.rows) if mm == m]


@dataclass
class BandReport:
    """Bands (T_l o ... o T_1)^-1([-xi, xi]) and the finite-section coverage of them"""

    level: int
    bands: List[Band]
    measure: float
    measure_by_level: List[float] = field(default_factory=list)
    inside: Optional[int] = None
    outliers: Optional[int] = None

    @property
    def count(self) -> int:
        return len(self.bands)

    def contains(self, value: float, dilation: float = BAND_DILATION) -> bool:
        return any(lo - dilation <= value <= hi + dilation for lo, hi in self.bands)


def shift_metric(J: JacobiWindow, k: int, section: IndexRange) -> float:
    """|S^-k J S^k - J| on a finite section

    Raises:
        WindowTooShort: the section shifted by k leaves the window
    """
    lo, hi = section
    if not (J.contains((lo, hi)) and J.contains((lo + k, hi + k))):
        raise WindowTooShort(
            f"section [{lo}, {hi}] shifted by {k} leaves [{J.lo}, {J.hi}]", invariant="metric window"
        )
    if k == 0:
        return 0.0
    return section_opnorm_diff(J, shift_conjugate(J, k), section)


def padic_topology_table(J: JacobiWindow, radices: Sequence[int], l_max: int, m_list: Sequence[int],
                         section: Optional[IndexRange] = None, strict: bool = True) -> MetricReport:
    """rho(d_1...d_l m) for l = 0..l_max and m in m_list, with a log-linear fit in l

    The fit uses every positive entry; exact zeros (periodic inputs) are skipped.

    Raises:
        VerificationError: strict and the fitted slope is not negative
    """
    if l_max > len(radices):
        raise ValidationError(f"l_max {l_max} exceeds the {len(radices)} radices", invariant="l_max")
    moduli = [int(np.prod(radices[:l])) for l in range(l_max + 1)]
    k_max = max(moduli) * max(abs(m) for m in m_list)
    if section is None:
        section = (J.lo, J.hi - k_max)

    rows = []
    for l, modulus in enumerate(moduli):
        for m in m_list:
            k = modulus * m
            rows.append((l, m, k, shift_metric(J, k, section)))

    points = [(l, rho) for l, _, _, rho in rows if rho > 0]
    slope = rate = None
    if len({l for l, _ in points}) >= 2:
        x, y = zip(*points)
        slope = float(np.polyfit(np.array(x, dtype=float), np.log(np.array(y)), 1)[0])
        rate = float(np.exp(slope))
        if strict and slope >= 0:
            raise VerificationError(f"log rho has slope {slope:.4g} >= 0 in l", invariant="metric decay")
    logger.info(f"Metric table over {len(rows)} shifts on section {section}: slope {slope}")
    return MetricReport(rows=rows, section=(int(section[0]), int(section[1])), slope=slope, rate=rate)


def _clip(band: Band, xi: float) -> Band:
    return max(band[0], -xi), min(band[1], xi)


def nested_bands(levels: Sequence[ExpandingPolynomial], ell: int) -> List[Band]:
    """T_1^-1(T_2^-1(...T_ell^-1([-xi, xi]))), sorted"""
    if ell > len(levels):
        raise ValidationError(f"level {ell} requested, {len(levels)} available", invariant="band level")
    xi = levels[0].xi if levels else None
    if ell == 0:
        return [(-xi, xi)] if xi is not None else []
    bands = [(-xi, xi)]
    for T in reversed(levels[:ell]):
        bands = sorted(
            _clip(piece, xi) for band in bands for piece in preimage_intervals(T, band)
        )
    return bands


def spectrum_bands(levels: Sequence[ExpandingPolynomial], ell: int) -> BandReport:
    """Level-ell spectral bands and the total measure at every level up to ell"""
    if not levels:
        raise ValidationError("at least one level is required", invariant="band level")
    measures = []
    bands: List[Band] = []
    for j in range(ell + 1):
        bands = nested_bands(levels, j)
        measures.append(float(sum(hi - lo for lo, hi in bands)))
    for previous, current in zip(measures[:-1], measures[1:]):
        if current >= previous:
            logger.warning(f"Band measure did not decrease: {previous:.6g} -> {current:.6g}")
    return BandReport(level=ell, bands=bands, measure=measures[-1], measure_by_level=measures)


def eigenvalue_band_coverage(J: JacobiWindow, bands: BandReport,
                             section: Optional[IndexRange] = None) -> Tuple[int, int]:
    """(inside, outliers) for the section eigenvalues against the bands dilated by 1e-6"""
    eigenvalues = section_spectrum(J, section)
    inside = sum(1 for value in eigenvalues if bands.contains(value))
    outliers = eigenvalues.size - inside
    if outliers > OUTLIER_ALLOWANCE:
        logger.warning(f"{outliers} eigenvalues outside the level-{bands.level} bands "
                       f"(allowance {OUTLIER_ALLOWANCE})")
    return int(inside), int(outliers)


def contraction_delta(T: ExpandingPolynomial) -> float:
    """max_c (|T(c)|/xi + 1) / (|T(c)|/xi - 1)^2"""
    ratios = np.abs(np.asarray(T.critical_values)) / T.xi
    return float(np.max((ratios + 1.0) / (ratios - 1.0) ** 2))


def block_coupling_bound(T: ExpandingPolynomial) -> float:
    """max_c 1 / (|T(c)|/xi - 1)"""
    ratios = np.abs(np.asarray(T.critical_values)) / T.xi
    return float(np.max(1.0 / (ratios - 1.0)))


def edge_coupling_bound(T: ExpandingPolynomial) -> float:
    """(1 + delta/2) / (margin - 1)"""
    return (1.0 + contraction_delta(T) / 2.0) / (T.margin - 1.0)


def noisy_seed_pair(rng: np.random.Generator, lo: int, hi: int, xi: float) -> Tuple[JacobiWindow, JacobiWindow]:
    """Two seeds with p = 0.3 xi + U(0, 0.1 xi) and q = U(-0.1 xi, 0.1 xi)"""
    length = hi - lo + 1

    def draw() -> JacobiWindow:
        q = rng.uniform(-PROBE_NOISE * xi, PROBE_NOISE * xi, size=length)
        p = 0.3 * xi + rng.uniform(0.0, PROBE_NOISE * xi, size=length - 1)
        return JacobiWindow(lo, q, p)

    return draw(), draw()


@dataclass
class ProbeReport:
    """Observed contraction ratios against the analytic bounds"""

    ratios: List[float]
    max_ratio: float
    contraction_delta: float
    edge_bound: float
    block_coupling_bound: float
    margin: float
    meets_contraction_margin: bool

    def to_dict(self) -> dict:
        return {
            "trials": len(self.ratios),
            "ratios": [float(r) for r in self.ratios],
            "max_ratio": float(self.max_ratio),
            "paper_delta": float(self.contraction_delta),
            "contraction_delta": float(self.contraction_delta),
            "edge_coupling_bound": float(self.edge_bound),
            "block_coupling_bound": float(self.block_coupling_bound),
            "margin": float(self.margin),
            "meets_contraction_margin": self.meets_contraction_margin,
        }


def contraction_probe(T: ExpandingPolynomial, trials: int = DEFAULT_PROBE_TRIALS,
                      seed_pair_generator: Optional[SeedPairGenerator] = None,
                      rng_seed: int = 0, blocks: int = 32, cf_depth: int = DEFAULT_CF_DEPTH,
                      diagonal: str = DEFAULT_DIAGONAL) -> ProbeReport:
    """Ratio |J(J~1) - J(J~2)| / |J~1 - J~2| over random admissible seed pairs

    Inputs live on [-cf_depth, blocks]; outputs are compared on every site they
    determine and inputs on their whole window.
    """
    if trials < 1:
        raise ValidationError("trials must be positive", invariant="trials")
    if T.margin < CONTRACTION_MARGIN:
        message = f"probe margin {T.margin:.4g} is below {CONTRACTION_MARGIN:g}; ratios may exceed 1"
        logger.warning(message)
        warnings.warn(message, ContractivityWarning, stacklevel=2)

    generator = seed_pair_generator or noisy_seed_pair
    rng = np.random.default_rng(rng_seed)
    lo, hi = -cf_depth, blocks
    pairs = [generator(rng, lo, hi, T.xi) for _ in range(trials)]

    opts = RenormOptions(cf_depth=cf_depth, diagonal=diagonal)
    ratios = []
    for first, second in pairs:
        for seed in (first, second):
            if seed.norm_bound() > T.xi * (1.0 + SEED_BOUND_SLACK):
                raise ValidationError("probe seed violates |q| + 2p <= xi", invariant="seed bound")
        before = section_opnorm_diff(first, second)
        if before == 0.0:
            continue
        after = section_opnorm_diff(renorm_step(first, T, opts), renorm_step(second, T, opts))
        ratios.append(after / before)

    if not ratios:
        raise ValidationError("every probe pair was identical", invariant="trials")
    report = ProbeReport(
        ratios=ratios,
        max_ratio=float(max(ratios)),
        contraction_delta=contraction_delta(T),
        edge_bound=edge_coupling_bound(T),
        block_coupling_bound=block_coupling_bound(T),
        margin=T.margin,
        meets_contraction_margin=T.meets_contraction_margin,
    )
    logger.info(f"Contraction probe: max ratio {report.max_ratio:.4g} over {len(ratios)} pairs, "
                f"delta {report.contraction_delta:.4g}")
    return report
