"""Polynomial towers: iterated renormalization with mixed-radix digit addressing

J_n = J(eps_0 + eps_1 d_1 + ... + eps_{n-1} d_1...d_{n-1}, J~; T_n o ... o T_1)
is built innermost first: a constant seed at level n is renormalized with
T_n, then T_{n-1}, down to T_1.
"""

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from constants import (
    DEFAULT_CF_DEPTH, DEFAULT_DIAGONAL, DEFAULT_TOLERANCE, MIN_CF_DEPTH, SEED_BOUND_SLACK
)
from services.jacobi import IndexRange, JacobiWindow, coef_sup_dist, constant_window, shift_conjugate
from services.poly import ExpandingPolynomial, compose
from services.renorm import RenormOptions, renorm_step
from utils.common import log_execution_time, setup_logging
from utils.errors import DigitOverflowBeyondPrefix, InsufficientWindow, ValidationError

logger = setup_logging(__name__)


@dataclass(frozen=True)
class AdicInteger:
    """Finite prefix of a point of lim<- Z/(d_1...d_k)Z

    digits[k] is eps_k with 0 <= eps_k < radices[k].
    """

    radices: Tuple[int, ...]
    digits: Tuple[int, ...]

    def __post_init__(self):
        radices = tuple(int(r) for r in self.radices)
        digits = tuple(int(e) for e in self.digits)
        if len(radices) != len(digits):
            raise ValidationError(
                f"{len(digits)} digits for {len(radices)} radices", invariant="digit count"
            )
        for k, (radix, digit) in enumerate(zip(radices, digits)):
            if radix < 2:
                raise ValidationError(f"radix d_{k + 1} = {radix} must be >= 2", invariant="radix")
            if not 0 <= digit < radix:
                raise ValidationError(
                    f"digit eps_{k} = {digit} outside [0, {radix - 1}]", invariant="digit bound"
                )
        object.__setattr__(self, "radices", radices)
        object.__setattr__(self, "digits", digits)

    @classmethod
    def from_integer(cls, n: int, radices: Sequence[int]) -> "AdicInteger":
        """Digits of n modulo d_1...d_k (negative n wraps)"""
        digits = []
        rest = int(n)
        for radix in radices:
            rest, digit = divmod(rest, int(radix))
            digits.append(digit)
        return cls(tuple(radices), tuple(digits))

    @property
    def length(self) -> int:
        return len(self.digits)

    def modulus(self, k: Optional[int] = None) -> int:
        """d_1 ... d_k"""
        return math.prod(self.radices[:k])

    def offset(self, n: int) -> int:
        """eps_0 + eps_1 d_1 + ... + eps_{n-1} d_1...d_{n-1}"""
        value, scale = 0, 1
        for radix, digit in zip(self.radices[:n], self.digits[:n]):
            value += digit * scale
            scale *= radix
        return value

    @property
    def value(self) -> int:
        return self.offset(self.length)

    def truncate(self, k: int) -> "AdicInteger":
        return AdicInteger(self.radices[:k], self.digits[:k])


def adic_add(a: AdicInteger, m: int) -> AdicInteger:
    """a + m with carry propagated digit by digit

    Raises:
        DigitOverflowBeyondPrefix: a carry or borrow leaves the stored prefix
    """
    carry = int(m)
    digits = []
    for radix, digit in zip(a.radices, a.digits):
        carry, new_digit = divmod(digit + carry, radix)
        digits.append(new_digit)
    if carry != 0:
        raise DigitOverflowBeyondPrefix(
            f"adding {m} carries {carry} past the {a.length} stored digits", invariant="digit prefix"
        )
    return AdicInteger(a.radices, tuple(digits))


def check_seed(q: float, p: float, xi: float) -> None:
    """Constant seeds need p > 0 and |q| + 2p <= xi"""
    if not p > 0:
        raise ValidationError(f"seed p must be positive, got {p!r}", invariant="p > 0")
    if abs(q) + 2.0 * p > xi * (1.0 + SEED_BOUND_SLACK):
        raise ValidationError(
            f"seed |q| + 2p = {abs(q) + 2.0 * p:.6g} exceeds xi = {xi:.6g}", invariant="seed bound"
        )


@dataclass(frozen=True)
class TowerConfig:
    """Everything a tower run needs

    `digits` may store more digits than `depth` uses; its radices must agree
    with the level degrees wherever levels exist.
    """

    xi: float
    levels: Tuple[ExpandingPolynomial, ...]
    digits: AdicInteger
    depth: int
    window: IndexRange
    cf_depth: int = DEFAULT_CF_DEPTH
    seed_q: float = 0.0
    seed_p: Optional[float] = None
    diagonal: str = DEFAULT_DIAGONAL
    tolerance: float = DEFAULT_TOLERANCE
    threads: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "window", (int(self.window[0]), int(self.window[1])))
        if self.seed_p is None:
            object.__setattr__(self, "seed_p", self.xi / 2.0)
        if not self.xi > 0:
            raise ValidationError("xi must be positive", invariant="xi")
        if not 0 <= self.depth <= len(self.levels):
            raise ValidationError(
                f"depth {self.depth} needs as many levels, got {len(self.levels)}", invariant="depth"
            )
        if self.depth > self.digits.length:
            raise ValidationError(
                f"depth {self.depth} needs as many digits, got {self.digits.length}", invariant="digit count"
            )
        for k, T in enumerate(self.levels):
            if abs(T.xi - self.xi) > 1e-12 * self.xi:
                raise ValidationError(f"level {k + 1} has xi {T.xi}, expected {self.xi}", invariant="shared xi")
            if k < self.digits.length and T.degree != self.digits.radices[k]:
                raise ValidationError(
                    f"level {k + 1} has degree {T.degree} but radix {self.digits.radices[k]}",
                    invariant="radices",
                )
        if self.window[0] > self.window[1]:
            raise ValidationError(f"empty window {self.window}", invariant="window")
        if self.cf_depth < MIN_CF_DEPTH:
            raise ValidationError(f"cf_depth must be >= {MIN_CF_DEPTH}", invariant="cf_depth")
        check_seed(self.seed_q, self.seed_p, self.xi)

    @property
    def degrees(self) -> Tuple[int, ...]:
        return tuple(T.degree for T in self.levels[: self.depth])

    def truncated(self, n: int) -> "TowerConfig":
        return replace(self, depth=n)

    def options(self, k: int) -> RenormOptions:
        """Step options for level k + 1 (digit eps_k)"""
        return RenormOptions(
            cf_depth=self.cf_depth,
            epsilon=self.digits.digits[k],
            tolerance=self.tolerance,
            diagonal=self.diagonal,
            threads=self.threads,
        )

    def seed_window(self, index_range: IndexRange) -> JacobiWindow:
        return constant_window(self.seed_q, self.seed_p, *index_range)

    def inner(self) -> "TowerConfig":
        """The tower below level 1, on the window level 1 needs"""
        if self.depth < 1:
            raise ValidationError("depth 0 has no inner tower", invariant="depth")
        digits = AdicInteger(self.digits.radices[1:], self.digits.digits[1:])
        return replace(self, levels=self.levels[1:], digits=digits, depth=self.depth - 1,
                       window=required_window(self)[1])


@dataclass
class ConvergenceReport:
    """Increments |J_k - J_{k-1}| on the central window and their geometric fit"""

    depth: int
    central: IndexRange
    increments: List[float]
    rate: Optional[float] = None
    amplitude: Optional[float] = None
    windows: List[IndexRange] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "central_window": list(self.central),
            "increments": [float(v) for v in self.increments],
            "fitted_rate": self.rate,
            "fitted_amplitude": self.amplitude,
            "windows": [list(w) for w in self.windows],
        }


def required_window(config: TowerConfig) -> List[IndexRange]:
    """Index windows needed at every level, outermost (the output) first

    Level k + 1 must cover the blocks of the level-k window, widened by N on
    the left (continued fractions) and 1 on the right (the next coupling).
    """
    lo, hi = config.window
    windows = [(lo, hi)]
    for k in range(config.depth):
        d = config.levels[k].degree
        epsilon = config.digits.digits[k]
        s_min = (lo - epsilon) // d
        s_max = (hi + 1 - epsilon) // d
        lo, hi = s_min - config.cf_depth, s_max + 1
        windows.append((lo, hi))
    return windows


def build_tower(config: TowerConfig) -> JacobiWindow:
    """J_n on config.window, one pass from the seed inward"""
    windows = required_window(config)
    current = config.seed_window(windows[config.depth])
    for k in range(config.depth - 1, -1, -1):
        current = renorm_step(current, config.levels[k], config.options(k))
        if not current.contains(windows[k]):
            raise InsufficientWindow(
                f"level {k + 1} produced [{current.lo}, {current.hi}], needed {windows[k]}",
                invariant="window growth",
            )
        current = current.section(*windows[k])
        logger.info(f"Level {k + 1}: degree {config.levels[k].degree}, digit {config.digits.digits[k]}, "
                    f"window [{current.lo}, {current.hi}]")
    return current


def central_range(index_range: IndexRange) -> IndexRange:
    """Central half of an index range"""
    lo, hi = index_range
    length = hi - lo + 1
    start = lo + length // 4
    return start, start + max(length // 2, 1) - 1


def fit_geometric(values: Sequence[float]) -> Tuple[Optional[float], Optional[float]]:
    """Least-squares fit values[j] ~ A c^j over the positive entries; (c, A)"""
    points = [(j, v) for j, v in enumerate(values) if v > 0]
    if len(points) < 2:
        return None, None
    x, y = zip(*points)
    slope, intercept = np.polyfit(np.array(x, dtype=float), np.log(np.array(y)), 1)
    return float(np.exp(slope)), float(np.exp(intercept))


@log_execution_time
def tower_iterate(config: TowerConfig) -> Tuple[JacobiWindow, ConvergenceReport]:
    """J_n together with the per-depth increments |J_k - J_{k-1}|, k = 1..n"""
    central = central_range(config.window)
    previous = config.seed_window(config.window)
    increments = []
    current = previous
    for k in range(1, config.depth + 1):
        current = build_tower(config.truncated(k))
        increments.append(coef_sup_dist(current, previous, central))
        previous = current

    rate, amplitude = fit_geometric(increments)
    if rate is not None and rate >= 1.0:
        logger.warning(f"Fitted increment rate {rate:.4g} is not below 1")
    report = ConvergenceReport(
        depth=config.depth,
        central=central,
        increments=increments,
        rate=rate,
        amplitude=amplitude,
        windows=required_window(config),
    )
    logger.info(f"Tower of depth {config.depth} done; increments {['%.3e' % v for v in increments]}")
    return current, report


def chain_rule_check(T1: ExpandingPolynomial, T2: ExpandingPolynomial, eps0: int, eps1: int,
                     seed: Tuple[float, float], window: IndexRange, cf_depth: int = DEFAULT_CF_DEPTH,
                     diagonal: str = DEFAULT_DIAGONAL) -> float:
    """|J(eps0, J(eps1, J~; T2); T1) - J(eps0 + eps1 d1, J~; T2 o T1)| on the central half-window"""
    q, p = seed
    nested = TowerConfig(
        xi=T1.xi,
        levels=(T1, T2),
        digits=AdicInteger((T1.degree, T2.degree), (eps0, eps1)),
        depth=2,
        window=window,
        cf_depth=cf_depth,
        seed_q=q,
        seed_p=p,
        diagonal=diagonal,
    )
    composite = compose(T2, T1)
    direct = TowerConfig(
        xi=T1.xi,
        levels=(composite,),
        digits=AdicInteger((composite.degree,), (eps0 + eps1 * T1.degree,)),
        depth=1,
        window=window,
        cf_depth=cf_depth,
        seed_q=q,
        seed_p=p,
        diagonal=diagonal,
    )
    residual = coef_sup_dist(build_tower(nested), build_tower(direct), central_range(window))
    logger.info(f"Chain rule eps=({eps0}, {eps1}), degrees ({T1.degree}, {T2.degree}): residual {residual:.3e}")
    return residual


def translation_consistency(config: TowerConfig, m: int) -> float:
    """|J(alpha + m) - S^m J(alpha) S^-m| on the central half-window

    Raises:
        DigitOverflowBeyondPrefix: the carry of alpha + m leaves the stored digits
    """
    if m == 0:
        return 0.0
    moved = adic_add(config.digits, m)
    lo, hi = config.window
    original = build_tower(replace(config, window=(lo - m, hi - m)))
    translated = build_tower(replace(config, digits=moved))
    residual = coef_sup_dist(translated, shift_conjugate(original, -m), central_range(config.window))
    logger.info(f"Translation by {m}: digits {config.digits.digits} -> {moved.digits}, residual {residual:.3e}")
    return residual
