"""Schema of the JSON run document

Numeric fields accept numbers or decimal strings; unknown keys are rejected.
"""

import json
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from constants import (
    DEFAULT_BAND_SECTION, DEFAULT_CF_DEPTH, DEFAULT_CHAIN_WINDOW, DEFAULT_DIAGONAL,
    DEFAULT_METRIC_LMAX, DEFAULT_PROBE_TRIALS, DEFAULT_TOLERANCE, DEFAULT_TRANSLATION_SHIFTS,
    DEFAULT_VERIFY_BLOCKS, DEFAULT_Z_MULTIPLIERS, DIAGONAL_CONVENTIONS, MIN_CF_DEPTH, VERIFY_CHECKS
)
from services.poly import ExpandingPolynomial, chebyshev_parameter, make_chebyshev_family
from services.tower import AdicInteger, TowerConfig
from utils.common import setup_logging

logger = setup_logging(__name__)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LevelSpec(StrictModel):
    """One tower level: a Chebyshev family member or explicit monic coefficients"""

    degree: Optional[int] = Field(default=None, ge=2)
    a: Optional[float] = Field(default=None, gt=0)
    critical_value: Optional[float] = None
    coefficients: Optional[List[float]] = None

    @model_validator(mode="after")
    def one_form(self):
        family = self.a is not None or self.critical_value is not None
        if self.coefficients is not None:
            if family or self.degree is not None:
                raise ValueError("give either coefficients or degree with a / critical_value")
        elif self.degree is None or (self.a is None) == (self.critical_value is None):
            raise ValueError("a family level needs degree and exactly one of a, critical_value")
        return self

    def build(self, xi: float) -> ExpandingPolynomial:
        if self.coefficients is not None:
            return ExpandingPolynomial.from_coefficients(self.coefficients, xi)
        a = self.a if self.a is not None else chebyshev_parameter(self.degree, self.critical_value)
        return make_chebyshev_family(self.degree, a, xi)


class SeedSpec(StrictModel):
    q: float = 0.0
    p: Optional[float] = Field(default=None, gt=0)


class VerifySettings(StrictModel):
    checks: List[str] = Field(default_factory=lambda: list(VERIFY_CHECKS))
    section_blocks: int = Field(default=DEFAULT_VERIFY_BLOCKS, ge=8)
    z_multipliers: List[float] = Field(default_factory=lambda: list(DEFAULT_Z_MULTIPLIERS))
    chain_window: Tuple[int, int] = DEFAULT_CHAIN_WINDOW
    translation_shifts: List[int] = Field(default_factory=lambda: list(DEFAULT_TRANSLATION_SHIFTS))

    @field_validator("checks")
    @classmethod
    def known_checks(cls, value):
        unknown = [name for name in value if name not in VERIFY_CHECKS]
        if unknown:
            raise ValueError(f"unknown checks {unknown}; choose from {list(VERIFY_CHECKS)}")
        return value


class BandSettings(StrictModel):
    level: int = Field(default=1, ge=0)
    section: Optional[Tuple[int, int]] = None


class MetricSettings(StrictModel):
    l_max: int = Field(default=DEFAULT_METRIC_LMAX, ge=0)
    m_list: List[int] = Field(default_factory=lambda: [1])
    section: Optional[Tuple[int, int]] = None


class ProbeSettings(StrictModel):
    level: int = Field(default=1, ge=1)
    trials: int = Field(default=DEFAULT_PROBE_TRIALS, ge=1)
    rng_seed: int = 0
    blocks: int = Field(default=32, ge=2)


class RunConfig(StrictModel):
    """Run document: a tower plus per-subcommand settings"""

    xi: float = Field(gt=0)
    levels: List[LevelSpec] = Field(default_factory=list)
    digits: List[int] = Field(default_factory=list)
    radices: Optional[List[int]] = None
    depth: Optional[int] = Field(default=None, ge=0)
    window: Tuple[int, int] = (0, 63)
    cf_depth: int = Field(default=DEFAULT_CF_DEPTH, ge=MIN_CF_DEPTH)
    tolerance: float = Field(default=DEFAULT_TOLERANCE, gt=0)
    seed: SeedSpec = Field(default_factory=SeedSpec)
    diagonal: str = DEFAULT_DIAGONAL
    verify: VerifySettings = Field(default_factory=VerifySettings)
    bands: BandSettings = Field(default_factory=BandSettings)
    metric: MetricSettings = Field(default_factory=MetricSettings)
    probe: ProbeSettings = Field(default_factory=ProbeSettings)

    @field_validator("diagonal")
    @classmethod
    def known_diagonal(cls, value):
        if value not in DIAGONAL_CONVENTIONS:
            raise ValueError(f"diagonal must be one of {list(DIAGONAL_CONVENTIONS)}")
        return value

    @model_validator(mode="after")
    def consistent_digits(self):
        radices = self.effective_radices()
        if len(radices) != len(self.digits):
            raise ValueError(f"{len(self.digits)} digits for {len(radices)} radices")
        if self.window[0] > self.window[1]:
            raise ValueError(f"empty window {list(self.window)}")
        return self

    def effective_radices(self) -> List[int]:
        """Explicit radices, or the degrees of every level (one digit each)"""
        if self.radices is not None:
            return list(self.radices)
        return [level.degree or len(level.coefficients) - 1 for level in self.levels]

    @property
    def effective_depth(self) -> int:
        if self.depth is not None:
            return self.depth
        return min(len(self.levels), len(self.digits))

    def polynomials(self) -> Tuple[ExpandingPolynomial, ...]:
        return tuple(level.build(self.xi) for level in self.levels)

    def tower_config(self, window: Optional[Tuple[int, int]] = None, depth: Optional[int] = None) -> TowerConfig:
        return TowerConfig(
            xi=self.xi,
            levels=self.polynomials(),
            digits=AdicInteger(tuple(self.effective_radices()), tuple(self.digits)),
            depth=self.effective_depth if depth is None else depth,
            window=window or self.window,
            cf_depth=self.cf_depth,
            seed_q=self.seed.q,
            seed_p=self.seed.p,
            diagonal=self.diagonal,
            tolerance=self.tolerance,
        )

    @property
    def band_section(self) -> Tuple[int, int]:
        if self.bands.section is not None:
            return self.bands.section
        return self.window[0], self.window[0] + DEFAULT_BAND_SECTION - 1


def load_run_config(path) -> RunConfig:
    """Read and validate a run document

    Raises:
        OSError: unreadable file
        ValueError: malformed JSON
        pydantic.ValidationError: schema violation
    """
    text = Path(path).read_text(encoding="utf-8")
    config = RunConfig.model_validate(json.loads(text))
    logger.info(f"Loaded run config {path}: {len(config.levels)} levels, depth {config.effective_depth}")
    return config
