# test_pipeline.py - End-to-end numerical properties of renormalization towers

import math

import numpy as np
import pytest

from services.analysis import (
    contraction_probe, eigenvalue_band_coverage, padic_topology_table, spectrum_bands
)
from services.inverse_spectral import (
    DiscreteMeasure, characteristic_polynomial, perturbation_gap, stieltjes, wronskian_check
)
from services.jacobi import JacobiWindow, coef_sup_dist, resolvent_00
from services.renorm import (
    RenormOptions, complete_blocks, extract_block, renorm_step, verify_block_identities,
    verify_polynomial_forms, verify_renorm_identity
)
from services.tower import (
    AdicInteger, TowerConfig, build_tower, central_range, chain_rule_check, translation_consistency
)

Z_MULTIPLIERS = (-3.0, -2.0, 2.0, 2.5, 3.0)


def quadratic_tower(quadratic, digits, window, **kwargs):
    return TowerConfig(
        xi=quadratic.xi,
        levels=(quadratic,) * len(digits),
        digits=AdicInteger((2,) * len(digits), tuple(digits)),
        depth=len(digits),
        window=window,
        cf_depth=16,
        **kwargs,
    )


def outer_pair(tower):
    """(J~, J) for the outermost level of a tower"""
    Jt = build_tower(tower.inner())
    return Jt, renorm_step(Jt, tower.levels[0], tower.options(0))


class TestFixedPoint:
    def test_one_step_golden_values(self, constant_seed, quadratic):
        """Constant seed q = 0, p = 6 under z^2 - 132"""
        J = renorm_step(constant_seed, quadratic)
        inner = math.sqrt((132.0 + math.sqrt(17280.0)) / 2.0)
        assert inner == pytest.approx(11.4772256, abs=1e-6)
        assert np.allclose(J.p[0::2], inner, rtol=0.0, atol=1e-8)
        assert np.allclose(J.p[1::2], 6.0 / inner, rtol=0.0, atol=1e-8)
        assert np.allclose(J.q, 0.0, atol=1e-8)


class TestRenormalizationIdentity:
    """Resolvent and polynomial forms on 64-block windows of a depth-2 tower"""

    @pytest.fixture(scope="class")
    def pair(self, quadratic):
        tower = quadratic_tower(quadratic, (1, 0), (0, 127))
        return tower, outer_pair(tower)

    def test_resolvent_identity(self, pair, xi):
        tower, (Jt, J) = pair
        z_samples = [m * xi for m in Z_MULTIPLIERS]
        assert verify_renorm_identity(J, Jt, tower.levels[0], 1, z_samples, 64) <= 1e-6

    def test_polynomial_forms(self, pair):
        tower, (Jt, J) = pair
        intertwining, divided = verify_polynomial_forms(J, Jt, tower.levels[0], 1, 64)
        assert intertwining <= 1e-6
        assert divided <= 1e-6

    def test_block_identities(self, pair):
        tower, (Jt, J) = pair
        identities = verify_block_identities(J, Jt, tower.levels[0], 1)
        assert identities["blocks"] >= 64
        assert identities["product"] <= 1e-9
        assert identities["diagonal"] <= 1e-9


class TestChainRule:
    """Nested runs agree with one run of the composed polynomial"""

    @pytest.mark.parametrize("eps0", [0, 1])
    @pytest.mark.parametrize("eps1", [0, 1])
    def test_quadratic_pair(self, quadratic, eps0, eps1):
        residual = chain_rule_check(quadratic, quadratic, eps0, eps1, (0.0, 6.0), (0, 31), cf_depth=16)
        assert residual <= 1e-7

    @pytest.mark.slow
    @pytest.mark.parametrize("eps0", [0, 1])
    @pytest.mark.parametrize("eps1", [0, 1, 2])
    def test_quadratic_then_cubic(self, quadratic, cubic, eps0, eps1):
        residual = chain_rule_check(quadratic, cubic, eps0, eps1, (0.0, 6.0), (0, 31), cf_depth=16)
        assert residual <= 1e-7


class TestTowerProperties:
    def test_contraction_ratios(self, quadratic):
        """Twenty random admissible pairs under a margin-11 level"""
        report = contraction_probe(quadratic, trials=20, rng_seed=2024, blocks=32, cf_depth=16)
        assert len(report.ratios) == 20
        assert all(ratio < 1.0 for ratio in report.ratios)
        assert report.max_ratio <= 0.2
        assert report.contraction_delta == pytest.approx(0.12)

    def test_seed_independence(self, quadratic):
        """Two constant seeds one unit apart end up within 0.2^4 after four levels"""
        # Arrange
        first = quadratic_tower(quadratic, (0, 1, 0, 1), (0, 31))
        second = quadratic_tower(quadratic, (0, 1, 0, 1), (0, 31), seed_q=0.5, seed_p=5.0)
        initial = coef_sup_dist(first.seed_window((0, 31)), second.seed_window((0, 31)))

        # Act
        distance = coef_sup_dist(build_tower(first), build_tower(second), central_range((0, 31)))

        # Assert
        assert initial == pytest.approx(1.0)
        assert distance <= 0.2 ** 4 * initial

    @pytest.mark.slow
    def test_almost_periodicity(self, quadratic):
        """rho(2^l) decays at least geometrically with ratio 1/2 on a depth-5 tower"""
        tower = quadratic_tower(quadratic, (0, 0, 0, 0, 0), (0, 127))
        report = padic_topology_table(build_tower(tower), tower.digits.radices, 4, [1])
        rho = report.column(1)
        assert len(rho) == 5
        for previous, current in zip(rho[:-1], rho[1:]):
            assert 0.0 < current <= 0.5 * previous
        assert report.slope < 0

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_translation(self, quadratic, m):
        """Adding m to the digits (0, 0, 0) matches conjugation by S^m"""
        tower = quadratic_tower(quadratic, (0, 0, 0), (0, 63))
        assert translation_consistency(tower, m) <= 1e-7


class TestInverseSpectralRoundTrip:
    def test_random_blocks(self, rng):
        """Block -> measure -> block for 100 random blocks of size 2..5"""
        for _ in range(100):
            # Arrange
            d = int(rng.integers(2, 6))
            block = JacobiWindow(0, rng.uniform(-3.0, 3.0, d), rng.uniform(0.5, 3.0, d - 1))
            values, vectors = np.linalg.eigh(block.to_dense())
            mu = DiscreteMeasure(values, vectors[0, :] ** 2 / np.sum(vectors[0, :] ** 2))

            # Act
            rebuilt = stieltjes(mu, d)

            # Assert
            assert np.max(np.abs(rebuilt.q - block.q)) <= 1e-10
            assert np.max(np.abs(rebuilt.p - block.p)) <= 1e-10
            z = 10.0 + rng.uniform(0.0, 5.0)
            assert resolvent_00(rebuilt, z) == pytest.approx(mu.stieltjes_transform(z), rel=1e-10)
            assert characteristic_polynomial(rebuilt).coef == pytest.approx(
                characteristic_polynomial(block).coef, rel=1e-9, abs=1e-9
            )

    def test_density_perturbations(self, rng):
        """eps = 0.05 multiplicative changes move the couplings by at most eps ||J||"""
        eps = 0.05
        for _ in range(100):
            nodes = np.sort(rng.uniform(-10.0, 10.0, 5)) + np.arange(5) * 1e-3
            weights = rng.dirichlet(np.ones(5))
            mu = DiscreteMeasure(nodes, weights)
            factors = np.exp(rng.uniform(-1.0, 1.0, 5) * math.log1p(eps))
            deviation, bound = perturbation_gap(mu, factors, eps)
            assert deviation <= bound


class TestWronskianOnPipeline:
    """Wronskian identity on every block of a cubic renormalization"""

    @pytest.fixture
    def cubic_step(self, constant_seed, cubic):
        return renorm_step(constant_seed, cubic, RenormOptions())

    def test_holds_on_every_block(self, cubic_step, constant_seed, cubic):
        blocks = complete_blocks(cubic_step, constant_seed, 3, 0)
        assert blocks
        residual = 0.0
        for s in blocks:
            block, closing = extract_block(cubic_step, s, 3)
            residual = max(residual, wronskian_check(block, cubic, closing))
        assert residual <= 1e-8

    def test_injected_perturbation(self, cubic_step, cubic):
        """p_17 is the second inner coupling of block 5 (sites 15..17)"""
        corrupted = cubic_step.perturbed("p", 17, 0.1)
        block, closing = extract_block(corrupted, 5, 3)
        assert wronskian_check(block, cubic, closing) >= 1e-3


class TestBandStructure:
    def test_counts_nesting_and_measure(self, quadratic):
        reports = [spectrum_bands([quadratic] * 3, level) for level in (1, 2, 3)]
        assert [report.count for report in reports] == [2, 4, 8]
        assert reports[0].measure == pytest.approx(2.0 * (12.0 - math.sqrt(120.0)), abs=1e-9)

        measures = reports[-1].measure_by_level
        for previous, current in zip(measures[:-1], measures[1:]):
            assert current <= 0.5 * previous

        for outer, inner in zip(reports[:-1], reports[1:]):
            for lo, hi in inner.bands:
                assert any(a - 1e-12 <= lo and hi <= b + 1e-12 for a, b in outer.bands)

    def test_section_coverage(self, quadratic):
        """A 200-site section of J_1 has at least 196 eigenvalues in the bands"""
        tower = quadratic_tower(quadratic, (0,), (0, 199))
        inside, outliers = eigenvalue_band_coverage(build_tower(tower), spectrum_bands([quadratic], 1))
        assert inside + outliers == 200
        assert inside >= 196
