import os
import warnings
from dataclasses import replace
from typing import Dict, List, Optional, Tuple

# Setup project path
from utils.common import (
    setup_project_path, setup_logging, log_execution_time, handle_exceptions,
    create_report_dict, warning_names
)
setup_project_path()

from config.run_config import RunConfig, load_run_config
from config.settings import Config
from constants import (
    BANDS_FILE, BLOCK_IDENTITY_TOL, CHAIN_RULE_TOL, COEFFICIENTS_FILE, DEFAULT_OUT_DIR, EXIT_CONFIG, EXIT_OK,
    EXIT_VERIFICATION, FORMS_TOL, IDENTITY_TOL, METRIC_FILE, OUTLIER_ALLOWANCE, PROBE_FILE,
    REPORT_FILE, ROUNDTRIP_TOL, TRANSLATION_TOL, VERIFY_CHECKS, VERIFY_FILE, WRONSKIAN_TOL
)
from services.analysis import (
    contraction_probe, eigenvalue_band_coverage, padic_topology_table, spectrum_bands
)
from services.inverse_spectral import wronskian_check
from services.jacobi import JacobiWindow, coef_sup_dist
from services.renorm import (
    complete_blocks, extract_block, renorm_step, verify_block_identities,
    verify_polynomial_forms, verify_renorm_identity
)
from services.tower import build_tower, chain_rule_check, tower_iterate, translation_consistency
from utils.errors import ValidationError
from utils.report_writer import (
    read_coefficients, write_coefficients, write_csv, write_json
)

logger = setup_logging(__name__, Config.LOG_LEVEL, Config.LOG_FILE)

COMMANDS = ("build", "verify", "bands", "metric", "probe")


def parse_perturb(spec: Optional[str]) -> Optional[Tuple[str, int, float]]:
    """Parse "p:k:delta" or "q:k:delta"

    Raises:
        ValidationError: malformed specification
    """
    if not spec:
        return None
    parts = spec.split(":")
    if len(parts) != 3 or parts[0] not in ("p", "q"):
        raise ValidationError(f"perturbation '{spec}' is not of the form p:k:delta or q:k:delta",
                              invariant="perturbation")
    try:
        return parts[0], int(parts[1]), float(parts[2])
    except ValueError:
        raise ValidationError(f"perturbation '{spec}' has a non-numeric index or delta",
                              invariant="perturbation")


def parse_checks(spec: Optional[str]) -> Optional[List[str]]:
    """Comma separated check names; None keeps the config's list"""
    if not spec:
        return None
    names = [name.strip() for name in spec.split(",") if name.strip()]
    unknown = [name for name in names if name not in VERIFY_CHECKS]
    if unknown:
        raise ValidationError(f"unknown checks {unknown}; choose from {list(VERIFY_CHECKS)}",
                              invariant="checks")
    return names


def check_entry(residual: float, tolerance: float, **extra) -> Dict:
    entry = {"residual": float(residual), "tolerance": tolerance, "passed": bool(residual <= tolerance)}
    entry.update(extra)
    return entry


class RenormBatchApp:
    """One handler per subcommand; each returns an exit code"""

    def __init__(self, config_path: str, out_dir: str = DEFAULT_OUT_DIR,
                 checks: Optional[str] = None, perturb: Optional[str] = None):
        self.config_path = config_path
        self.out_dir = out_dir
        self.checks_spec = checks
        self.perturb_spec = perturb

    def output_path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def load(self) -> RunConfig:
        return load_run_config(self.config_path)

    def run(self, command: str) -> int:
        if command not in COMMANDS:
            logger.error(f"Unknown command '{command}'")
            return EXIT_CONFIG
        return getattr(self, f"cmd_{command}")()

    @handle_exceptions()
    @log_execution_time
    def cmd_build(self) -> int:
        """Build J_n, write coefficients.csv and report.json"""
        config = self.load()
        tower = config.tower_config()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            J, report = tower_iterate(tower)

        write_coefficients(self.output_path(COEFFICIENTS_FILE), J)
        write_json(self.output_path(REPORT_FILE), create_report_dict("build", True, {
            "window": list(tower.window),
            "depth": tower.depth,
            "digits": list(tower.digits.digits),
            "radices": list(tower.digits.radices),
            "degrees": list(tower.degrees),
            "margins": [T.margin for T in tower.levels[: tower.depth]],
            "convergence": report.to_dict(),
            "warnings": warning_names(caught),
        }))
        return EXIT_OK

    def _verification_pair(self, config: RunConfig) -> Tuple[object, JacobiWindow, JacobiWindow]:
        """(tower, J~, J) for the outermost level on the verification window"""
        d = config.levels[0].build(config.xi).degree
        lo = config.window[0]
        window = (lo, lo + d * config.verify.section_blocks - 1)
        tower = config.tower_config(window=window)
        inner = tower.inner()
        Jt = build_tower(inner)
        J = renorm_step(Jt, tower.levels[0], tower.options(0))
        return tower, Jt, J

    def _apply_perturbation(self, J: JacobiWindow) -> JacobiWindow:
        perturbation = parse_perturb(self.perturb_spec)
        if perturbation is None:
            return J
        kind, k, delta = perturbation
        lowest = J.lo if kind == "q" else J.lo + 1
        if not lowest <= k <= J.hi:
            raise ValidationError(f"perturbed index {k} is outside [{lowest}, {J.hi}]", invariant="perturbation")
        logger.info(f"Injecting {kind}_{k} += {delta}")
        return J.perturbed(kind, k, delta)

    @handle_exceptions()
    @log_execution_time
    def cmd_verify(self) -> int:
        """Run the named checks and write verify.json; exit 4 if any fails"""
        config = self.load()
        if config.effective_depth < 1:
            raise ValidationError("verification needs depth >= 1", invariant="depth")
        names = parse_checks(self.checks_spec) or list(config.verify.checks)

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            results = self._run_checks(config, names)

        passed = all(entry["passed"] for entry in results.values())
        write_json(self.output_path(VERIFY_FILE), create_report_dict("verify", passed, {
            "checks": results,
            "warnings": warning_names(caught),
        }))
        for name, entry in results.items():
            if not entry["passed"]:
                logger.error(f"Check '{name}' failed: residual {entry['residual']:.3e} > {entry['tolerance']:g}")
        return EXIT_OK if passed else EXIT_VERIFICATION

    def _run_checks(self, config: RunConfig, names: List[str]) -> Dict[str, Dict]:
        results: Dict[str, Dict] = {}
        needs_pair = {"identity", "forms", "wronskian", "block_identities"} & set(names)
        if needs_pair:
            tower, Jt, J = self._verification_pair(config)
            J = self._apply_perturbation(J)
            T = tower.levels[0]
            epsilon = tower.digits.digits[0]
            L = config.verify.section_blocks

        if "identity" in names:
            z_samples = [m * config.xi for m in config.verify.z_multipliers]
            residual = verify_renorm_identity(J, Jt, T, epsilon, z_samples, L)
            results["identity"] = check_entry(residual, IDENTITY_TOL, z_samples=z_samples)

        if "forms" in names:
            residual_1, residual_2 = verify_polynomial_forms(J, Jt, T, epsilon, L)
            results["forms"] = check_entry(max(residual_1, residual_2), FORMS_TOL,
                                           intertwining=residual_1, divided_difference=residual_2)

        if "wronskian" in names:
            residual = 0.0
            for s in complete_blocks(J, Jt, T.degree, epsilon):
                block, closing = extract_block(J, s, T.degree, epsilon)
                residual = max(residual, wronskian_check(block, T, closing))
            results["wronskian"] = check_entry(residual, WRONSKIAN_TOL)

        if "block_identities" in names:
            identities = verify_block_identities(J, Jt, T, epsilon, config.diagonal)
            residual = max(identities["product"], identities["diagonal"] / max(1.0, config.xi),
                           identities["coupling_excess"])
            results["block_identities"] = check_entry(residual, BLOCK_IDENTITY_TOL, **identities)

        if "chain" in names:
            results["chain"] = self._chain_check(config)

        if "translation" in names:
            tower = config.tower_config()
            residuals = {str(m): translation_consistency(tower, m) for m in config.verify.translation_shifts}
            results["translation"] = check_entry(max(residuals.values(), default=0.0), TRANSLATION_TOL,
                                                 by_shift=residuals)

        if "roundtrip" in names:
            results["roundtrip"] = self._roundtrip_check(config)
        return results

    def _chain_check(self, config: RunConfig) -> Dict:
        """Nested against composed runs over every digit pair of the first two levels"""
        polynomials = config.polynomials()
        T1 = polynomials[0]
        T2 = polynomials[1] if len(polynomials) > 1 else polynomials[0]
        seed = (config.seed.q, config.seed.p if config.seed.p is not None else config.xi / 2.0)
        residuals = {}
        for eps0 in range(T1.degree):
            for eps1 in range(T2.degree):
                residuals[f"{eps0},{eps1}"] = chain_rule_check(
                    T1, T2, eps0, eps1, seed, config.verify.chain_window, config.cf_depth, config.diagonal
                )
        return check_entry(max(residuals.values()), CHAIN_RULE_TOL, by_digits=residuals,
                           degrees=[T1.degree, T2.degree])

    def _roundtrip_check(self, config: RunConfig) -> Dict:
        path = self.output_path(COEFFICIENTS_FILE)
        if not os.path.exists(path):
            return {"residual": 0.0, "tolerance": ROUNDTRIP_TOL, "passed": True, "skipped": True}
        stored = read_coefficients(path)
        fresh = build_tower(config.tower_config())
        if stored.index_range != fresh.index_range:
            raise ValidationError(
                f"{path} covers {stored.index_range}, config window is {fresh.index_range}",
                invariant="roundtrip window",
            )
        return check_entry(coef_sup_dist(stored, fresh), ROUNDTRIP_TOL, skipped=False)

    @handle_exceptions()
    @log_execution_time
    def cmd_bands(self) -> int:
        """Level-l bands, their measures and the coverage of a tower section"""
        config = self.load()
        level = config.bands.level
        polynomials = config.polynomials()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report = spectrum_bands(polynomials, level)
            tower = config.tower_config(window=config.band_section, depth=level)
            J = build_tower(tower)
            inside, outliers = eigenvalue_band_coverage(J, report)
        report = replace(report, inside=inside, outliers=outliers)

        write_json(self.output_path(BANDS_FILE), create_report_dict("bands", outliers <= OUTLIER_ALLOWANCE, {
            "level": report.level,
            "count": report.count,
            "bands": [list(band) for band in report.bands],
            "measure": report.measure,
            "measure_by_level": report.measure_by_level,
            "coverage": {
                "section": list(config.band_section),
                "inside": inside,
                "outliers": outliers,
                "allowance": OUTLIER_ALLOWANCE,
            },
            "warnings": warning_names(caught),
        }))
        return EXIT_OK

    @handle_exceptions()
    @log_execution_time
    def cmd_metric(self) -> int:
        """rho(d_1...d_l m) table as metric.csv"""
        config = self.load()
        tower = config.tower_config()
        J = build_tower(tower)
        report = padic_topology_table(
            J, tower.digits.radices, config.metric.l_max, config.metric.m_list, config.metric.section
        )
        rows = [[l, m, rho, report.section_size] for l, m, _, rho in report.rows]
        write_csv(self.output_path(METRIC_FILE), ["l", "m", "rho", "section"], rows)
        return EXIT_OK

    @handle_exceptions()
    @log_execution_time
    def cmd_probe(self) -> int:
        """Contraction ratios for one level as probe.json"""
        config = self.load()
        polynomials = config.polynomials()
        if config.probe.level > len(polynomials):
            raise ValidationError(f"probe level {config.probe.level} has no polynomial", invariant="probe level")
        T = polynomials[config.probe.level - 1]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report = contraction_probe(
                T,
                trials=config.probe.trials,
                rng_seed=config.probe.rng_seed,
                blocks=config.probe.blocks,
                cf_depth=config.cf_depth,
                diagonal=config.diagonal,
            )
        data = report.to_dict()
        data["warnings"] = warning_names(caught)
        write_json(self.output_path(PROBE_FILE), create_report_dict("probe", report.max_ratio < 1.0, data))
        return EXIT_OK
