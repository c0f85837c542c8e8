# test_common.py - Unit tests for errors, settings, run documents and report writers

import importlib
import json
import math
import os
import sys
import warnings

import pytest
from pydantic import ValidationError as SchemaError

from config.run_config import LevelSpec, RunConfig, load_run_config
from config.settings import Config
from constants import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_VERIFICATION
from services.jacobi import JacobiWindow
from utils.common import (
    create_report_dict, exit_code_for, handle_exceptions, safe_get_env_int, warning_names
)
from utils.errors import (
    DegenerateCritical, NearSpectrum, RenormError, ValidationError, VerificationError
)
from utils.report_writer import (
    format_float, read_coefficients, write_coefficients, write_csv, write_json
)


class TestErrors:
    """Exception hierarchy and exit-code mapping."""

    def test_invariant_in_message(self):
        error = ValidationError("bad seed", invariant="seed bound")
        assert str(error) == "[seed bound] bad seed"

    def test_invariant_defaults_to_class_name(self):
        assert NearSpectrum("close").invariant == "NearSpectrum"

    def test_hierarchy(self):
        assert issubclass(DegenerateCritical, ValidationError)
        assert issubclass(VerificationError, RenormError)

    @pytest.mark.parametrize("error, code", [
        (ValidationError("x"), EXIT_CONFIG),
        (OSError("missing"), EXIT_CONFIG),
        (NearSpectrum("x"), EXIT_NUMERICAL),
        (VerificationError("x"), EXIT_VERIFICATION),
        (RuntimeError("x"), EXIT_NUMERICAL),
    ])
    def test_exit_codes(self, error, code):
        assert exit_code_for(error) == code

    def test_schema_errors_are_config_errors(self):
        with pytest.raises(SchemaError) as excinfo:
            RunConfig.model_validate({})
        assert exit_code_for(excinfo.value) == EXIT_CONFIG

    def test_handle_exceptions_returns_code(self):
        @handle_exceptions(log_error=False)
        def failing():
            raise VerificationError("residual too large")

        @handle_exceptions()
        def passing():
            return EXIT_OK

        assert failing() == EXIT_VERIFICATION
        assert passing() == EXIT_OK


class TestCommonHelpers:
    def test_create_report_dict(self):
        report = create_report_dict("build", True, {"depth": 2})
        assert report == {"command": "build", "passed": True, "depth": 2}

    def test_warning_names_deduplicate(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            warnings.warn("low margin", UserWarning)
            warnings.warn("low margin", UserWarning)
        assert warning_names(caught) == ["UserWarning: low margin"]

    def test_safe_get_env_int(self, monkeypatch):
        monkeypatch.setenv("RENORM_TEST_INT", "7")
        assert safe_get_env_int("RENORM_TEST_INT", 1) == 7
        monkeypatch.setenv("RENORM_TEST_INT", "seven")
        with pytest.raises(ValueError):
            safe_get_env_int("RENORM_TEST_INT", 1)
        monkeypatch.delenv("RENORM_TEST_INT")
        assert safe_get_env_int("RENORM_TEST_INT", 1) == 1


class TestSettings:
    """Environment driven process settings."""

    def test_validate_passes(self):
        assert Config.validate() is True

    def test_rejects_non_positive_threads(self, monkeypatch):
        monkeypatch.setenv("RENORM_THREADS", "0")
        with pytest.raises(ValueError):
            Config.validate()

    def test_rejects_unknown_log_level(self, monkeypatch):
        monkeypatch.setattr(Config, "LOG_LEVEL", "LOUD")
        with pytest.raises(ValueError):
            Config.validate()


class TestRunConfig:
    """JSON run document schema."""

    def test_family_level(self):
        T = LevelSpec(degree=2, critical_value=132).build(12.0)
        assert T.coefficients == pytest.approx((-132.0, 0.0, 1.0))

    def test_level_needs_one_form(self):
        with pytest.raises(SchemaError):
            LevelSpec(degree=2, a=10.0, critical_value=132)
        with pytest.raises(SchemaError):
            LevelSpec(degree=2, coefficients=[-132.0, 0.0, 1.0])
        with pytest.raises(SchemaError):
            LevelSpec(degree=2)

    def test_rejects_unknown_keys(self, run_document):
        run_document["colour"] = "blue"
        with pytest.raises(SchemaError):
            RunConfig.model_validate(run_document)

    def test_accepts_decimal_strings(self, run_document):
        run_document["xi"] = "12.0"
        assert RunConfig.model_validate(run_document).xi == 12.0

    def test_digit_count_must_match(self, run_document):
        """Two levels with one digit would silently drop the outer level"""
        run_document["digits"] = [0]
        with pytest.raises(SchemaError):
            RunConfig.model_validate(run_document)

    def test_extra_digits_need_radices(self, run_document):
        run_document["digits"] = [1, 0, 1]
        with pytest.raises(SchemaError):
            RunConfig.model_validate(run_document)

    def test_default_radices_are_level_degrees(self, run_document):
        run_document["levels"].append({"coefficients": [0, -75, 0, 1]})
        run_document["digits"] = [1, 0, 2]
        config = RunConfig.model_validate(run_document)
        assert config.effective_radices() == [2, 2, 3]
        assert config.effective_depth == 3

    def test_unknown_check(self, run_document):
        run_document["verify"]["checks"] = ["identity", "magic"]
        with pytest.raises(SchemaError):
            RunConfig.model_validate(run_document)

    def test_extra_radices_store_more_digits(self, run_document):
        """Radices may extend the level degrees to hold digits beyond the levels."""
        run_document["radices"] = [2, 2, 2]
        run_document["digits"] = [1, 0, 1]
        run_document["depth"] = 2
        config = RunConfig.model_validate(run_document)
        tower = config.tower_config()
        assert tower.digits.length == 3
        assert tower.depth == 2

    def test_tower_config(self, run_document):
        config = RunConfig.model_validate(run_document)
        tower = config.tower_config()
        assert tower.depth == 2
        assert tower.digits.digits == (1, 0)
        assert tower.window == (0, 63)
        assert tower.seed_p == pytest.approx(6.0)

    def test_load_from_file(self, run_document, write_config):
        config = load_run_config(write_config(run_document))
        assert config.effective_depth == 2
        assert config.band_section == (0, 63)


class TestReportWriter:
    """Deterministic CSV and JSON output."""

    def test_format_float(self):
        assert format_float(0.1) == "0.10000000000000001"
        assert format_float(None) == ""

    def test_import_leaves_sys_path_alone(self, monkeypatch):
        """Only the entry points put the project root on sys.path"""
        import utils.report_writer as report_writer
        root = os.path.dirname(os.path.dirname(os.path.abspath(report_writer.__file__)))
        monkeypatch.setattr(sys, "path", [entry for entry in sys.path if entry != root])
        importlib.reload(report_writer)
        assert root not in sys.path

    def test_coefficients_round_trip(self, tmp_path):
        J = JacobiWindow(-2, [0.1, -0.3, 1.0 / 3.0], [math.pi, math.e])
        path = str(tmp_path / "coefficients.csv")
        write_coefficients(path, J)
        lines = open(path, encoding="utf-8").read().splitlines()
        assert lines[0] == "k,p,q"
        assert lines[1].startswith("-2,,")
        assert read_coefficients(path) == J

    def test_read_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("k,q\n0,1\n", encoding="utf-8")
        with pytest.raises(ValueError):
            read_coefficients(str(path))

    def test_read_rejects_gaps(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text("k,p,q\n0,,0\n2,1,0\n", encoding="utf-8")
        with pytest.raises(ValueError):
            read_coefficients(str(path))

    def test_write_json_sorted(self, tmp_path):
        path = str(tmp_path / "out" / "report.json")
        write_json(path, {"b": float("nan"), "a": (1, 2)})
        text = open(path, encoding="utf-8").read()
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text) == {"a": [1, 2], "b": None}

    def test_write_csv_leaves_no_temp_files(self, tmp_path):
        path = str(tmp_path / "metric.csv")
        write_csv(path, ["l", "rho"], [[0, 0.5], [1, 0.25]])
        assert sorted(os.listdir(tmp_path)) == ["metric.csv"]
        assert open(path, encoding="utf-8").read() == "l,rho\n0,0.5\n1,0.25\n"
