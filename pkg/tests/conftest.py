# conftest.py - Pytest configuration and shared fixtures
# Reference polynomials, seeds and run documents shared by the unit and integration suites

import os
import sys
import json
import math
from unittest.mock import patch

import numpy as np
import pytest

# Add project root to Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from services.jacobi import constant_window
from services.poly import ExpandingPolynomial, make_chebyshev_family

# Test configuration
TEST_ENV = {
    'RENORM_THREADS': '1',
    'LOG_LEVEL': 'WARNING',
    'LOG_FILE': '',
}

XI = 12.0


def dimer_couplings(p_seed, critical_value=-132.0):
    """(inner, closing) couplings of one renormalization of a constant q = 0 seed by z^2 + critical_value

    The left continued fraction g = w - p^2/g at w = critical_value has the
    closed form (w - sqrt(w^2 - 4 p^2)) / 2, and the block coupling is sqrt(-g).
    """
    w = critical_value
    g = (w - math.sqrt(w * w - 4.0 * p_seed ** 2)) / 2.0
    inner = math.sqrt(-g)
    return inner, p_seed / inner


@pytest.fixture(scope='session')
def xi():
    return XI


@pytest.fixture(scope='session')
def quadratic():
    """z^2 - 132 on [-12, 12]: margin 11"""
    return make_chebyshev_family(2, math.sqrt(264.0), XI)


@pytest.fixture(scope='session')
def cubic():
    """z^3 - 75 z on [-12, 12]: critical points -5, 5 and critical values 250, -250"""
    return ExpandingPolynomial.from_coefficients([0.0, -75.0, 0.0, 1.0], XI)


@pytest.fixture(scope='session')
def weak_quadratic():
    """z^2 - 60 on [-12, 12]: margin 5, below the contraction threshold"""
    return ExpandingPolynomial.from_coefficients([-60.0, 0.0, 1.0], XI)


@pytest.fixture(scope='function')
def constant_seed():
    """Constant q = 0, p = xi/2 window wide enough for cf_depth 32"""
    return constant_window(0.0, XI / 2.0, -40, 80)


@pytest.fixture(scope='session')
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope='function')
def out_dir(tmp_path):
    path = tmp_path / 'results'
    path.mkdir()
    return str(path)


@pytest.fixture(scope='function')
def run_document():
    """Two quadratic levels, small windows: every subcommand finishes in seconds"""
    return {
        'xi': XI,
        'levels': [
            {'degree': 2, 'critical_value': 132},
            {'degree': 2, 'critical_value': 132},
        ],
        'digits': [1, 0],
        'window': [0, 63],
        'cf_depth': 16,
        'verify': {
            'section_blocks': 16,
            'chain_window': [0, 15],
            'translation_shifts': [1, 2],
        },
        'bands': {'level': 2, 'section': [0, 63]},
        'metric': {'l_max': 2, 'm_list': [1]},
        'probe': {'trials': 3, 'blocks': 8, 'rng_seed': 7},
    }


@pytest.fixture(scope='function')
def write_config(tmp_path):
    """Write a run document to a JSON file and return its path"""
    def _write(document, name='run.json'):
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding='utf-8')
        return str(path)
    return _write


@pytest.fixture(scope='function')
def mock_env_vars():
    """Mock environment variables for testing."""
    with patch.dict(os.environ, TEST_ENV, clear=False):
        yield


@pytest.fixture(autouse=True)
def setup_test_environment(mock_env_vars):
    """Automatically set up test environment for all tests."""
    pass


# Pytest configuration
def pytest_configure(config):
    """Configure pytest settings."""
    config.addinivalue_line(
        "markers", "unit: mark test as a unit test"
    )
    config.addinivalue_line(
        "markers", "integration: mark test as an integration test"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as slow running"
    )


def pytest_collection_modifyitems(config, items):
    """Modify test collection to add markers based on file location."""
    for item in items:
        if "unit" in str(item.fspath):
            item.add_marker(pytest.mark.unit)
        elif "integration" in str(item.fspath):
            item.add_marker(pytest.mark.integration)

        if "slow" in item.name:
            item.add_marker(pytest.mark.slow)
