"""
RMT Lab Test Configuration

Shared fixtures and configuration for pytest.
"""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Project root on the path so tests import the src package
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))


# ============================================================================
# Environment Fixtures
# ============================================================================

@pytest.fixture(scope="session", autouse=True)
def setup_test_environment():
    """Set up test environment variables"""
    os.environ.setdefault("RMT_LAB_LOG_LEVEL", "WARNING")
    yield


@pytest.fixture
def mock_env_vars(monkeypatch):
    """Fixture to mock environment variables"""
    def _set_env(**kwargs):
        for key, value in kwargs.items():
            monkeypatch.setenv(key, value)
    return _set_env


@pytest.fixture(autouse=True)
def fresh_settings():
    """Drop cached settings around every test"""
    from src.config import get_settings

    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


# ============================================================================
# Matrix Fixtures
# ============================================================================

@pytest.fixture
def rng():
    """Seeded NumPy generator for test-local randomness"""
    return np.random.default_rng(20240611)


@pytest.fixture
def gaussian_sample():
    """A 5 x 8 real Gaussian sample from the counter-based sampler"""
    from src.ensembles import gaussian_real, sample_matrix

    return sample_matrix(gaussian_real(), 5, 8, seed=7, trial=0)


@pytest.fixture
def complex_matrix(rng):
    """A random 6 x 9 complex Gaussian matrix"""
    return (rng.standard_normal((6, 9)) + 1j * rng.standard_normal((6, 9))) / np.sqrt(2)


@pytest.fixture
def mp_model():
    """Marchenko-Pastur model at aspect ratio 1/4"""
    from src.mp_law import MPModel

    return MPModel(0.25)


# ============================================================================
# Experiment Fixtures
# ============================================================================

@pytest.fixture
def small_config():
    """A small, fast figure1 config"""
    from src.config import ExperimentConfig

    return ExperimentConfig(
        kind="figure1",
        ensembles=["gaussian_real", "rademacher"],
        p=6,
        n=10,
        trials=8,
        master_seed=11,
    )


@pytest.fixture
def out_dir(tmp_path):
    """Temporary experiment output directory"""
    path = tmp_path / "run"
    path.mkdir()
    return path
