"""
Shared Test Fixtures
Seeded generators, temporary output directories and quiet environment defaults
"""

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(autouse=True)
def quiet_environment(monkeypatch, tmp_path):
    """Keep tests off the user's .env: no progress bars, output under tmp_path"""
    monkeypatch.setenv("PPA_PROGRESS", "0")
    monkeypatch.setenv("PPA_OUTPUT_DIR", str(tmp_path / "results"))
    monkeypatch.setenv("PPA_SEED", "20240917")
    monkeypatch.setenv("PPA_SAMPLES", "200")
    monkeypatch.setenv("PPA_REPLICATES", "5")
    monkeypatch.setenv("PPA_WORKERS", "1")
    monkeypatch.setenv("PPA_LOG_LEVEL", "INFO")
    monkeypatch.setenv("PPA_PALM_REJECTION_BUDGET", "1000000")
    monkeypatch.setenv("PPA_EXACT_PMF_LIMIT", "20")
