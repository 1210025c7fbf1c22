"""Pytest configuration and fixtures."""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add the src directory to the Python path
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

# Set test environment variables
os.environ["LOG_LEVEL"] = "DEBUG"
os.environ["DEFAULT_THREADS"] = "2"

from second_order_projection.config import reset_settings  # noqa: E402
from second_order_projection.matpoly import QuadraticPencil  # noqa: E402
from second_order_projection.operators import make_model  # noqa: E402
from second_order_projection.oracle import secular_roots  # noqa: E402


@pytest.fixture(autouse=True)
def fresh_settings(tmp_path, monkeypatch):
    """Re-read settings per test and keep the oracle cache inside tmp_path."""
    monkeypatch.setenv("CACHE_DIR", str(tmp_path / "cache"))
    reset_settings()
    yield
    reset_settings()


@pytest.fixture(scope="session")
def secular():
    """Discrete eigenvalues of the gap model."""
    return secular_roots()


@pytest.fixture(scope="session")
def b1_model():
    return make_model("fourier_b1")


@pytest.fixture(scope="session")
def b2_model():
    return make_model("direct_sum_b2")


@pytest.fixture(scope="session")
def demo_model():
    """-d^2/dx^2 - 8 exp(-x^2) + cos x."""
    return make_model("schrodinger_hermite")


@pytest.fixture(scope="session")
def harmonic_model():
    return make_model("harmonic_sanity")


@pytest.fixture
def scalar_pencil():
    """(z - 1)^2 as a 1 x 1 pencil."""
    return QuadraticPencil.from_truncation([[1.0]], [[1.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def meets_gap_spectrum(secular):
    """Predicate: does [lo, hi] (fattened) meet [-3,-1] u [1,3] u {lambda_-, lambda_+}?"""
    bands = [(-3.0, -1.0), (1.0, 3.0)]
    points = (secular.lambda_minus, secular.lambda_plus)

    def check(lo: float, hi: float, fatten: float = 1e-8) -> bool:
        lo, hi = lo - fatten, hi + fatten
        if any(lo <= b and a <= hi for a, b in bands):
            return True
        return any(lo <= p <= hi for p in points)

    return check
