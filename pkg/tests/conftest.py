from __future__ import annotations

import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

from sumrefine import Gateway, MockProvider, make_fixtures  # noqa: E402

GOLDEN_DIR = TESTS_DIR / "golden"


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN_DIR


@pytest.fixture
def mock_gateway():
    """Uncached gateway over an instrumented mock provider."""
    provider = MockProvider()
    return Gateway(provider, cache_dir=None), provider


@pytest.fixture
def cached_gateway(tmp_path):
    provider = MockProvider()
    return Gateway(provider, cache_dir=tmp_path / "cache"), provider


@pytest.fixture(scope="session")
def small_corpus():
    return make_fixtures(seed=101, n=6)
