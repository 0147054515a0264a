from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def curves_fixture():
    return FIXTURES / "curves_small.csv"


@pytest.fixture
def grid_fixture():
    return FIXTURES / "grid_small.csv"
