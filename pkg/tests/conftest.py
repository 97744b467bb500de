import sys
from datetime import datetime
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(Path(__file__).resolve().parent))

from remindd.home import load_home_config_file
from remindd.intent import AuthoringContext

NOW = datetime(2025, 3, 3, 12, 0, 0)


@pytest.fixture(scope="session")
def study_home():
    return load_home_config_file(REPO / "homes" / "casas_study.json")


@pytest.fixture(scope="session")
def stove_home():
    return load_home_config_file(REPO / "homes" / "stove_demo.json")


@pytest.fixture
def ctx(study_home):
    return AuthoringContext.for_home(study_home, NOW)


@pytest.fixture
def bare_ctx(study_home):
    """Time mappings only: no activity or event phrase knowledge."""
    return AuthoringContext(NOW.date(), NOW,
                            dict(study_home.time_mappings))
