"""
Shared fixtures for the lab test suite
"""

from pathlib import Path
import sys

import pytest
from hypothesis import settings as hypothesis_settings

# Add project root to path to import project modules
sys.path.insert(0, str(Path(__file__).parent.parent))

from sde.driving import covering_path  # noqa: E402
from sde.integrator import StepScheme  # noqa: E402
from sde.oracle import example_driving_spec, example_model  # noqa: E402

hypothesis_settings.register_profile("lab", deadline=None, max_examples=100)
hypothesis_settings.load_profile("lab")


@pytest.fixture
def unit_model():
    return example_model()


@pytest.fixture
def unit_spec():
    return example_driving_spec()


@pytest.fixture
def scheme():
    return StepScheme(dt=0.01)


@pytest.fixture
def unit_path(unit_spec, scheme):
    """Unit OU realization covering [-12, 4]"""
    return covering_path(unit_spec, -12.0, 4.0, scheme.dt, 2024)
