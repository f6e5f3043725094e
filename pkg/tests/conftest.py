import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# make tests/oracles.py importable regardless of how pytest is invoked
sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
