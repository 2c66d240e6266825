import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.config import Config
from src.geometry.camera import Intrinsics
from src.synthetic.generator import SceneSpec, generate


@pytest.fixture(scope="session")
def config():
    """Default configuration, independent of the environment."""
    return Config({})


@pytest.fixture(scope="session")
def intrinsics():
    return Intrinsics(1000.0, 1000.0, 640.0, 360.0)


@pytest.fixture(scope="session")
def two_shot_bundle():
    """Zero-noise two-shot walking scene."""
    return generate(SceneSpec(seed=3, duration_frames=240, shot_count=2))


@pytest.fixture(scope="session")
def three_shot_bundle():
    """Zero-noise three-shot walking scene."""
    return generate(SceneSpec(seed=11, duration_frames=300, shot_count=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
