"""
Shared pytest fixtures.
"""

import numpy as np
import pytest

from backend.models.camera import CameraIntrinsics
from backend.models.gpis import GpisConfig, ScanConfig
from backend.models.simulation import Scene, SceneObject
from backend.services.scene_service import canonical_pile


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def intrinsics():
    return CameraIntrinsics()


@pytest.fixture
def gpis_config():
    return GpisConfig()


@pytest.fixture
def scan_config():
    return ScanConfig(stride=3)


@pytest.fixture
def canonical_scene():
    return canonical_pile()


@pytest.fixture
def single_brick():
    return Scene(
        objects=[SceneObject(id="brick", center=(0.0, 0.0, 0.06), half_extents=(0.1, 0.1, 0.06))],
        bounds_min=(-0.4, -0.4, 0.0),
        bounds_max=(0.4, 0.4, 0.3),
    )
