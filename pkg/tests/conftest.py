import numpy as np
import pytest

from dualstitch.oracle import NO_PERTURBATION, Perturbation, make_scene
from dualstitch.pipeline import StitchConfig, build_grid

SMALL = 512
# seam templates are 32 px wide, so matching needs the overlap band of a 1024 px panorama
MID = 1024


@pytest.fixture(scope="session")
def flat_scene():
    return make_scene("noise", SMALL, NO_PERTURBATION)


@pytest.fixture(scope="session")
def tilted_scene():
    return make_scene("composite", MID, Perturbation((1.5, -1.0, 0.8), 0.01, (2.0, -1.0)))


@pytest.fixture(scope="session")
def tilted_config(tilted_scene):
    return StitchConfig(tilted_scene.calibration)


@pytest.fixture(scope="session")
def tilted_grid(tilted_config):
    return build_grid(tilted_config)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
