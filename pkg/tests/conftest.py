import warnings
from pathlib import Path

import numpy as np
import pytest

from raysim import fixtures as fx
from raysim.scene import scene_from_dict, state_at

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "fixtures"

warnings.filterwarnings("ignore", message=".*roundoff error.*")


@pytest.fixture(scope="session")
def two_ray_scene():
    return scene_from_dict(fx.two_ray_scene())


@pytest.fixture(scope="session")
def canyon_scene():
    return scene_from_dict(fx.two_building_canyon())


@pytest.fixture(scope="session")
def urban_scene():
    return scene_from_dict(fx.urban_canyon_scene())


@pytest.fixture(scope="session")
def knife_scene_24ghz():
    return scene_from_dict(fx.knife_edge_scene(edge_z=10.0, half_width=150.0,
                                               fc=24e9))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def single_plate_scene(alpha_r=2, fc=2.3e9, half=300.0):
    """One large square face: clean single-surface reflection geometry."""
    return scene_from_dict({
        "fc": fc, "P0": 4 * np.pi,
        "materials": [{"id": "m", "chi_r": 0.7, "kappa_r": 1.0,
                       "alpha_R": alpha_r}],
        "objects": [{"id": "plate", "material": "m",
                     "faces": [[[-half, -half, 0.0], [half, -half, 0.0],
                                [half, half, 0.0], [-half, half, 0.0]]]}],
    })
