"""
Shared fixtures: the reduced run/scene configs and a generated small scene.
"""

import numpy as np
import pytest

from vital_occ_stream.core.config import CONFIG_DIR, load_pipeline_config, load_scene_config
from vital_occ_stream.geometry.grid import GridSpec
from vital_occ_stream.pipeline.params import ModelParams
from vital_occ_stream.scene.generator import generate_scene

SMALL_RUN = CONFIG_DIR / "run_small.yaml"
SMALL_SCENE = CONFIG_DIR / "scene_small.yaml"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_spec():
    """8x6x4 lattice of 0.5 m cells anchored at the origin."""
    return GridSpec(dims=(8, 6, 4), min_corner=(0.0, 0.0, 0.0), resolution=0.5)


@pytest.fixture(scope="session")
def small_run_config():
    return load_pipeline_config(SMALL_RUN)


@pytest.fixture(scope="session")
def small_scene_config():
    return load_scene_config(SMALL_SCENE)


@pytest.fixture(scope="session")
def small_frames(small_scene_config):
    return generate_scene(small_scene_config, seed=7)


@pytest.fixture(scope="session")
def small_params(small_run_config):
    return ModelParams.random(small_run_config, seed=11)
