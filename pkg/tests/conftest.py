"""Shared fixtures: small cameras, random hybrid scenes and a tiny synthetic dataset."""
import numpy as np
import pytest

from engines.sh_engine import rgb_to_sh0
from engines.synth_engine import generate_box_scene
from models.camera_model import Camera
from models.config_model import SynthConfig
from models.plane_model import Plane
from models.scene_model import FreeformGaussians, PlanarGaussians, Scene
from utils.geometry import random_rotations


def make_random_scene(rng, n_planar=6, n_free=6, sh_degree=1, planes=None, sh_rest=0.05,
                      opacity=(0.3, 0.8), scale=(0.08, 0.25), spread=0.6):
    """Scene in front of the default test camera (looking down +z from the origin)."""
    if planes is None:
        planes = [
            Plane(id=0, origin=[0.0, 0.0, 3.0], normal=[0.1, -0.2, -1.0]),
            Plane(id=3, origin=[0.2, 0.1, 2.5], normal=[0.3, 1.0, -0.6]),
        ]
    k = (sh_degree + 1) ** 2
    ids = np.array([planes[i % len(planes)].id for i in range(n_planar)], dtype=np.int64)

    def sh_block(n):
        sh = sh_rest * rng.standard_normal((n, k, 3))
        sh[:, 0] = rgb_to_sh0(rng.uniform(0.3, 0.7, size=(n, 3)))
        return sh

    def logits(n):
        a = rng.uniform(*opacity, size=n)
        return np.log(a / (1.0 - a))

    planar = PlanarGaussians(
        plane_ids=ids,
        means=rng.uniform(-spread, spread, size=(n_planar, 2)),
        log_scales=np.log(rng.uniform(*scale, size=(n_planar, 2))),
        thetas=rng.uniform(-np.pi, np.pi, size=n_planar),
        opacity_logits=logits(n_planar),
        sh=sh_block(n_planar),
    )
    freeform = FreeformGaussians(
        means=np.column_stack([rng.uniform(-spread, spread, size=(n_free, 2)),
                               rng.uniform(2.0, 3.5, size=n_free)]),
        log_scales=np.log(rng.uniform(*scale, size=(n_free, 3))),
        quats=random_rotations(rng, n_free),
        opacity_logits=logits(n_free),
        sh=sh_block(n_free),
    )
    return Scene(planes, planar, freeform, sh_degree)


def front_camera(width=24, height=20, focal=30.0):
    return Camera.look_at([0.0, 0.0, 0.0], [0.0, 0.0, 1.0], focal, focal, width, height, up=(0.0, -1.0, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def camera():
    return front_camera()


@pytest.fixture
def random_scene(rng):
    return make_random_scene(rng)


@pytest.fixture(scope='session')
def tiny_synth_config():
    return SynthConfig(num_views=4, width=32, height=24, planar_spacing=0.25, clutter_objects=1,
                       clutter_gaussians=10, init_points=300, sh_degree=1)


@pytest.fixture(scope='session')
def tiny_box(tiny_synth_config):
    """(gt scene, gt planes, dataset) of a small box room, shared across tests."""
    return generate_box_scene(tiny_synth_config, seed=7, threads=1)
