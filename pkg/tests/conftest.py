import numpy as np
import pytest

from gsmesh.fixtures import random_scene, surrounding_views, unit_gaussian_scene


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def unit_gaussian():
    return unit_gaussian_scene(alpha=0.9)


@pytest.fixture(scope="session")
def sphere_views_256():
    """26 surrounding cameras at moderate resolution for field tests."""
    return surrounding_views(radius=10.0, resolution=256, fov_deg=30.0)


def make_random_scene(n, seed, **kw):
    return random_scene(n, np.random.default_rng(seed), **kw)
