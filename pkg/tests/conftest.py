"""
공용 fixture
"""
import numpy as np
import pytest

from data import load_world_preset
from services import (
    BeaconWorldConfig,
    ParticleBelief,
    WorldModels,
    make_stream,
    propagate_and_reweight,
)


@pytest.fixture
def setting_1() -> BeaconWorldConfig:
    return BeaconWorldConfig.from_dict(load_world_preset("setting_1"))


@pytest.fixture
def setting_2() -> BeaconWorldConfig:
    return BeaconWorldConfig.from_dict(load_world_preset("setting_2"))


@pytest.fixture
def linear_world() -> BeaconWorldConfig:
    return BeaconWorldConfig.from_dict(load_world_preset("linear_gaussian"))


@pytest.fixture
def models(setting_1) -> WorldModels:
    return WorldModels.from_config(setting_1)


@pytest.fixture
def transition_instance():
    """seed → (prev, next, action_vec, z, models): 임의 가중치 belief 의 전이 1회"""
    def make(seed: int, n: int = None, world: BeaconWorldConfig = None):
        world = world or BeaconWorldConfig.from_dict(load_world_preset("setting_1"))
        models = WorldModels.from_config(world)
        rng = make_stream(seed, "instance")
        n = n or int(rng.integers(2, 51))

        center = np.asarray(world.start) + rng.normal(0.0, 5.0, size=world.dim)
        particles = center + rng.uniform(0.3, 2.0) * rng.standard_normal((n, world.dim))
        prev = ParticleBelief(particles, rng.dirichlet(np.ones(n)))

        action_vec = models.action_vector(int(rng.integers(models.n_actions)))
        x_true = models.transition.sample(particles[int(rng.integers(n))], action_vec, rng)
        z = models.sensor.sample(x_true, rng)
        next_ = propagate_and_reweight(prev, action_vec, z, models.transition, models.sensor, rng)
        return prev, next_, action_vec, z, models

    return make
