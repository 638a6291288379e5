import numpy as np
import pytest

from lamsedit.backend import ToyAffineBackend
from lamsedit.config import SamplerConfig
from lamsedit.trajectory import TrajectoryStore


@pytest.fixture
def toy_a():
    return ToyAffineBackend(mode="A", seed=0)


@pytest.fixture
def toy_b():
    return ToyAffineBackend(mode="B", seed=0)


@pytest.fixture
def image():
    return np.random.default_rng(7).random((8, 8))


@pytest.fixture
def sampler():
    return SamplerConfig(steps=50, guidance=7.5, inversion_guidance=1.0, seed=0)


@pytest.fixture
def store(tmp_path):
    return TrajectoryStore(tmp_path / "store")
