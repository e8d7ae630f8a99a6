import numpy as np
import pytest

from unips.decoder import DecoderConfig
from unips.encoder import EncoderConfig
from unips.model import NetworkConfig
from unips.render.dataset import generate_scene


def tiny_network_config(**encoder_overrides) -> NetworkConfig:
    enc = dict(s=16, c=8, d_e=16, num_stages=2, heads=4, window=4)
    enc.update(encoder_overrides)
    return NetworkConfig(encoder=EncoderConfig(**enc),
                         decoder=DecoderConfig(d_t=32, ff_dim=64, heads=4))


@pytest.fixture(scope="session")
def small_scene():
    """One deterministic directional scene shared across tests."""
    scene = generate_scene(seed=17, index=0, q=4, res=48,
                           lighting="directional")
    assert scene is not None
    return scene


@pytest.fixture(scope="session")
def env_scene():
    scene = generate_scene(seed=29, index=2, q=3, res=48,
                           lighting="environment")
    assert scene is not None
    return scene


@pytest.fixture
def rng():
    return np.random.default_rng(0)
