import numpy as np
import pytest

from hstm.config import CodecConfig
from hstm.pipeline import Codec
from hstm.training import RdConfig, train_cascaded


def small_config(seed: int = 1) -> CodecConfig:
    """A deliberately tiny channel plan so tests stay fast."""
    return CodecConfig(y_channels=4, hyper_channels=4, mv_channels=2,
                       mv_hyper_channels=2, feature_channels=4,
                       context_channels=4, hidden_channels=4, seed=seed)


def synthetic_clip(frames: int = 8, height: int = 48, width: int = 48,
                   seed: int = 7) -> list:
    """A translating pattern with a little texture; values in [0, 1]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    base = 0.5 + 0.25 * np.sin(2 * np.pi * xx / 16) * np.cos(2 * np.pi * yy / 12)
    texture = rng.normal(0.0, 0.05, size=(3, height, width))
    frame0 = np.clip(base[None] + texture, 0.0, 1.0)
    return [np.roll(frame0, shift=2 * t, axis=2) for t in range(frames)]


@pytest.fixture
def codec():
    return Codec(small_config())


@pytest.fixture
def clip():
    return synthetic_clip()


@pytest.fixture(scope="session")
def trained_codec():
    """A codec trained for a short while on the synthetic clip.

    Session-scoped because training is the most expensive fixture; tests
    must not mutate its parameters.
    """
    codec = Codec(small_config(seed=3))
    clip = synthetic_clip()
    config = RdConfig(steps=150, cascade=3, lr=1e-3, seed=0)
    train_cascaded(codec, clip, config)
    return codec


@pytest.fixture(scope="session")
def training_clip():
    return synthetic_clip()
