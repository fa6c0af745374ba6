"""Shared fixtures: small deterministic tiles and a tiny trained model."""

import numpy as np
import pytest

from stainaug.types import ImageTile


def make_tile(seed: int, size: int = 16, domain_id=None, class_label=None) -> ImageTile:
    rng = np.random.default_rng(seed)
    pixels = rng.random((3, size, size), dtype=np.float32)
    return ImageTile(pixels, domain_id=domain_id, class_label=class_label)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tile16():
    return make_tile(0)


@pytest.fixture(scope="session")
def tiny_gan():
    """Untrained 32px model over 3 named domains; fixed init."""
    from stainaug.gan import ArchConfig, StainGAN
    config = ArchConfig(image_size=32, domain_count=3, base_channels=16)
    return StainGAN.new(config, ["alpha", "beta", "gamma"], seed=7)
