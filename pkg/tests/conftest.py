"""Shared fixtures: small synthetic datasets and seeded networks."""

from pathlib import Path
from typing import Callable, Sequence, Tuple

import numpy as np
import pytest

from src.core.models import LabeledDataset, NetworkConfig
from src.core.topology import Network, init_network
from tests.synthetic import blobs

PRESETS_DIR = Path(__file__).resolve().parent.parent / "presets"


@pytest.fixture
def dataset() -> LabeledDataset:
    return blobs()


@pytest.fixture
def make_network() -> Callable[..., Network]:
    """Factory for seeded networks over uniform [0, 1] features."""

    def _make(
        grids: Sequence[Tuple[int, int]] = ((3, 3),),
        input_dim: int = 3,
        num_classes: int = 2,
        seed: int = 0,
        **overrides,
    ) -> Network:
        config = NetworkConfig(
            layer_grids=list(grids),
            input_dim=input_dim,
            num_classes=num_classes,
            rng_seed=seed,
            **overrides,
        )
        features = np.random.default_rng(seed + 1000).uniform(0.0, 1.0, size=(20, input_dim))
        return init_network(config, features)

    return _make


@pytest.fixture
def presets_dir() -> Path:
    return PRESETS_DIR
