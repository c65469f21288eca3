import numpy as np
import pytest

from egonet import synthetic
from egonet.data import load_dataset


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Two small scenes shared across tests that only need real frames."""
    root = tmp_path_factory.mktemp("smallds")
    specs = synthetic.default_scene_specs(seed=5, n_scenes=2, n_frames=6)
    manifest = synthetic.generate_dataset(specs, str(root))
    return load_dataset(manifest), specs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
