import numpy as np
import pytest

from lungnet.dataset import scan_dataset
from lungnet.synthetic import SyntheticSpec, generate_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """Small synthetic tree shared by dataset/CLI tests: 12 images per class."""
    root = tmp_path_factory.mktemp("synth_small")
    generate_dataset(SyntheticSpec(per_class=12, size=48, seed=7), root)
    return root


@pytest.fixture(scope="session")
def synth_index(synth_root):
    return scan_dataset(synth_root)
