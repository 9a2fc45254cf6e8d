import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from src.models.config import BackboneConfig, EncoderConfig, ModelConfig  # noqa: E402
from src.utils.config import DataConfig  # noqa: E402

SMALL_DATA = DataConfig(
    scenes=2, views_per_scene=20, landmarks=300, image_size=32, focal_px=32.0,
    query_stride=5, neighbors=3, workers=2,
)

TINY_MODEL = ModelConfig(
    backbone=BackboneConfig(input_size=32, channels=(4, 8, 8, 12), strides=(2, 2, 2, 2), trans_stage=4, rot_stage=3),
    encoder=EncoderConfig(layers=1, heads=2, hidden=16, mlp_dim=32, dropout=0.1),
)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run training experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training experiment (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def small_data_config():
    return SMALL_DATA


@pytest.fixture(scope="session")
def tiny_model_config():
    return TINY_MODEL


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Root of a 2-scene, 20-view, 32px dataset."""
    from src.data import generate_dataset

    root = tmp_path_factory.mktemp("small_dataset")
    generate_dataset(SMALL_DATA, seed=0, root=root, verbose=False)
    return root
