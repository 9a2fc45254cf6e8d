import json
from pathlib import Path

import pytest

from src.errors import ConfigError
from src.models import full_config
from src.utils.config import DataConfig, RunConfig, TrainConfig, load_run_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_defaults():
    cfg = load_run_config(None)
    assert cfg == RunConfig()
    assert cfg.data.image_size == cfg.model.backbone.input_size == 64
    assert cfg.model.rot_kind == "6d" and cfg.model.aggregator == "transformer"
    assert cfg.model.s_dx_init == 0.0 and cfg.model.s_rot_init == -3.0
    assert cfg.train.lr == 1e-4 and cfg.train.weight_decay == 1e-4
    assert cfg.held_out_scene == cfg.data.scenes - 1


def test_default_ablation_grid_covers_every_aggregator():
    assert RunConfig().ablate.aggregators == ("transformer", "conv", "baseline")
    assert load_run_config(CONFIGS / "desk.json").ablate.aggregators == ("transformer", "conv", "baseline")


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.name)
def test_bundled_configs_load(path):
    cfg = load_run_config(path)
    assert cfg.data.image_size == cfg.model.backbone.input_size


def test_full_config_matches_preset():
    cfg = load_run_config(CONFIGS / "full.json")
    assert cfg.model == full_config()
    assert cfg.held_out_scene == 6


def test_round_trip_through_dict():
    cfg = load_run_config(CONFIGS / "overfit.json")
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.mark.parametrize("doc", [
    {"epochs": 3},
    {"data": {"scene": 3}},
    {"model": {"layers": 2}},
    {"model": {"encoder": {"depth": 2}}},
    {"train": {"learning_rate": 0.1}},
    {"data": [1, 2]},
])
def test_unknown_or_malformed_keys(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


@pytest.mark.parametrize("doc", [
    {"data": {"extent_m": -1.0}},
    {"data": {"landmarks": 100}},
    {"data": {"views_per_scene": 10, "query_stride": 5, "neighbors": 8}},
    {"train": {"lr": 0.0}},
    {"train": {"rescale": 0.9}},
    {"eval": {"split": "test"}},
    {"ablate": {"rot_kinds": ["euler"]}},
    {"seed": -1},
    {"data": {"image_size": 32}},
    {"model": {"encoder": {"hidden": 100, "heads": 8}}},
    {"model": {"backbone": {"trans_stage": 4, "rot_stage": 2}}},
    {"train": {"train_scenes": [7]}},
])
def test_invalid_values(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


def test_neighbors_bound_uses_database_views():
    # 10 views, stride 5: views 4 and 9 are queries, 8 database views
    DataConfig(views_per_scene=10, query_stride=5, neighbors=7)
    with pytest.raises(ConfigError):
        DataConfig(views_per_scene=10, query_stride=5, neighbors=8)


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_run_config(bad)


def test_overrides():
    cfg = RunConfig().with_overrides(seed=5, data_root="/tmp/x", scenes=[0, 2], rot="quat", agg="conv", maps="fine")
    assert cfg.seed == 5
    assert cfg.data.root == "/tmp/x"
    assert cfg.train.train_scenes == (0, 2)
    assert (cfg.model.rot_kind, cfg.model.aggregator, cfg.model.maps) == ("quat", "conv", "fine")
    assert cfg.model.feature_shapes() == ((8, 8, 64), (16, 16, 32))
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(scenes=[9])
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(rot="euler")


def test_train_config_normalizes_scene_lists():
    assert TrainConfig(train_scenes=[1, 0]).train_scenes == (1, 0)
