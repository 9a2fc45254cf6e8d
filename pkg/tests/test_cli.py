import csv
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from main import main, run_ablate, run_eval, run_gen, run_train
from src.data import Dataset, write_tensor
from src.models.training import read_loss_log, smoothed_loss
from src.utils.config import load_run_config

TINY_RUN = {
    "seed": 0,
    "data": {
        "scenes": 2, "views_per_scene": 20, "landmarks": 300, "image_size": 32, "focal_px": 32.0,
        "query_stride": 5, "neighbors": 3, "workers": 2,
    },
    "model": {
        "backbone": {"input_size": 32, "channels": [4, 8, 8, 12], "strides": [2, 2, 2, 2],
                     "trans_stage": 4, "rot_stage": 3},
        "encoder": {"layers": 1, "heads": 2, "hidden": 16, "mlp_dim": 32, "dropout": 0.1},
    },
    "train": {"lr": 0.001, "batch_size": 4, "epochs": 1},
    "eval": {"workers": 2},
    "ablate": {"aggregators": ["transformer", "conv", "baseline"], "rot_kinds": ["6d"], "seeds": [0], "eval_scene": 1},
}


def _write_config(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Config, generated dataset and one trained run shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    config = _write_config(root / "tiny.json", TINY_RUN)
    data = root / "data"
    assert main(["gen", "--config", config, "--out", str(data)]) == 0
    run = root / "run"
    assert main(["train", "--config", config, "--data", str(data), "--out", str(run), "--scenes", "0"]) == 0
    return {"root": root, "config": config, "data": data, "run": run}


def test_gen_writes_dataset(workspace):
    data = workspace["data"]
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["scene_ids"] == [0, 1]
    assert (data / "scene_000" / "poses.csv").exists()
    assert (data / "scene_001" / "pairs.csv").exists()


def test_train_writes_checkpoint_log_and_config(workspace):
    run = workspace["run"]
    assert (run / "checkpoint.rfck").exists()
    assert (run / "loss_log.csv").exists()
    saved = json.loads((run / "config.json").read_text())
    assert saved["train"]["train_scenes"] == [0]
    assert saved["data"]["root"] == str(workspace["data"])


def test_eval_writes_reports(workspace, capsys):
    run = workspace["run"]
    code = main([
        "eval", "--config", workspace["config"], "--data", str(workspace["data"]),
        "--checkpoint", str(run / "checkpoint.rfck"), "--scenes", "1",
    ])
    assert code == 0
    report = json.loads((run / "eval_query.json").read_text())
    assert list(report["scenes"]) == ["1"]
    assert report["scenes"]["1"]["queries"] == 4
    with open(run / "eval_query_queries.csv", newline="") as f:
        assert len(list(csv.DictReader(f))) == 4
    assert "POSE ERRORS" in capsys.readouterr().out


def test_localize_prints_a_pose(workspace, capsys):
    query = workspace["root"] / "query.rft"
    dataset = Dataset(workspace["data"])
    write_tensor(query, dataset.image(1, 4))
    capsys.readouterr()
    code = main([
        "localize", "--config", workspace["config"], "--data", str(workspace["data"]),
        "--checkpoint", str(workspace["run"] / "checkpoint.rfck"), "--query", str(query), "--scene", "1",
    ])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["scene"] == 1
    assert out["ref_id"] in dataset.view_ids(1, "database")
    assert len(out["position"]) == 3 and len(out["rotation"]) == 3


def test_ablate_writes_one_row_per_run(workspace):
    out = workspace["root"] / "ablate"
    assert main(["ablate", "--config", workspace["config"], "--data", str(workspace["data"]), "--out", str(out)]) == 0
    with open(out / "ablation.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert [r["agg"] for r in rows] == ["transformer", "conv", "baseline"]
    assert all(r["scene"] == "1" and r["split"] == "query" for r in rows)
    assert (out / "transformer_6d_coarse_s0" / "checkpoint.rfck").exists()
    assert (out / "conv_6d_coarse_s0" / "checkpoint.rfck").exists()


def test_invalid_config_exits_2_without_writing(tmp_path):
    doc = json.loads(json.dumps(TINY_RUN))
    doc["data"]["extent_m"] = -1.0
    config = _write_config(tmp_path / "bad.json", doc)
    assert main(["gen", "--config", config, "--out", str(tmp_path / "never")]) == 2
    assert not (tmp_path / "never").exists()


def test_unknown_eval_scene_exits_2(workspace):
    code = main([
        "eval", "--config", workspace["config"], "--data", str(workspace["data"]),
        "--checkpoint", str(workspace["run"] / "checkpoint.rfck"), "--scenes", "5",
    ])
    assert code == 2


def test_missing_checkpoint_exits_3(workspace, tmp_path):
    code = main([
        "eval", "--config", workspace["config"], "--data", str(workspace["data"]),
        "--checkpoint", str(tmp_path / "missing.rfck"),
    ])
    assert code == 3


def test_data_hash_mismatch_exits_3(workspace, tmp_path):
    other = tmp_path / "other"
    shutil.copytree(workspace["data"], other)
    manifest = json.loads((other / "manifest.json").read_text())
    manifest["data_hash"] = "0" * 16
    (other / "manifest.json").write_text(json.dumps(manifest))
    code = main([
        "eval", "--config", workspace["config"], "--data", str(other),
        "--checkpoint", str(workspace["run"] / "checkpoint.rfck"), "--out", str(tmp_path / "reports"),
    ])
    assert code == 3
    assert not (tmp_path / "reports").exists()


# ---------------------------------------------------------------------------
# Desk-scale experiments (pytest --runslow)
# ---------------------------------------------------------------------------

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.slow
def test_overfit_experiment(tmp_path):
    cfg = load_run_config(CONFIGS / "overfit.json").with_overrides(data_root=tmp_path / "data")
    run_gen(cfg, verbose=False)
    result = run_train(cfg, tmp_path / "run", verbose=False)
    report = run_eval(cfg, result.checkpoint, "train_pairs", verbose=False)
    s = next(iter(report.scenes.values()))
    assert s["median_pos_m"] < 0.2 * s["identity_pos_m"]
    assert s["median_rot_deg"] < 0.5 * s["identity_rot_deg"]
    # smoothed[i] averages steps i+1..i+20, so index 80 ends at step 100
    smooth = smoothed_loss([r["loss"] for r in read_loss_log(result.loss_log)], window=20)[80:]
    assert smooth[-1] < smooth[0]
    assert np.polyfit(np.arange(len(smooth)), smooth, 1)[0] < 0


@pytest.mark.slow
def test_full_model_beats_descriptor_baseline_on_unseen_scene(tmp_path):
    cfg = load_run_config(CONFIGS / "desk.json").with_overrides(data_root=tmp_path / "data")
    run_gen(cfg, verbose=False)
    rows = run_ablate(cfg, tmp_path / "ablate", verbose=False)
    by_run = {(r["agg"], r["seed"]): r["median_rot_deg"] for r in rows}
    wins = sum(by_run[("transformer", s)] < by_run[("baseline", s)] for s in cfg.ablate.seeds)
    assert wins >= 2


@pytest.mark.slow
def test_6d_targets_beat_quaternions_when_overfitting(tmp_path):
    cfg = load_run_config(CONFIGS / "overfit.json").with_overrides(data_root=tmp_path / "data")
    run_gen(cfg, verbose=False)
    rows = run_ablate(cfg, tmp_path / "ablate", verbose=False)
    by_run = {(r["rot"], r["seed"]): r["median_rot_deg"] for r in rows}
    wins = sum(by_run[("6d", s)] <= by_run[("quat", s)] for s in cfg.ablate.seeds)
    assert wins >= 2
