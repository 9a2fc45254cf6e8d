from dataclasses import asdict, replace

import numpy as np
import pytest

from src.data import Dataset
from src.errors import CompatibilityError, NumericError
from src.models.training import (
    FINAL_CHECKPOINT,
    LOG_COLUMNS,
    RelformerTrainer,
    check_compatible,
    load_trained,
    read_loss_log,
    smoothed_loss,
    train_model,
)
from src.utils.config import RunConfig, TrainConfig


@pytest.fixture(scope="module")
def dataset(small_dataset):
    return Dataset(small_dataset)


@pytest.fixture(scope="module")
def run_config(small_dataset, small_data_config, tiny_model_config):
    return RunConfig(
        seed=0,
        data=replace(small_data_config, root=str(small_dataset)),
        model=tiny_model_config,
        train=TrainConfig(lr=1e-3, batch_size=4, epochs=2, checkpoint_every=1),
    )


def _with_train(cfg, **changes):
    return replace(cfg, train=replace(cfg.train, **changes))


@pytest.fixture(scope="module")
def two_epochs(run_config, dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("two_epochs")
    return train_model(run_config, dataset, out, verbose=False)


def test_training_writes_log_and_checkpoints(two_epochs):
    out = two_epochs.checkpoint.parent
    rows = read_loss_log(two_epochs.loss_log)
    # 2 scenes x 16 database views, batches of 4
    assert two_epochs.steps == 16 and two_epochs.epochs == 2
    assert len(rows) == 16
    assert list(rows[0]) == LOG_COLUMNS
    assert [r["step"] for r in rows] == list(range(1, 17))
    assert [r["epoch"] for r in rows] == [1] * 8 + [2] * 8
    assert all(np.isfinite(r["loss"]) for r in rows)
    assert two_epochs.checkpoint == out / FINAL_CHECKPOINT
    assert (out / "checkpoint_epoch001.rfck").exists()
    assert not (out / "checkpoint_epoch002.rfck").exists()
    assert two_epochs.final_loss == rows[-1]["loss"]


def test_first_logged_weights_are_the_initial_values(two_epochs, run_config):
    first = read_loss_log(two_epochs.loss_log)[0]
    assert first["s_dx"] == run_config.model.s_dx_init
    assert first["s_rot"] == run_config.model.s_rot_init


def test_training_is_reproducible(two_epochs, run_config, dataset, tmp_path):
    again = train_model(run_config, dataset, tmp_path, verbose=False)
    assert again.loss_log.read_text() == two_epochs.loss_log.read_text()


def test_resume_continues_the_same_run(two_epochs, run_config, dataset, tmp_path):
    trainer = RelformerTrainer(run_config, dataset, tmp_path, verbose=False)
    result = trainer.train(resume_from=two_epochs.checkpoint.parent / "checkpoint_epoch001.rfck")
    resumed = read_loss_log(result.loss_log)
    full = read_loss_log(two_epochs.loss_log)[8:]
    assert [r["step"] for r in resumed] == list(range(9, 17))
    for a, b in zip(resumed, full):
        assert a["loss"] == pytest.approx(b["loss"], rel=1e-6)
    assert result.steps == 16 and result.epochs == 2


def test_epoch_visits_every_training_query_once(run_config, dataset, tmp_path):
    trainer = RelformerTrainer(run_config, dataset, tmp_path, verbose=False)
    samples = trainer.epoch_samples()
    assert len(samples) == 32
    assert len({(sid, q) for sid, q, _ in samples}) == 32
    for sid, q, r in samples:
        assert (q, r) in dataset.pairs(sid)


def test_overfit_mode_uses_fixed_pairs(run_config, dataset, tmp_path):
    cfg = _with_train(run_config, overfit_pairs=6, batch_size=3, augment=False)
    trainer = RelformerTrainer(cfg, dataset, tmp_path, verbose=False)
    assert len(trainer.fixed_pairs) == 6
    assert all(sid == 0 for sid, _, _ in trainer.fixed_pairs)
    result = trainer.train()
    assert result.steps == 4
    _, _, ckpt = load_trained(result.checkpoint)
    assert [tuple(p) for p in ckpt.meta["overfit_pairs"]] == trainer.fixed_pairs


def test_max_steps_stops_mid_epoch(run_config, dataset, tmp_path):
    result = train_model(_with_train(run_config, max_steps=5), dataset, tmp_path, verbose=False)
    assert result.steps == 5
    assert result.epochs == 0
    assert len(read_loss_log(result.loss_log)) == 5
    assert result.checkpoint.exists()


def test_nan_loss_raises_numeric_error(run_config, dataset, tmp_path):
    trainer = RelformerTrainer(run_config, dataset, tmp_path, verbose=False)
    trainer.loss_params.s_dx.data = np.array(np.nan, dtype=np.float32)
    with pytest.raises(NumericError, match="step 1"):
        trainer.train_step(trainer.epoch_samples()[:4])


def test_load_trained_restores_weights(two_epochs, dataset):
    model, loss_params, ckpt = load_trained(two_epochs.checkpoint)
    assert not model.training
    assert ckpt.meta["step"] == 16
    assert ckpt.meta["data_hash"] == dataset.data_hash
    assert ckpt.params["loss.s_dx"].reshape(()) == np.float32(loss_params.values()[0])
    state = model.state_dict()
    assert all(np.array_equal(state[k], ckpt.params[k]) for k in state)
    check_compatible(ckpt.meta, dataset, model.cfg)


def test_compatibility_checks(two_epochs, run_config, dataset, tmp_path):
    _, _, ckpt = load_trained(two_epochs.checkpoint)
    with pytest.raises(CompatibilityError):
        check_compatible(dict(ckpt.meta, data_hash="0" * 16), dataset)

    cfg = replace(run_config, model=run_config.model.replace(rot_kind="quat"))
    with pytest.raises(CompatibilityError):
        RelformerTrainer(cfg, dataset, tmp_path, verbose=False).resume(two_epochs.checkpoint)


def test_smoothed_loss():
    values = np.arange(10, dtype=float)
    smooth = smoothed_loss(values, window=4)
    assert len(smooth) == 7
    assert smooth[0] == pytest.approx(1.5)
    assert smooth[-1] == pytest.approx(7.5)
    assert smoothed_loss([2.0, 4.0], window=5).tolist() == [3.0]


@pytest.mark.slow
def test_overfitting_a_few_pairs(run_config, dataset, tmp_path):
    """A handful of pairs trained long enough should drive the regression terms well down."""
    cfg = replace(
        run_config,
        model=run_config.model.replace(encoder={**asdict(run_config.model.encoder), "dropout": 0.0}),
        train=TrainConfig(lr=1e-3, batch_size=8, epochs=600, overfit_pairs=8, augment=False, checkpoint_every=600),
    )
    result = train_model(cfg, dataset, tmp_path, verbose=False)
    rows = read_loss_log(result.loss_log)
    terms = [r["l_dx"] + r["l_rot"] for r in rows]
    assert smoothed_loss(terms)[-1] < 0.5 * smoothed_loss(terms)[0]
