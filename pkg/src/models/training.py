"""
Training Loop
=============
Adam training of a RelformerModel on stored neighbor pairs.

An epoch visits every training query (database view with a neighbor
pool) once, in a seeded random order, pairing it with a reference drawn
from its pool. Overfit mode instead cycles a fixed, seeded subset of
pairs from the first training scene.

Outputs under the run directory:
    loss_log.csv                     step,epoch,loss,l_dx,l_rot,s_dx,s_rot
    checkpoint_epochNNN.rfck         every train.checkpoint_every epochs
    checkpoint.rfck                  final state
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.data.generate import derive_seed
from src.data.scenes import prepare_input
from src.data.storage import Dataset
from src.diffcore import Adam, Tensor, load_checkpoint, save_checkpoint
from src.errors import CompatibilityError, InvalidInputError, NumericError
from src.models.config import ModelConfig
from src.models.objective import LossParams, make_target, pose_loss, stack_targets
from src.models.relformer import RelformerModel, relformer_forward
from src.utils.config import RunConfig

LOG_COLUMNS = ["step", "epoch", "loss", "l_dx", "l_rot", "s_dx", "s_rot"]
FINAL_CHECKPOINT = "checkpoint.rfck"
LOSS_LOG = "loss_log.csv"


@dataclass
class TrainResult:
    checkpoint: Path
    loss_log: Path
    steps: int
    epochs: int
    final_loss: float


# ---------------------------------------------------------------------------
# Checkpoint helpers
# ---------------------------------------------------------------------------

def checkpoint_params(model: RelformerModel, loss_params: LossParams) -> dict:
    params = {name: p.data for name, p in model.named_parameters()}
    params["loss.s_dx"] = loss_params.s_dx.data
    params["loss.s_rot"] = loss_params.s_rot.data
    return params


def restore_params(model: RelformerModel, loss_params: LossParams, params: dict):
    params = dict(params)
    try:
        loss_params.s_dx.data = np.asarray(params.pop("loss.s_dx"), dtype=np.float32).reshape(())
        loss_params.s_rot.data = np.asarray(params.pop("loss.s_rot"), dtype=np.float32).reshape(())
    except KeyError as e:
        raise CompatibilityError(f"checkpoint has no loss weight {e}") from None
    model.load_state_dict(params)


def load_trained(path) -> tuple:
    """(model in eval mode, loss params, Checkpoint) from a checkpoint file."""
    ckpt = load_checkpoint(path)
    if "model_config" not in ckpt.meta:
        raise CompatibilityError(f"{path}: checkpoint carries no model config")
    cfg = ModelConfig.from_dict(ckpt.meta["model_config"])
    model = RelformerModel(cfg, seed=0)
    loss_params = LossParams(cfg.s_dx_init, cfg.s_rot_init)
    restore_params(model, loss_params, ckpt.params)
    model.eval()
    return model, loss_params, ckpt


def check_compatible(meta: dict, dataset: Dataset, model_cfg: ModelConfig = None, where: str = "checkpoint"):
    if meta.get("data_hash") != dataset.data_hash:
        raise CompatibilityError(
            f"{where} was trained on data {meta.get('data_hash')}, dataset {dataset.root} is {dataset.data_hash}"
        )
    if model_cfg is not None and meta.get("model_config") != model_cfg.to_dict():
        raise CompatibilityError(f"{where}: model config differs from the current run config")


# ---------------------------------------------------------------------------
# Loss log
# ---------------------------------------------------------------------------

def read_loss_log(path) -> list:
    with open(path, newline="") as f:
        return [
            {k: (int(v) if k in ("step", "epoch") else float(v)) for k, v in row.items()}
            for row in csv.DictReader(f)
        ]


def smoothed_loss(values, window: int = 20) -> np.ndarray:
    """Trailing moving average; the first window - 1 entries are dropped."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) < window:
        return np.array([values.mean()]) if len(values) else values
    return np.convolve(values, np.ones(window) / window, mode="valid")


# ---------------------------------------------------------------------------
# Trainer
# ---------------------------------------------------------------------------

class RelformerTrainer:
    """Owns the model, loss weights, optimizer and sampling RNG of one run."""

    def __init__(self, cfg: RunConfig, dataset: Dataset, out_dir, verbose: bool = True):
        self.cfg = cfg
        self.dataset = dataset
        self.out_dir = Path(out_dir)
        self.verbose = verbose

        if dataset.image_size != cfg.model.backbone.input_size:
            raise CompatibilityError(
                f"dataset images are {dataset.image_size}px, model expects {cfg.model.backbone.input_size}px"
            )
        self.scenes = list(cfg.train.train_scenes) or dataset.scene_ids
        for sid in self.scenes:
            dataset.poses(sid)

        self.model = RelformerModel(cfg.model, seed=cfg.seed)
        self.loss_params = LossParams(cfg.model.s_dx_init, cfg.model.s_rot_init)
        self.params = self.model.parameters() + self.loss_params.parameters()
        self.optimizer = Adam(
            self.params, lr=cfg.train.lr, weight_decay=cfg.train.weight_decay,
            no_decay=self.loss_params.parameters(),
        )
        self.rng = np.random.default_rng(derive_seed(cfg.seed, 3))
        self.step = 0
        self.epoch = 0
        self.fixed_pairs = self._select_overfit_pairs() if cfg.train.overfit_pairs else None

    # -- sampling ----------------------------------------------------------

    def _select_overfit_pairs(self) -> list:
        scene = self.scenes[0]
        pairs = self.dataset.pairs(scene)
        if not pairs:
            raise InvalidInputError(f"scene {scene} has no stored pairs")
        pick = np.random.default_rng(derive_seed(self.cfg.seed, 4))
        count = min(self.cfg.train.overfit_pairs, len(pairs))
        chosen = sorted(pick.choice(len(pairs), size=count, replace=False))
        return [(scene, pairs[i][0], pairs[i][1]) for i in chosen]

    def _pools(self) -> list:
        entries = []
        for sid in self.scenes:
            pools = {}
            for q, r in self.dataset.pairs(sid):
                pools.setdefault(q, []).append(r)
            entries.extend((sid, q, refs) for q, refs in sorted(pools.items()))
        if not entries:
            raise InvalidInputError(f"no training pairs in scenes {self.scenes}")
        return entries

    def epoch_samples(self) -> list:
        """(scene, query_id, ref_id) triples for one epoch, in visiting order."""
        if self.fixed_pairs is not None:
            order = self.rng.permutation(len(self.fixed_pairs))
            return [self.fixed_pairs[i] for i in order]
        pools = self._pools()
        order = self.rng.permutation(len(pools))
        samples = []
        for i in order:
            sid, q, refs = pools[i]
            samples.append((sid, q, refs[int(self.rng.integers(len(refs)))]))
        return samples

    def make_batch(self, samples: list) -> tuple:
        """(reference images, query images, PoseTarget)."""
        size = self.cfg.model.backbone.input_size
        t = self.cfg.train
        refs, queries, targets = [], [], []
        for sid, q, r in samples:
            poses = self.dataset.poses(sid)
            refs.append(prepare_input(self.dataset.image(sid, r), size, t.rescale, self.rng, t.augment))
            queries.append(prepare_input(self.dataset.image(sid, q), size, t.rescale, self.rng, t.augment))
            targets.append(make_target(poses[r], poses[q], self.cfg.model.rot_kind))
        return Tensor(np.stack(refs)), Tensor(np.stack(queries)), stack_targets(targets)

    # -- steps -------------------------------------------------------------

    def _grad_norms(self) -> dict:
        norms = {}
        for name, p in self.model.named_parameters() + [("loss.s_dx", self.loss_params.s_dx),
                                                        ("loss.s_rot", self.loss_params.s_rot)]:
            if p.grad is not None:
                norms[name] = float(np.linalg.norm(p.grad))
        return norms

    def _numeric_failure(self, loss_value: float):
        norms = self._grad_norms()
        worst = sorted(norms.items(), key=lambda kv: -np.nan_to_num(kv[1], nan=np.inf))[:3]
        detail = ", ".join(f"{n}={v:.3g}" for n, v in worst) or "no gradients"
        raise NumericError(
            f"training diverged at step {self.step}: loss={loss_value} "
            f"(lr {self.optimizer.state.lr}, largest grad norms: {detail})"
        )

    def train_step(self, samples: list) -> dict:
        images1, images2, target = self.make_batch(samples)
        self.optimizer.zero_grad()
        pred = relformer_forward(images1, images2, self.model, train=True, rng=self.rng)
        s_dx, s_rot = self.loss_params.values()
        loss, terms = pose_loss(pred, target, self.loss_params, return_terms=True)
        loss.backward()
        self.step += 1
        value = float(loss.data)
        if not np.isfinite(value) or not all(np.isfinite(v) for v in self._grad_norms().values()):
            self._numeric_failure(value)
        self.optimizer.step()
        return {"step": self.step, "epoch": self.epoch + 1, "loss": value,
                "l_dx": terms["l_dx"], "l_rot": terms["l_rot"], "s_dx": s_dx, "s_rot": s_rot}

    # -- checkpoints -------------------------------------------------------

    def meta(self) -> dict:
        return {
            "model_config": self.cfg.model.to_dict(),
            "data_hash": self.dataset.data_hash,
            "seed": self.cfg.seed,
            "step": self.step,
            "epoch": self.epoch,
            "train_scenes": self.scenes,
            "overfit_pairs": [list(p) for p in self.fixed_pairs] if self.fixed_pairs is not None else [],
            "rng_state": self.rng.bit_generator.state,
        }

    def save(self, path) -> Path:
        path = Path(path)
        save_checkpoint(path, checkpoint_params(self.model, self.loss_params), self.meta(), self.optimizer.state)
        return path

    def resume(self, path):
        ckpt = load_checkpoint(path)
        check_compatible(ckpt.meta, self.dataset, self.cfg.model, where=str(path))
        restore_params(self.model, self.loss_params, ckpt.params)
        if ckpt.adam is not None:
            ckpt.adam.lr = self.cfg.train.lr
            ckpt.adam.weight_decay = self.cfg.train.weight_decay
            self.optimizer.state = ckpt.adam
        self.step = int(ckpt.meta.get("step", 0))
        self.epoch = int(ckpt.meta.get("epoch", 0))
        if ckpt.meta.get("rng_state"):
            self.rng.bit_generator.state = ckpt.meta["rng_state"]
        if ckpt.meta.get("overfit_pairs"):
            self.fixed_pairs = [tuple(int(v) for v in p) for p in ckpt.meta["overfit_pairs"]]

    # -- main loop ---------------------------------------------------------

    def step_capped(self) -> bool:
        return bool(self.cfg.train.max_steps) and self.step >= self.cfg.train.max_steps

    def train(self, resume_from=None) -> TrainResult:
        t = self.cfg.train
        self.out_dir.mkdir(parents=True, exist_ok=True)
        log_path = self.out_dir / LOSS_LOG
        if resume_from is not None:
            self.resume(resume_from)
            if self.verbose:
                print(f"   Resumed from {resume_from} at step {self.step}, epoch {self.epoch}")
        mode = "a" if resume_from is not None and log_path.exists() else "w"

        if self.verbose:
            what = f"{len(self.fixed_pairs)} fixed pairs" if self.fixed_pairs is not None else f"scenes {self.scenes}"
            print(f"   Model: {self.cfg.model.aggregator}/{self.cfg.model.rot_kind}/{self.cfg.model.maps}, "
                  f"{self.model.num_parameters():,} parameters")
            print(f"   Training on {what}, batch {t.batch_size}, lr {t.lr}, wd {t.weight_decay}")

        last = None
        with open(log_path, mode, newline="") as f:
            writer = csv.DictWriter(f, fieldnames=LOG_COLUMNS)
            if mode == "w":
                writer.writeheader()
            while self.epoch < t.epochs and not self.step_capped():
                samples = self.epoch_samples()
                batches = [samples[i:i + t.batch_size] for i in range(0, len(samples), t.batch_size)]
                losses = []
                for batch in batches:
                    if self.step_capped():
                        break
                    last = self.train_step(batch)
                    writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in last.items()})
                    losses.append(last["loss"])
                f.flush()
                if len(losses) < len(batches):
                    break
                self.epoch += 1
                if self.verbose:
                    s_dx, s_rot = self.loss_params.values()
                    print(f"   epoch {self.epoch:3d}  step {self.step:6d}  loss {np.mean(losses):8.4f}  "
                          f"s_dx {s_dx:+.3f}  s_rot {s_rot:+.3f}")
                if self.epoch % t.checkpoint_every == 0 and self.epoch < t.epochs:
                    self.save(self.out_dir / f"checkpoint_epoch{self.epoch:03d}.rfck")

        final = self.save(self.out_dir / FINAL_CHECKPOINT)
        return TrainResult(final, log_path, self.step, self.epoch, last["loss"] if last else float("nan"))


def train_model(cfg: RunConfig, dataset: Dataset, out_dir, resume_from=None, verbose: bool = True) -> TrainResult:
    return RelformerTrainer(cfg, dataset, out_dir, verbose).train(resume_from)
