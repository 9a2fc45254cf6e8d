"""
Run Configuration
=================
One JSON document drives every subcommand:

    {
      "seed": 0,
      "data":   {...},   # synthetic dataset generation
      "model":  {...},   # ModelConfig (see src/models/config.py)
      "train":  {...},
      "eval":   {...},
      "ablate": {...}
    }

Missing sections take their defaults. Unknown keys and out-of-range
values raise ConfigError before anything touches the disk.
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from src.errors import ConfigError
from src.models.config import AGGREGATORS, MAP_CHOICES, ModelConfig
from src.geometry import ROTATION_DIMS

SPLITS = ("query", "database", "train_pairs")


def _check(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _build(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from None


@dataclass(frozen=True)
class DataConfig:
    root: str = "data/desk"
    scenes: int = 4
    views_per_scene: int = 200
    landmarks: int = 500
    extent_m: float = 4.0
    image_size: int = 64
    focal_px: float = 64.0
    landmark_radius_m: float = 0.04
    max_step_m: float = 0.3
    max_step_deg: float = 15.0
    min_coverage: float = 0.05
    query_stride: int = 5
    neighbors: int = 5
    workers: int = 4

    def __post_init__(self):
        _check(self.scenes >= 1, f"data.scenes must be >= 1, got {self.scenes}")
        _check(self.views_per_scene >= 2, f"data.views_per_scene must be >= 2, got {self.views_per_scene}")
        _check(self.landmarks >= 200, f"data.landmarks must be >= 200, got {self.landmarks}")
        _check(self.extent_m > 0, f"data.extent_m must be positive, got {self.extent_m}")
        _check(self.image_size >= 8, f"data.image_size must be >= 8, got {self.image_size}")
        _check(self.focal_px > 0, f"data.focal_px must be positive, got {self.focal_px}")
        _check(self.landmark_radius_m > 0, f"data.landmark_radius_m must be positive")
        _check(0 < self.max_step_m <= self.extent_m, f"data.max_step_m out of range: {self.max_step_m}")
        _check(0 < self.max_step_deg <= 90, f"data.max_step_deg out of range: {self.max_step_deg}")
        _check(0 <= self.min_coverage < 1, f"data.min_coverage out of range: {self.min_coverage}")
        _check(self.query_stride >= 2, f"data.query_stride must be >= 2, got {self.query_stride}")
        _check(self.neighbors >= 1, f"data.neighbors must be >= 1, got {self.neighbors}")
        db_views = self.views_per_scene - self.views_per_scene // self.query_stride
        _check(
            self.neighbors < db_views,
            f"data.neighbors ({self.neighbors}) must be below the database views per scene ({db_views})",
        )
        _check(self.workers >= 1, f"data.workers must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 8
    epochs: int = 30
    max_steps: int = 0            # 0 = no cap
    checkpoint_every: int = 5     # epochs
    train_scenes: tuple = ()      # empty = every scene
    overfit_pairs: int = 0        # > 0 = fixed pair subset from the first training scene
    augment: bool = True
    rescale: float = 1.14

    def __post_init__(self):
        object.__setattr__(self, "train_scenes", tuple(int(s) for s in self.train_scenes))
        _check(self.lr > 0, f"train.lr must be positive, got {self.lr}")
        _check(self.weight_decay >= 0, f"train.weight_decay must be >= 0")
        _check(self.batch_size >= 1, f"train.batch_size must be >= 1")
        _check(self.epochs >= 1, f"train.epochs must be >= 1")
        _check(self.max_steps >= 0, f"train.max_steps must be >= 0")
        _check(self.checkpoint_every >= 1, f"train.checkpoint_every must be >= 1")
        _check(self.overfit_pairs >= 0, f"train.overfit_pairs must be >= 0")
        _check(self.rescale >= 1.0, f"train.rescale must be >= 1, got {self.rescale}")


@dataclass(frozen=True)
class EvalConfig:
    split: str = "query"
    scenes: tuple = ()            # empty = every scene
    workers: int = 4

    def __post_init__(self):
        object.__setattr__(self, "scenes", tuple(int(s) for s in self.scenes))
        _check(self.split in SPLITS, f"eval.split '{self.split}' not in {SPLITS}")
        _check(self.workers >= 1, f"eval.workers must be >= 1")


@dataclass(frozen=True)
class AblateConfig:
    aggregators: tuple = ("transformer", "conv", "baseline")
    rot_kinds: tuple = ("6d",)
    maps: tuple = ("coarse",)
    seeds: tuple = (0, 1, 2)
    eval_scene: int = -1          # held out, every other scene trains; -1 = last scene

    def __post_init__(self):
        for name in ("aggregators", "rot_kinds", "maps", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        _check(all(a in AGGREGATORS for a in self.aggregators), f"ablate.aggregators: {self.aggregators}")
        _check(all(r in ROTATION_DIMS for r in self.rot_kinds), f"ablate.rot_kinds: {self.rot_kinds}")
        _check(all(m in MAP_CHOICES for m in self.maps), f"ablate.maps: {self.maps}")
        _check(len(self.seeds) >= 1, "ablate.seeds must not be empty")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ablate: AblateConfig = field(default_factory=AblateConfig)

    def __post_init__(self):
        _check(isinstance(self.seed, int) and self.seed >= 0, f"seed must be a non-negative integer, got {self.seed!r}")
        _check(
            self.data.image_size == self.model.backbone.input_size,
            f"data.image_size ({self.data.image_size}) must equal model.backbone.input_size "
            f"({self.model.backbone.input_size})",
        )
        for s in self.train.train_scenes + self.eval.scenes:
            _check(0 <= s < self.data.scenes, f"scene index {s} outside 0..{self.data.scenes - 1}")
        _check(
            -1 <= self.ablate.eval_scene < self.data.scenes,
            f"ablate.eval_scene {self.ablate.eval_scene} outside -1..{self.data.scenes - 1}",
        )

    @property
    def held_out_scene(self) -> int:
        return self.ablate.eval_scene if self.ablate.eval_scene >= 0 else self.data.scenes - 1

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"config: unknown keys {sorted(unknown)}")
        return cls(
            seed=data.get("seed", 0),
            data=_build(DataConfig, data.get("data"), "data"),
            model=ModelConfig.from_dict(data.get("model") or {}),
            train=_build(TrainConfig, data.get("train"), "train"),
            eval=_build(EvalConfig, data.get("eval"), "eval"),
            ablate=_build(AblateConfig, data.get("ablate"), "ablate"),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    def with_overrides(self, seed=None, data_root=None, scenes=None, rot=None, agg=None, maps=None) -> "RunConfig":
        """Apply command-line flags on top of the file values."""
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if data_root is not None:
            cfg = replace(cfg, data=replace(cfg.data, root=str(data_root)))
        if scenes is not None:
            cfg = replace(cfg, train=replace(cfg.train, train_scenes=tuple(scenes)))
        model_changes = {}
        if rot is not None:
            model_changes["rot_kind"] = rot
        if agg is not None:
            model_changes["aggregator"] = agg
        if maps is not None:
            model_changes["maps"] = maps
        if model_changes:
            cfg = replace(cfg, model=cfg.model.replace(**model_changes))
        # re-run cross-section validation
        return RunConfig(cfg.seed, cfg.data, cfg.model, cfg.train, cfg.eval, cfg.ablate)


def load_run_config(path=None) -> RunConfig:
    """Read a JSON run config; None gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return RunConfig.from_dict(data)
