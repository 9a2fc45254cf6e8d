"""
Model Configuration
===================
Architecture hyperparameters as frozen dataclasses. Validation runs at
construction so a bad config never reaches the model builder.

Presets:
- desk:  64x64 input, 4 stride-2 stages (16, 32, 64, 96 channels),
         translation endpoint 4x4x96, rotation endpoint 8x8x64,
         C_h = 128, 2 encoder layers, 4 heads
- full: 224x224 input, 5 stride-2 stages (16, 24, 40, 112, 320),
         translation endpoint 14x14x112, rotation endpoint 28x28x40,
         C_h = 512, 6 encoder layers, 8 heads

maps = "fine" moves both endpoints one stage earlier (double resolution).
"""

from dataclasses import asdict, dataclass, field, fields

from src.errors import ConfigError
from src.geometry import ROTATION_DIMS

AGGREGATORS = ("transformer", "conv", "baseline")
MAP_CHOICES = ("coarse", "fine")


def _reject_unknown(cls, data: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


@dataclass(frozen=True)
class BackboneConfig:
    input_size: int = 64
    in_channels: int = 3
    channels: tuple = (16, 32, 64, 96)
    strides: tuple = (2, 2, 2, 2)
    kernel: int = 3
    trans_stage: int = 4    # 1-based stage index of the translation endpoint
    rot_stage: int = 3

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        if len(self.channels) != len(self.strides) or not self.channels:
            raise ConfigError("backbone: channels and strides must be non-empty and the same length")
        if any(c < 1 for c in self.channels) or any(s not in (1, 2) for s in self.strides):
            raise ConfigError(f"backbone: invalid channels {self.channels} or strides {self.strides}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"backbone: kernel must be odd, got {self.kernel}")
        if self.input_size < 8 or self.in_channels < 1:
            raise ConfigError(f"backbone: input_size {self.input_size} too small")
        size = self.input_size
        for s in self.strides:
            if size % s:
                raise ConfigError(f"backbone: input_size {self.input_size} not divisible by the stage strides")
            size //= s

    @property
    def num_stages(self) -> int:
        return len(self.channels)

    def stage_resolution(self, stage: int) -> int:
        """Spatial side of the output of a 1-based stage."""
        if not 1 <= stage <= self.num_stages:
            raise ConfigError(f"backbone: stage {stage} outside 1..{self.num_stages}")
        size = self.input_size
        for s in self.strides[:stage]:
            size //= s
        return size

    def stage_shape(self, stage: int) -> tuple:
        side = self.stage_resolution(stage)
        return (side, side, self.channels[stage - 1])

    @property
    def descriptor_dim(self) -> int:
        return self.channels[-1]


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 2
    heads: int = 4
    hidden: int = 128      # C_h
    mlp_dim: int = 256
    dropout: float = 0.1

    def __post_init__(self):
        if self.layers < 1 or self.heads < 1 or self.mlp_dim < 1:
            raise ConfigError(f"encoder: layers/heads/mlp_dim must be positive ({self})")
        if self.hidden % 2:
            raise ConfigError(f"encoder: hidden dim {self.hidden} must be even")
        if self.hidden % self.heads:
            raise ConfigError(f"encoder: hidden dim {self.hidden} not divisible by {self.heads} heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"encoder: dropout {self.dropout} outside [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads


@dataclass(frozen=True)
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    rot_kind: str = "6d"
    aggregator: str = "transformer"
    maps: str = "coarse"
    s_dx_init: float = 0.0
    s_rot_init: float = -3.0

    def __post_init__(self):
        if isinstance(self.backbone, dict):
            object.__setattr__(self, "backbone", BackboneConfig(**self.backbone))
        if isinstance(self.encoder, dict):
            object.__setattr__(self, "encoder", EncoderConfig(**self.encoder))
        if self.rot_kind not in ROTATION_DIMS:
            raise ConfigError(f"model: rot_kind '{self.rot_kind}' not in {sorted(ROTATION_DIMS)}")
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(f"model: aggregator '{self.aggregator}' not in {AGGREGATORS}")
        if self.maps not in MAP_CHOICES:
            raise ConfigError(f"model: maps '{self.maps}' not in {MAP_CHOICES}")

        trans, rot = self.endpoints
        if rot < 1 or trans > self.backbone.num_stages:
            raise ConfigError(f"model: endpoint stages ({trans}, {rot}) outside the backbone")
        t_side = self.backbone.stage_resolution(trans)
        r_side = self.backbone.stage_resolution(rot)
        if r_side != 2 * t_side:
            raise ConfigError(
                f"model: rotation endpoint {r_side}x{r_side} must be twice the "
                f"translation endpoint {t_side}x{t_side}"
            )

    @property
    def endpoints(self) -> tuple:
        """(translation stage, rotation stage), 1-based, after the maps shift."""
        shift = 1 if self.maps == "fine" else 0
        return self.backbone.trans_stage - shift, self.backbone.rot_stage - shift

    @property
    def rot_dim(self) -> int:
        return ROTATION_DIMS[self.rot_kind]

    def feature_shapes(self) -> tuple:
        """((H, W, C) translation map, (H, W, C) rotation map)."""
        trans, rot = self.endpoints
        return self.backbone.stage_shape(trans), self.backbone.stage_shape(rot)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backbone"]["channels"] = list(self.backbone.channels)
        d["backbone"]["strides"] = list(self.backbone.strides)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        _reject_unknown(cls, data, "model")
        try:
            if isinstance(data.get("backbone"), dict):
                _reject_unknown(BackboneConfig, data["backbone"], "model.backbone")
                data["backbone"] = BackboneConfig(**data["backbone"])
            if isinstance(data.get("encoder"), dict):
                _reject_unknown(EncoderConfig, data["encoder"], "model.encoder")
                data["encoder"] = EncoderConfig(**data["encoder"])
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"model: {e}") from None

    def replace(self, **changes) -> "ModelConfig":
        d = self.to_dict()
        d.update(changes)
        return ModelConfig.from_dict(d)


def desk_config(**overrides) -> ModelConfig:
    return ModelConfig().replace(**overrides) if overrides else ModelConfig()


def full_config(**overrides) -> ModelConfig:
    cfg = ModelConfig(
        backbone=BackboneConfig(
            input_size=224,
            channels=(16, 24, 40, 112, 320),
            strides=(2, 2, 2, 2, 2),
            trans_stage=4,
            rot_stage=3,
        ),
        encoder=EncoderConfig(layers=6, heads=8, hidden=512, mlp_dim=2048, dropout=0.1),
    )
    return cfg.replace(**overrides) if overrides else cfg
