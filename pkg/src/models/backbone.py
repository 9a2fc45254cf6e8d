"""
Convolutional Backbone
Small stride-2 CNN standing in for a pretrained feature extractor. Each
stage is conv(k x k, stride) + relu; the model reads two stage outputs
as the translation and rotation feature maps and the last stage as the
global descriptor source.
"""

import numpy as np

from src.diffcore import Tensor, global_avg_pool, relu
from src.errors import ShapeError
from src.models.config import BackboneConfig, ModelConfig
from src.models.layers import Conv2d, Module


class Backbone(Module):
    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        self.cfg = cfg
        widths = (cfg.in_channels,) + cfg.channels
        self.stages = [
            Conv2d(widths[i], widths[i + 1], cfg.kernel, rng, stride=cfg.strides[i])
            for i in range(cfg.num_stages)
        ]

    def check_input(self, images: Tensor):
        s, c = self.cfg.input_size, self.cfg.in_channels
        if images.ndim != 4 or images.shape[1:] != (s, s, c):
            raise ShapeError(f"backbone: expected images of shape (B, {s}, {s}, {c}), got {images.shape}")

    def forward(self, images: Tensor, upto: int = None) -> list:
        """Outputs of stages 1..upto (all stages by default)."""
        self.check_input(images)
        upto = upto or self.cfg.num_stages
        outputs, x = [], images
        for stage in self.stages[:upto]:
            x = relu(stage(x))
            outputs.append(x)
        return outputs


def extract_features(images: Tensor, backbone: Backbone, cfg: ModelConfig) -> tuple:
    """
    Translation and rotation endpoint maps, each (B, H_f, W_f, C_f).

    The same Backbone instance serves both images of a pair.
    """
    trans, rot = cfg.endpoints
    outputs = backbone(images, upto=max(trans, rot))
    return outputs[trans - 1], outputs[rot - 1]


def pooled_descriptor(images: Tensor, backbone: Backbone) -> Tensor:
    """Global average pool of the last stage: (B, C_last)."""
    return global_avg_pool(backbone(images)[-1])
