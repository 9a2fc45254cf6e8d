"""Relformer network, backbone and pose loss"""
from .config import BackboneConfig, EncoderConfig, ModelConfig, desk_config, full_config
from .layers import Module, Linear, Conv2d, LayerNorm, MLPHead
from .backbone import Backbone, extract_features, pooled_descriptor
from .relformer import (
    PositionalEncoding,
    pair_and_project,
    build_sequence,
    TransformerEncoder,
    encoder_forward,
    ConvAggregator,
    conv_aggregator_forward,
    regress_head,
    RelformerModel,
    baseline_forward,
    relformer_forward,
)
from .objective import LossParams, PoseTarget, make_target, stack_targets, pose_loss

__all__ = [
    'BackboneConfig',
    'EncoderConfig',
    'ModelConfig',
    'desk_config',
    'full_config',
    'Module',
    'Linear',
    'Conv2d',
    'LayerNorm',
    'MLPHead',
    'Backbone',
    'extract_features',
    'pooled_descriptor',
    'PositionalEncoding',
    'pair_and_project',
    'build_sequence',
    'TransformerEncoder',
    'encoder_forward',
    'ConvAggregator',
    'conv_aggregator_forward',
    'regress_head',
    'RelformerModel',
    'baseline_forward',
    'relformer_forward',
    'LossParams',
    'PoseTarget',
    'make_target',
    'stack_targets',
    'pose_loss',
]
