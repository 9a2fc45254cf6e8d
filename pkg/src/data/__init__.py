"""Synthetic scenes, dataset storage and retrieval"""
from .scenes import (
    Intrinsics,
    Scene,
    generate_scene,
    look_at,
    sample_trajectory,
    project_points,
    render_view,
    rescale_crop,
    color_jitter,
    prepare_input,
)
from .storage import Dataset, read_tensor, write_tensor, read_poses_csv, write_poses_csv, is_query_view
from .retrieval import (
    DescriptorIndex,
    PairRecord,
    descriptor_backbone,
    global_descriptor,
    nearest_neighbor,
    build_pairs,
    pair_records,
)
from .generate import generate_dataset

__all__ = [
    'Intrinsics',
    'Scene',
    'generate_scene',
    'look_at',
    'sample_trajectory',
    'project_points',
    'render_view',
    'rescale_crop',
    'color_jitter',
    'prepare_input',
    'Dataset',
    'read_tensor',
    'write_tensor',
    'read_poses_csv',
    'write_poses_csv',
    'is_query_view',
    'DescriptorIndex',
    'PairRecord',
    'descriptor_backbone',
    'global_descriptor',
    'nearest_neighbor',
    'build_pairs',
    'pair_records',
    'generate_dataset',
]
