"""Rotation and pose geometry"""
from .rotations import (
    quat_to_matrix,
    matrix_to_quat,
    canonicalize_quat,
    sixd_to_matrix,
    matrix_to_sixd,
    nined_to_matrix,
    matrix_to_nined,
    angular_error,
    matrix_to_target,
    target_to_matrix,
    is_rotation,
    validate_rotation,
    random_rotation,
    rot_x,
    rot_y,
    rot_z,
    ROTATION_DIMS,
)
from .poses import Pose, RelativePose, relative_pose, recover_pose, position_error

__all__ = [
    'quat_to_matrix',
    'matrix_to_quat',
    'canonicalize_quat',
    'sixd_to_matrix',
    'matrix_to_sixd',
    'nined_to_matrix',
    'matrix_to_nined',
    'angular_error',
    'matrix_to_target',
    'target_to_matrix',
    'is_rotation',
    'validate_rotation',
    'random_rotation',
    'rot_x',
    'rot_y',
    'rot_z',
    'ROTATION_DIMS',
    'Pose',
    'RelativePose',
    'relative_pose',
    'recover_pose',
    'position_error',
]
