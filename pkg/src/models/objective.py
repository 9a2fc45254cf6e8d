"""
Pose Loss with Learned Weights
Per sample:

    L = L_dx * exp(-s_dx) + s_dx + L_rot * exp(-s_rot) + s_rot

L_dx and L_rot are L1 norms of prediction minus ground truth (raw
rotation vector, no orthogonalization). The batch loss is the mean over
samples. s_dx and s_rot are trained with the network but never decayed.
"""

from dataclasses import dataclass

import numpy as np

from src.diffcore import Tensor, l1_distance
from src.errors import ShapeError
from src.geometry import Pose, ROTATION_DIMS, matrix_to_target, relative_pose
from src.models.layers import Module, parameter


class LossParams(Module):
    def __init__(self, s_dx: float = 0.0, s_rot: float = -3.0):
        self.s_dx = parameter(np.array(s_dx))
        self.s_rot = parameter(np.array(s_rot))

    def values(self) -> tuple:
        return float(self.s_dx.data), float(self.s_rot.data)


@dataclass(frozen=True)
class PoseTarget:
    dx_gt: np.ndarray     # (3,) or (B, 3)
    rot_gt: np.ndarray    # (k,) or (B, k)
    kind: str = "6d"


def make_target(p1: Pose, p2: Pose, kind: str) -> PoseTarget:
    """Ground truth taking p1 to p2, rotation encoded per kind."""
    rel = relative_pose(p1, p2)
    return PoseTarget(rel.dx.copy(), matrix_to_target(rel.dR, kind), kind)


def stack_targets(targets: list) -> PoseTarget:
    kinds = {t.kind for t in targets}
    if len(kinds) != 1:
        raise ShapeError(f"stack_targets: mixed rotation kinds {sorted(kinds)}")
    return PoseTarget(
        np.stack([t.dx_gt for t in targets]),
        np.stack([t.rot_gt for t in targets]),
        kinds.pop(),
    )


def pose_loss(pred: tuple, gt: PoseTarget, params: LossParams, return_terms: bool = False):
    """
    Scalar loss for predictions (dx (B, 3), rot (B, k)) against gt.

    With return_terms, also returns {"l_dx", "l_rot"} batch means as floats.
    """
    dx, rot = pred
    dtype = dx.dtype
    dx_gt = np.atleast_2d(gt.dx_gt).astype(dtype)
    rot_gt = np.atleast_2d(gt.rot_gt).astype(dtype)
    if rot_gt.shape[-1] != ROTATION_DIMS[gt.kind]:
        raise ShapeError(f"pose_loss: {gt.kind} target has {rot_gt.shape[-1]} values")
    if dx.shape != dx_gt.shape or rot.shape != rot_gt.shape:
        raise ShapeError(
            f"pose_loss: predictions {dx.shape}/{rot.shape} vs targets {dx_gt.shape}/{rot_gt.shape}"
        )

    l_dx = l1_distance(dx, Tensor(dx_gt)).mean()
    l_rot = l1_distance(rot, Tensor(rot_gt)).mean()
    s_dx, s_rot = params.s_dx, params.s_rot
    if s_dx.dtype != dtype:
        s_dx, s_rot = s_dx.astype(dtype), s_rot.astype(dtype)

    loss = l_dx * (-s_dx).exp() + s_dx + l_rot * (-s_rot).exp() + s_rot
    if return_terms:
        return loss, {"l_dx": float(l_dx.data), "l_rot": float(l_rot.data)}
    return loss
