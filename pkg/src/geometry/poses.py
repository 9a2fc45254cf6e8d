"""
Camera Poses
Absolute poses <x, R> and relative poses (dx, dR) with the composition rule

    x2 = x1 + dx,  R2 = R1 dR

Pose.x is the camera position in the world frame and the columns of Pose.R
are the camera axes expressed in world coordinates.
"""

from dataclasses import dataclass, field

import numpy as np

from src.errors import InvalidInputError
from src.geometry.rotations import INPUT_TOL, orthonormality_error


def _vec3(v, name: str) -> np.ndarray:
    arr = np.array(v, dtype=np.float64).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: expected a finite 3-vector, got {v!r}")
    arr.setflags(write=False)
    return arr


def _rot(R, name: str) -> np.ndarray:
    arr = np.array(R, dtype=np.float64)
    if arr.shape != (3, 3) or not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: expected a finite 3x3 matrix")
    ortho, det = orthonormality_error(arr)
    if ortho >= INPUT_TOL or det >= INPUT_TOL:
        raise InvalidInputError(
            f"{name}: not a rotation (||R^T R - I|| = {ortho:.3e}, |det - 1| = {det:.3e})"
        )
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Pose:
    """Absolute camera pose."""
    x: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "x", _vec3(self.x, "Pose.x"))
        object.__setattr__(self, "R", _rot(self.R, "Pose.R"))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.eye(3))

    def to_row(self) -> list:
        """[tx, ty, tz, r11, r12, ..., r33] (row-major rotation)."""
        return list(self.x) + list(self.R.reshape(9))

    @classmethod
    def from_row(cls, row) -> "Pose":
        values = np.asarray(row, dtype=np.float64)
        if values.shape != (12,):
            raise InvalidInputError(f"Pose.from_row: expected 12 values, got {values.shape}")
        return cls(values[:3], values[3:].reshape(3, 3))


@dataclass(frozen=True)
class RelativePose:
    """Residual (dx, dR) between two poses."""
    dx: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dR: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "dx", _vec3(self.dx, "RelativePose.dx"))
        object.__setattr__(self, "dR", _rot(self.dR, "RelativePose.dR"))


def relative_pose(p1: Pose, p2: Pose) -> RelativePose:
    """Label that takes p1 to p2: dx = x2 - x1, dR = R1^T R2."""
    return RelativePose(p2.x - p1.x, p1.R.T @ p2.R)


def recover_pose(p1: Pose, d: RelativePose) -> Pose:
    """Apply a relative pose to a known reference pose."""
    return Pose(p1.x + d.dx, p1.R @ d.dR)


def position_error(a: Pose, b: Pose) -> float:
    """Euclidean distance between camera positions, meters."""
    return float(np.linalg.norm(a.x - b.x))
