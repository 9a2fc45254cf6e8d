"""
Synthetic Scenes
================
Colored landmark clouds, smooth camera trajectories through them, and a
pinhole point-splat renderer.

Camera convention: Pose.R columns are the camera x (image right),
y (image down) and z (viewing direction) axes in world coordinates. A
world point p sits at R^T (p - x) in camera coordinates and projects to

    u = fx * X / Z + cx,   v = fy * Y / Z + cy

with pixel (row, col) covering [col, col + 1) x [row, row + 1).
"""

from typing import NamedTuple

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from src.errors import EmptyViewError, InvalidInputError
from src.geometry import Pose

NEAR_PLANE = 0.05
BACKGROUND = 0.5
CAMERA_REGION = 0.5    # cameras stay in the central half of the box
TARGET_REGION = 0.6


class Intrinsics(NamedTuple):
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    @classmethod
    def square(cls, size: int, focal: float) -> "Intrinsics":
        return cls(size, size, focal, focal, size / 2.0, size / 2.0)


class Scene(NamedTuple):
    scene_id: int
    seed: int
    points: np.ndarray     # (N, 3) meters
    colors: np.ndarray     # (N, 3) in [0, 1]
    extent: float          # side of the axis-aligned box centred at the origin

    @property
    def half(self) -> float:
        return self.extent / 2.0


def generate_scene(seed: int, landmarks: int = 500, extent: float = 4.0, scene_id: int = 0) -> Scene:
    """
    Landmarks uniform in [-extent/2, extent/2]^3. Colors are a smooth
    function of position (0.5 + 0.5 sin(W p + phase), with a per-scene W
    and phase) so appearance encodes where a point is.
    """
    if landmarks < 1 or extent <= 0:
        raise InvalidInputError(f"generate_scene: need landmarks >= 1 and extent > 0 (got {landmarks}, {extent})")
    rng = np.random.default_rng(seed)
    half = extent / 2.0
    points = rng.uniform(-half, half, size=(landmarks, 3))
    freq = rng.normal(scale=2.0 / extent, size=(3, 3))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
    colors = 0.5 + 0.5 * np.sin(points @ freq + phase)
    return Scene(scene_id, seed, points, colors, float(extent))


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

def look_at(position: np.ndarray, target: np.ndarray, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Rotation whose z column points from position to target, x to the image right."""
    forward = np.asarray(target, dtype=np.float64) - position
    norm = np.linalg.norm(forward)
    if norm < 1e-9:
        raise InvalidInputError("look_at: target coincides with position")
    forward /= norm
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-6:
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.column_stack([right, down, forward])


def _limit_rotation(R_prev: np.ndarray, R_next: np.ndarray, max_deg: float) -> np.ndarray:
    step = Rotation.from_matrix(R_prev.T @ R_next).as_rotvec()
    angle = np.linalg.norm(step)
    limit = np.radians(max_deg)
    if angle > limit:
        step *= limit / angle
    R = R_prev @ Rotation.from_rotvec(step).as_matrix()
    # re-orthonormalize accumulated drift
    U, _, Vt = np.linalg.svd(R)
    return U @ Vt


def sample_trajectory(scene: Scene, seed: int, count: int, max_step_m: float = 0.3,
                      max_step_deg: float = 15.0, accept=None, max_tries: int = 100) -> list:
    """
    Smooth random walk of count poses. Each step moves at most max_step_m
    and turns at most max_step_deg; cameras stay in the central region and
    look at a slowly drifting interior target.

    accept(pose) -> bool lets the caller reject poses (e.g. empty views);
    a rejected step is redrawn up to max_tries times.
    """
    if count < 2:
        raise InvalidInputError(f"sample_trajectory: count must be >= 2, got {count}")
    accept = accept or (lambda pose: True)
    rng = np.random.default_rng(seed)
    cam_box = CAMERA_REGION * scene.half
    tgt_box = TARGET_REGION * scene.half

    def draw_target(position):
        for _ in range(max_tries):
            t = rng.uniform(-tgt_box, tgt_box, size=3)
            if np.linalg.norm(t - position) > 0.5:
                return t
        return position + np.array([1.0, 0.0, 0.0])

    for _ in range(max_tries):
        x = rng.uniform(-cam_box, cam_box, size=3)
        target = draw_target(x)
        pose = Pose(x, look_at(x, target))
        if accept(pose):
            break
    else:
        raise EmptyViewError(f"sample_trajectory: no acceptable start pose in scene {scene.scene_id}")

    poses = [pose]
    while len(poses) < count:
        prev = poses[-1]
        for _ in range(max_tries):
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            x = np.clip(prev.x + direction * rng.uniform(0.0, max_step_m), -cam_box, cam_box)
            target = np.clip(target + rng.normal(scale=0.3, size=3), -tgt_box, tgt_box)
            if np.linalg.norm(target - x) < 0.5:
                target = draw_target(x)
            R = _limit_rotation(prev.R, look_at(x, target), max_step_deg)
            candidate = Pose(x, R)
            if accept(candidate):
                poses.append(candidate)
                break
        else:
            raise EmptyViewError(
                f"sample_trajectory: could not extend trajectory past {len(poses)} poses in scene {scene.scene_id}"
            )
    return poses


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def project_points(points: np.ndarray, pose: Pose, intr: Intrinsics) -> tuple:
    """(uv (N, 2) pixel coordinates, depth (N,))."""
    cam = (np.asarray(points, dtype=np.float64) - pose.x) @ pose.R
    depth = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * cam[:, 0] / depth + intr.cx
        v = intr.fy * cam[:, 1] / depth + intr.cy
    return np.column_stack([u, v]), depth


def render_view(scene: Scene, pose: Pose, intr: Intrinsics, radius_m: float = 0.04,
                min_coverage: float = 0.05) -> np.ndarray:
    """
    Painter's-order disc splats (far to near) on a gray background.
    Splat radius is radius_m * fx / depth pixels; colors are dimmed with
    depth. Returns float32 (H, W, 3) in [0, 1].

    Raises EmptyViewError when fewer than min_coverage of the pixels are hit.
    """
    W, H = intr.width, intr.height
    uv, depth = project_points(scene.points, pose, intr)
    radius = np.maximum(radius_m * intr.fx / np.maximum(depth, NEAR_PLANE), 0.75)
    radius = np.minimum(radius, 0.5 * max(W, H))
    visible = (
        (depth > NEAR_PLANE)
        & (uv[:, 0] + radius > 0) & (uv[:, 0] - radius < W)
        & (uv[:, 1] + radius > 0) & (uv[:, 1] - radius < H)
    )
    idx = np.flatnonzero(visible)
    idx = idx[np.argsort(-depth[idx], kind="stable")]

    shade = np.clip(1.2 - 0.15 * depth, 0.35, 1.0)
    image = np.full((H, W, 3), BACKGROUND, dtype=np.float32)
    touched = np.zeros((H, W), dtype=bool)
    centers_x = np.arange(W) + 0.5
    centers_y = np.arange(H) + 0.5

    for i in idx:
        u, v, r = uv[i, 0], uv[i, 1], radius[i]
        c0, c1 = max(int(np.floor(u - r)), 0), min(int(np.ceil(u + r)), W)
        r0, r1 = max(int(np.floor(v - r)), 0), min(int(np.ceil(v + r)), H)
        if c0 >= c1 or r0 >= r1:
            continue
        disc = (
            (centers_x[c0:c1][None, :] - u) ** 2 + (centers_y[r0:r1][:, None] - v) ** 2
        ) <= r * r
        image[r0:r1, c0:c1][disc] = scene.colors[i] * shade[i]
        touched[r0:r1, c0:c1] |= disc

    coverage = touched.mean()
    if coverage < min_coverage:
        raise EmptyViewError(
            f"render_view: only {coverage:.1%} of pixels covered in scene {scene.scene_id} "
            f"(need {min_coverage:.0%})"
        )
    return image


# ---------------------------------------------------------------------------
# Input pipeline
# ---------------------------------------------------------------------------

def rescale_crop(image: np.ndarray, out_size: int, scale: float = 1.14,
                 rng: np.random.Generator = None) -> np.ndarray:
    """
    Bilinear rescale by scale, then a random crop (rng given) or the
    center crop (rng None) of out_size x out_size.
    """
    zoomed = ndimage.zoom(image, (scale, scale, 1), order=1) if scale != 1.0 else image
    max_y = zoomed.shape[0] - out_size
    max_x = zoomed.shape[1] - out_size
    if max_y < 0 or max_x < 0:
        raise InvalidInputError(f"rescale_crop: {zoomed.shape[:2]} smaller than crop {out_size}")
    if rng is None:
        oy, ox = max_y // 2, max_x // 2
    else:
        oy, ox = int(rng.integers(0, max_y + 1)), int(rng.integers(0, max_x + 1))
    return np.ascontiguousarray(zoomed[oy:oy + out_size, ox:ox + out_size], dtype=np.float32)


def color_jitter(image: np.ndarray, rng: np.random.Generator = None) -> np.ndarray:
    """Brightness/contrast/saturation jitter hook; currently the identity."""
    return image


def prepare_input(image: np.ndarray, out_size: int, scale: float = 1.14,
                  rng: np.random.Generator = None, augment: bool = False) -> np.ndarray:
    """Model input path: train (augment, random crop) or eval (center crop, nothing else)."""
    if augment:
        return color_jitter(rescale_crop(image, out_size, scale, rng), rng)
    return rescale_crop(image, out_size, scale, None)
