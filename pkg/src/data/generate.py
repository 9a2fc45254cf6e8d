"""
Dataset Generation
==================
Renders every scene's trajectory, writes images/poses, computes retrieval
descriptors and the training neighbor pools, then the manifest.

Scenes are independent and are generated in parallel threads.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from src.data.retrieval import DescriptorIndex, build_pairs, descriptor_backbone, global_descriptor
from src.data.scenes import Intrinsics, generate_scene, render_view, sample_trajectory
from src.data.storage import (
    data_hash,
    image_path,
    is_query_view,
    scene_dir,
    write_manifest,
    write_pairs_csv,
    write_poses_csv,
    write_tensor,
)
from src.errors import EmptyViewError
from src.utils.config import DataConfig


def derive_seed(seed: int, *keys) -> int:
    """Independent child seed for (seed, keys...)."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def scene_seed(seed: int, scene_id: int) -> int:
    return derive_seed(seed, 1, scene_id)


def descriptor_seed(seed: int) -> int:
    return derive_seed(seed, 2)


def render_scene(cfg: DataConfig, seed: int, scene_id: int) -> tuple:
    """(Scene, poses, images) for one scene; only poses whose render is non-empty are kept."""
    s_seed = scene_seed(seed, scene_id)
    scene = generate_scene(s_seed, cfg.landmarks, cfg.extent_m, scene_id)
    intr = Intrinsics.square(cfg.image_size, cfg.focal_px)
    images = []

    def accept(pose) -> bool:
        try:
            images.append(render_view(scene, pose, intr, cfg.landmark_radius_m, cfg.min_coverage))
        except EmptyViewError:
            return False
        return True

    poses = sample_trajectory(
        scene, s_seed + 1, cfg.views_per_scene, cfg.max_step_m, cfg.max_step_deg, accept=accept
    )
    return scene, poses, images


def write_scene(cfg: DataConfig, root, seed: int, scene_id: int) -> dict:
    """Generate and store one scene. Returns its manifest entry."""
    scene, poses, images = render_scene(cfg, seed, scene_id)
    view_ids = list(range(len(poses)))
    for vid, image in zip(view_ids, images):
        write_tensor(image_path(root, scene_id, vid), image)
    out_dir = scene_dir(root, scene_id)
    write_poses_csv(out_dir / "poses.csv", view_ids, poses)

    backbone = descriptor_backbone(cfg.image_size, descriptor_seed(seed))
    descriptors = global_descriptor(np.stack(images), backbone)
    write_tensor(out_dir / "descriptors.rft", descriptors)

    db_ids = [v for v in view_ids if not is_query_view(v, cfg.query_stride)]
    index = DescriptorIndex(db_ids, descriptors[db_ids])
    pose_by_id = dict(zip(view_ids, poses))
    pairs = build_pairs(db_ids, index, pose_by_id, cfg.neighbors)
    write_pairs_csv(out_dir / "pairs.csv", [(p.query_id, p.ref_id) for p in pairs])

    return {
        "scene_id": scene_id,
        "seed": scene.seed,
        "views": len(view_ids),
        "queries": len(view_ids) - len(db_ids),
        "pairs": len(pairs),
    }


def generate_dataset(cfg: DataConfig, seed: int, root=None, verbose: bool = True) -> dict:
    """Write the full dataset under root (cfg.root by default). Returns the manifest."""
    root = root or cfg.root
    intr = Intrinsics.square(cfg.image_size, cfg.focal_px)
    scene_ids = list(range(cfg.scenes))

    if verbose:
        print(f"   Rendering {cfg.scenes} scenes x {cfg.views_per_scene} views ({cfg.workers} workers)...")
    with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
        futures = [executor.submit(write_scene, cfg, root, seed, sid) for sid in scene_ids]
        entries = [f.result() for f in futures]
    if verbose:
        for e in entries:
            print(f"   scene {e['scene_id']:03d}: {e['views']} views, {e['queries']} queries, {e['pairs']} pairs")

    manifest = {
        "seed": seed,
        "scene_ids": scene_ids,
        "scenes": entries,
        "image_size": cfg.image_size,
        "intrinsics": list(intr),
        "query_stride": cfg.query_stride,
        "neighbors": cfg.neighbors,
        "descriptor_seed": descriptor_seed(seed),
        "data_hash": data_hash(cfg.image_size, intr),
        "config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
    }
    write_manifest(root, manifest)
    return manifest
