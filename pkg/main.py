#!/usr/bin/env python3
"""
Relformer Relative Pose Pipeline
================================
Synthetic desk-scale camera relocalization: generate pose-labelled scenes,
train a relative pose regressor on retrieved image pairs, and report
median position/orientation errors.

Usage:
    python main.py gen --config configs/desk.json --out data/desk
    python main.py train --config configs/desk.json --out runs/desk --scenes 0 1 2
    python main.py train --config configs/desk.json --out runs/desk --resume runs/desk/checkpoint.rfck
    python main.py eval --checkpoint runs/desk/checkpoint.rfck --scenes 3
    python main.py localize --checkpoint runs/desk/checkpoint.rfck --query view.rft --scene 3
    python main.py ablate --config configs/desk.json --out runs/ablate

Common flags:
    --config <path>   JSON run config (defaults: built-in desk config)
    --seed <int>      override the top-level seed
    --data <dir>      dataset directory (default: data.root from the config)
    --rot {quat,6d,9d} --agg {transformer,conv,baseline} --maps {coarse,fine}

Exit codes: 0 success, 2 invalid config/input, 3 runtime or numeric failure.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from src.analysis import (
    ModelPredictor,
    ablation_rows,
    evaluate_dataset,
    format_ablation,
    format_report,
    localize,
    write_ablation_csv,
    write_query_errors,
    write_report_json,
)
from src.data import Dataset, generate_dataset, read_tensor
from src.errors import ConfigError, InvalidInputError, RelformerError
from src.geometry import ROTATION_DIMS
from src.models.config import AGGREGATORS, MAP_CHOICES
from src.models.training import check_compatible, load_trained, train_model
from src.utils.config import SPLITS, RunConfig, load_run_config


def _banner(title: str, cfg: RunConfig = None):
    print("=" * 60)
    print(f"  {title}")
    if cfg is not None:
        m = cfg.model
        print(f"  seed {cfg.seed} | {m.aggregator} / {m.rot_kind} / {m.maps} maps")
    print("=" * 60)
    print()


def _save_config(cfg: RunConfig, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, default=list))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def run_gen(cfg: RunConfig, out: Path = None, verbose: bool = True) -> dict:
    """Render every scene and write the dataset."""
    root = Path(out or cfg.data.root)
    if verbose:
        _banner("Dataset Generation")
        print(f"[1/2] Generating {cfg.data.scenes} scenes into {root}...")
    manifest = generate_dataset(cfg.data, cfg.seed, root, verbose=verbose)
    if verbose:
        print("\n[2/2] Writing manifest...")
        views = sum(s["views"] for s in manifest["scenes"])
        print(f"  ✅ {views} views, data hash {manifest['data_hash']}")
    return manifest


def run_train(cfg: RunConfig, out: Path, resume: Path = None, verbose: bool = True):
    """Train one model and write its checkpoint and loss log under out."""
    if verbose:
        _banner("Relformer Training", cfg)
        print(f"[1/3] Loading dataset {cfg.data.root}...")
    dataset = Dataset(cfg.data.root)
    if verbose:
        print(f"  {len(dataset.scene_ids)} scenes, {dataset.image_size}px images")
    _save_config(cfg, out)

    if verbose:
        print("\n[2/3] Training...")
    result = train_model(cfg, dataset, out, resume_from=resume, verbose=verbose)

    if verbose:
        print("\n[3/3] Saved")
        print(f"  ✅ {result.checkpoint} (step {result.steps}, final loss {result.final_loss:.4f})")
        print(f"  Loss log: {result.loss_log}")
    return result


def _train_pairs_from_meta(meta: dict) -> dict:
    pairs = {}
    for scene, q, r in meta.get("overfit_pairs", []):
        pairs.setdefault(int(scene), []).append((int(q), int(r)))
    return pairs


def run_eval(cfg: RunConfig, checkpoint: Path, split: str = None, scenes: list = None,
             out: Path = None, verbose: bool = True):
    """Median errors of a checkpoint on a dataset split."""
    split = split or cfg.eval.split
    if split not in SPLITS:
        raise ConfigError(f"unknown split '{split}' (expected one of {SPLITS})")
    if verbose:
        _banner("Relformer Evaluation")
        print(f"[1/3] Loading {checkpoint} and dataset {cfg.data.root}...")
    model, _, ckpt = load_trained(checkpoint)
    dataset = Dataset(cfg.data.root)
    check_compatible(ckpt.meta, dataset, where=str(checkpoint))

    pairs = _train_pairs_from_meta(ckpt.meta) if split == "train_pairs" else None
    scenes = list(scenes or cfg.eval.scenes)
    if not scenes and split == "train_pairs":
        scenes = sorted(pairs) or list(ckpt.meta.get("train_scenes", []))

    if verbose:
        print(f"\n[2/3] Evaluating split '{split}' on scenes {scenes or dataset.scene_ids}...")
    report = evaluate_dataset(
        dataset, ModelPredictor(model, cfg.train.rescale), split, scenes, cfg.eval.workers, pairs or None
    )

    out = Path(out) if out else Path(checkpoint).parent
    write_report_json(report, out / f"eval_{split}.json", extra={"checkpoint": str(checkpoint)})
    write_query_errors(report, out / f"eval_{split}_queries.csv")
    if verbose:
        print("\n[3/3] Report")
        print(format_report(report))
        print(f"  ✅ Wrote {out / f'eval_{split}.json'}")
    return report


def run_localize(cfg: RunConfig, checkpoint: Path, query: Path, scene: int, verbose: bool = True):
    """Absolute pose of one query image against a scene's database."""
    model, _, ckpt = load_trained(checkpoint)
    dataset = Dataset(cfg.data.root)
    check_compatible(ckpt.meta, dataset, where=str(checkpoint))
    result = localize(read_tensor(query), model, dataset, scene, cfg.train.rescale)
    output = {
        "scene": result.scene_id,
        "ref_id": result.ref_id,
        "similarity": result.similarity,
        "position": result.pose.x.tolist(),
        "rotation": result.pose.R.tolist(),
    }
    if verbose:
        print(json.dumps(output, indent=2))
    return result


def run_ablate(cfg: RunConfig, out: Path, verbose: bool = True) -> list:
    """
    Aggregator x rotation kind x map resolution x seed grid.

    Leave-one-scene-out by default; in overfit mode each run is scored on
    its own fixed training pairs.
    """
    a = cfg.ablate
    overfit = cfg.train.overfit_pairs > 0
    held_out = cfg.held_out_scene
    if not overfit and cfg.data.scenes < 2:
        raise InvalidInputError("ablate needs at least 2 scenes for a held-out evaluation")
    train_scenes = cfg.train.train_scenes or tuple(s for s in range(cfg.data.scenes) if s != held_out)

    grid = [(agg, rot, maps, seed) for agg in a.aggregators for rot in a.rot_kinds
            for maps in a.maps for seed in a.seeds]
    if verbose:
        _banner("Relformer Ablation")
        what = "fixed training pairs" if overfit else f"held-out scene {held_out}"
        print(f"  {len(grid)} runs, training on scenes {list(train_scenes)}, scored on {what}")
        if not overfit and held_out in train_scenes:
            print(f"  ⚠️  Scene {held_out} is also a training scene; its numbers are seen, not unseen")
        print()

    rows = []
    for i, (agg, rot, maps, seed) in enumerate(grid, 1):
        run_cfg = cfg.with_overrides(seed=seed, rot=rot, agg=agg, maps=maps, scenes=train_scenes)
        run_dir = out / f"{agg}_{rot}_{maps}_s{seed}"
        if verbose:
            print(f"[{i}/{len(grid)}] {agg} / {rot} / {maps} / seed {seed}")
        result = run_train(run_cfg, run_dir, verbose=False)
        if overfit:
            report = run_eval(run_cfg, result.checkpoint, "train_pairs", out=run_dir, verbose=False)
        else:
            report = run_eval(run_cfg, result.checkpoint, "query", [held_out], out=run_dir, verbose=False)
        new_rows = ablation_rows(report, agg, rot, maps, seed, result.final_loss)
        rows.extend(new_rows)
        if verbose:
            for r in new_rows:
                print(f"  scene {r['scene']}: {r['median_pos_m']:.3f} m / {r['median_rot_deg']:.2f} deg "
                      f"(identity {r['identity_pos_m']:.3f} m / {r['identity_rot_deg']:.2f} deg)")

    write_ablation_csv(rows, out / "ablation.csv")
    if verbose:
        print()
        print(format_ablation(rows))
        print(f"  ✅ Wrote {out / 'ablation.csv'}")
    return rows


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Relformer relative pose pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="JSON run config")
        p.add_argument("--seed", type=int, default=None, help="Override the config seed")
        p.add_argument("--data", type=Path, default=None, help="Dataset directory (default: data.root)")
        p.add_argument("--rot", choices=sorted(ROTATION_DIMS), default=None, help="Rotation target kind")
        p.add_argument("--agg", choices=AGGREGATORS, default=None, help="Aggregator variant")
        p.add_argument("--maps", choices=MAP_CHOICES, default=None, help="Feature map resolution")

    p = sub.add_parser("gen", help="Generate a synthetic dataset")
    common(p)
    p.add_argument("--out", type=Path, default=None, help="Dataset directory (default: data.root)")

    p = sub.add_parser("train", help="Train a model")
    common(p)
    p.add_argument("--out", type=Path, default=Path("runs/train"), help="Run directory")
    p.add_argument("--scenes", type=int, nargs="+", default=None, help="Training scenes (default: all)")
    p.add_argument("--resume", type=Path, default=None, help="Checkpoint to resume from")

    p = sub.add_parser("eval", help="Evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", choices=SPLITS, default=None)
    p.add_argument("--scenes", type=int, nargs="+", default=None, help="Evaluation scenes (default: all)")
    p.add_argument("--out", type=Path, default=None, help="Report directory (default: next to the checkpoint)")

    p = sub.add_parser("localize", help="Localize one query image")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--query", type=Path, required=True, help="Raw tensor image file (.rft)")
    p.add_argument("--scene", type=int, default=0, help="Scene whose database is searched")

    p = sub.add_parser("ablate", help="Run the ablation grid")
    common(p)
    p.add_argument("--out", type=Path, default=Path("runs/ablate"), help="Output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config)
        data_root = args.out if args.command == "gen" and args.out else args.data
        cfg = cfg.with_overrides(
            seed=args.seed, data_root=data_root, rot=args.rot, agg=args.agg, maps=args.maps,
            scenes=args.scenes if args.command == "train" else None,
        )

        if args.command == "gen":
            run_gen(cfg)
        elif args.command == "train":
            run_train(cfg, args.out, args.resume)
        elif args.command == "eval":
            if args.scenes:
                cfg = replace(cfg, eval=replace(cfg.eval, scenes=tuple(args.scenes)))
            run_eval(cfg, args.checkpoint, args.split, out=args.out)
        elif args.command == "localize":
            run_localize(cfg, args.checkpoint, args.query, args.scene)
        elif args.command == "ablate":
            run_ablate(cfg, args.out)
    except (ConfigError, InvalidInputError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return 2
    except (RelformerError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
