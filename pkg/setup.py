#!/usr/bin/env python3
"""Quick setup helper - installs dependencies and validates the bundled configs."""

import subprocess
import sys
from pathlib import Path


def main():
    print("Relformer Relative Pose Pipeline - Setup")
    print("=" * 40)

    root = Path(__file__).parent
    print("\n1. Installing dependencies...")
    subprocess.check_call([sys.executable, "-m", "pip", "install", "-r", str(root / "requirements.txt"), "-q"])
    print("   Done.")

    print("\n2. Validating configs...")
    sys.path.insert(0, str(root))
    from src.errors import ConfigError
    from src.utils.config import load_run_config

    ok = True
    for path in sorted((root / "configs").glob("*.json")):
        try:
            cfg = load_run_config(path)
            m = cfg.model
            print(f"   {path.name}: {cfg.data.scenes} scenes, {m.backbone.input_size}px, "
                  f"{m.aggregator}/{m.rot_kind}, {m.encoder.layers} layers")
        except ConfigError as e:
            ok = False
            print(f"   Warning: {path.name} is invalid: {e}")

    print("\n" + "=" * 40)
    print("Setup complete!" if ok else "Setup finished with config warnings.")
    print("Run with:")
    print("  python main.py gen --config configs/desk.json")
    print("  python main.py train --config configs/desk.json --out runs/desk --scenes 0 1 2")
    print("  python main.py eval --config configs/desk.json --checkpoint runs/desk/checkpoint.rfck --scenes 3")
    print("  python -m pytest tests/            # add --runslow for the training experiments")


if __name__ == "__main__":
    main()
