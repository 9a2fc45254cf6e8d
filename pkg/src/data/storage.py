"""
Dataset Storage
===============
On-disk layout of a generated dataset:

    <root>/manifest.json
    <root>/scene_000/poses.csv          view_id,tx,ty,tz,r11,...,r33
    <root>/scene_000/pairs.csv          query_id,ref_id (training neighbor pool)
    <root>/scene_000/descriptors.rft    (V, D) float32 retrieval descriptors
    <root>/scene_000/images/view_00000.rft

Raw tensor files (.rft), little-endian:

    magic  4 bytes  b"RFTN"
    dtype  uint8    1 = float32, 2 = float64, 3 = uint8
    ndim   uint8
    shape  ndim x uint32
    data   C-order payload
"""

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from src.errors import FormatError, InvalidInputError
from src.geometry import Pose

TENSOR_MAGIC = b"RFTN"
DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("u1")}
_CODE_OF = {np.dtype("float32"): 1, np.dtype("float64"): 2, np.dtype("uint8"): 3}

POSE_HEADER = ["view_id", "tx", "ty", "tz"] + [f"r{i}{j}" for i in range(1, 4) for j in range(1, 4)]
PAIR_HEADER = ["query_id", "ref_id"]
MANIFEST_NAME = "manifest.json"


def scene_dir(root, scene_id: int) -> Path:
    return Path(root) / f"scene_{scene_id:03d}"


def image_path(root, scene_id: int, view_id: int) -> Path:
    return scene_dir(root, scene_id) / "images" / f"view_{view_id:05d}.rft"


# ---------------------------------------------------------------------------
# Raw tensors
# ---------------------------------------------------------------------------

def write_tensor(path, array: np.ndarray):
    array = np.asarray(array)
    code = _CODE_OF.get(array.dtype)
    if code is None:
        raise InvalidInputError(f"write_tensor: unsupported dtype {array.dtype}")
    if array.ndim > 255:
        raise InvalidInputError("write_tensor: too many dimensions")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = TENSOR_MAGIC + struct.pack("<BB", code, array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes())


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != TENSOR_MAGIC:
        raise FormatError(f"{path}: not a raw tensor file (magic {raw[:4]!r})")
    if len(raw) < 6:
        raise FormatError(f"{path}: truncated header")
    code, ndim = struct.unpack_from("<BB", raw, 4)
    if code not in DTYPE_CODES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    offset = 6 + 4 * ndim
    if len(raw) < offset:
        raise FormatError(f"{path}: truncated shape")
    shape = struct.unpack_from(f"<{ndim}I", raw, 6)
    dtype = DTYPE_CODES[code]
    count = int(np.prod(shape, dtype=np.int64))
    if len(raw) - offset != count * dtype.itemsize:
        raise FormatError(f"{path}: payload is {len(raw) - offset} bytes, expected {count * dtype.itemsize}")
    return np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape).astype(dtype.newbyteorder("="))


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

def write_poses_csv(path, view_ids: list, poses: list):
    """64-bit decimal text (%.17g) so poses round-trip exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(POSE_HEADER)
        for vid, pose in zip(view_ids, poses):
            writer.writerow([int(vid)] + ["%.17g" % v for v in pose.to_row()])


def read_poses_csv(path) -> dict:
    """view_id -> Pose, in file order."""
    path = Path(path)
    poses = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != POSE_HEADER:
            raise FormatError(f"{path}: unexpected header {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(POSE_HEADER):
                raise FormatError(f"{path}:{line_no}: expected {len(POSE_HEADER)} columns, got {len(row)}")
            try:
                poses[int(row[0])] = Pose.from_row([float(v) for v in row[1:]])
            except ValueError as e:
                raise FormatError(f"{path}:{line_no}: {e}") from None
    return poses


def write_pairs_csv(path, pairs: list):
    """pairs: (query_id, ref_id) tuples."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(PAIR_HEADER)
        writer.writerows((int(q), int(r)) for q, r in pairs)


def read_pairs_csv(path) -> list:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != PAIR_HEADER:
            raise FormatError(f"{path}: unexpected header {header}")
        return [(int(q), int(r)) for q, r in reader]


# ---------------------------------------------------------------------------
# Manifest and loader
# ---------------------------------------------------------------------------

def data_hash(image_size: int, intrinsics) -> str:
    """Fingerprint of everything a trained model depends on in the data."""
    payload = json.dumps({"image_size": int(image_size), "intrinsics": [float(v) for v in intrinsics]})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def write_manifest(root, manifest: dict):
    path = Path(root) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))


def is_query_view(view_id: int, query_stride: int) -> bool:
    """Every query_stride-th view (ids stride-1, 2*stride-1, ...) is held out as a query."""
    return (view_id + 1) % query_stride == 0


class Dataset:
    """Read-side access to a generated dataset. Images are cached after first load."""

    def __init__(self, root):
        self.root = Path(root)
        path = self.root / MANIFEST_NAME
        if not path.exists():
            raise FormatError(f"{self.root}: no {MANIFEST_NAME}; run 'gen' first")
        try:
            self.manifest = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: invalid JSON ({e})") from None
        self._poses = {}
        self._images = {}
        self._descriptors = {}

    @property
    def scene_ids(self) -> list:
        return [int(s) for s in self.manifest["scene_ids"]]

    @property
    def data_hash(self) -> str:
        return self.manifest["data_hash"]

    @property
    def image_size(self) -> int:
        return int(self.manifest["image_size"])

    @property
    def query_stride(self) -> int:
        return int(self.manifest["query_stride"])

    def _check_scene(self, scene_id: int):
        if scene_id not in self.scene_ids:
            raise InvalidInputError(f"dataset {self.root}: no scene {scene_id} (have {self.scene_ids})")

    def poses(self, scene_id: int) -> dict:
        self._check_scene(scene_id)
        if scene_id not in self._poses:
            self._poses[scene_id] = read_poses_csv(scene_dir(self.root, scene_id) / "poses.csv")
        return self._poses[scene_id]

    def view_ids(self, scene_id: int, split: str = "all") -> list:
        ids = sorted(self.poses(scene_id))
        if split == "all":
            return ids
        if split == "query":
            return [v for v in ids if is_query_view(v, self.query_stride)]
        if split == "database":
            return [v for v in ids if not is_query_view(v, self.query_stride)]
        raise InvalidInputError(f"unknown split '{split}'")

    def image(self, scene_id: int, view_id: int) -> np.ndarray:
        key = (scene_id, view_id)
        if key not in self._images:
            self._images[key] = read_tensor(image_path(self.root, scene_id, view_id))
        return self._images[key]

    def descriptors(self, scene_id: int) -> np.ndarray:
        """(V, D) rows in view_id order."""
        self._check_scene(scene_id)
        if scene_id not in self._descriptors:
            self._descriptors[scene_id] = read_tensor(scene_dir(self.root, scene_id) / "descriptors.rft")
        return self._descriptors[scene_id]

    def pairs(self, scene_id: int) -> list:
        self._check_scene(scene_id)
        return read_pairs_csv(scene_dir(self.root, scene_id) / "pairs.csv")
