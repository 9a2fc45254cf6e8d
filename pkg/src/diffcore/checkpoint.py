"""
Checkpoint Container
Binary file holding named float32 parameters, optional Adam moments, and a
JSON metadata block (model config, dataset hash, step counters).

Layout (all integers little-endian):

    magic      4 bytes  b"RFCK"
    version    uint32
    header_len uint32
    header     header_len bytes of UTF-8 JSON
    payload    concatenated '<f4' arrays, in header["tensors"] order

Each header["tensors"] entry is {"name", "section", "shape"} where section
is "param", "adam_m" or "adam_v".
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.diffcore.optim import AdamState
from src.errors import FormatError

CHECKPOINT_MAGIC = b"RFCK"
CHECKPOINT_VERSION = 1
_PREFIX = struct.Struct("<4sII")


@dataclass
class Checkpoint:
    params: dict
    meta: dict = field(default_factory=dict)
    adam: AdamState = None


def save_checkpoint(path, params: dict, meta: dict = None, adam: AdamState = None):
    """
    Write params (name -> array) plus metadata and optional optimizer
    state. Adam moments are stored in params order.
    """
    path = Path(path)
    names = list(params)
    entries, blobs = [], []

    def add(name, section, array):
        arr = np.ascontiguousarray(array, dtype="<f4")
        entries.append({"name": name, "section": section, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())

    for name in names:
        add(name, "param", params[name])

    adam_header = None
    if adam is not None:
        adam_header = adam.hyperparameters()
        if adam.m:
            if len(adam.m) != len(names):
                raise FormatError(f"save_checkpoint: {len(adam.m)} moment buffers for {len(names)} params")
            for name, m, v in zip(names, adam.m, adam.v):
                add(name, "adam_m", m)
                add(name, "adam_v", v)

    header = json.dumps(
        {"meta": meta or {}, "adam": adam_header, "tensors": entries},
        sort_keys=True,
    ).encode("utf-8")

    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_PREFIX.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _PREFIX.size:
        raise FormatError(f"{path}: truncated checkpoint")
    magic, version, header_len = _PREFIX.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")

    start = _PREFIX.size
    try:
        header = json.loads(raw[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: corrupt checkpoint header ({e})") from None

    offset = start + header_len
    sections = {"param": {}, "adam_m": {}, "adam_v": {}}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(raw):
            raise FormatError(f"{path}: payload ends inside tensor '{entry['name']}'")
        arr = np.frombuffer(raw, dtype="<f4", count=nbytes // 4, offset=offset)
        sections[entry["section"]][entry["name"]] = arr.reshape(shape).astype(np.float32)
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after payload")

    adam = None
    if header.get("adam") is not None:
        adam = AdamState(**header["adam"])
        names = list(sections["param"])
        if sections["adam_m"]:
            adam.m = [sections["adam_m"][n] for n in names]
            adam.v = [sections["adam_v"][n] for n in names]

    return Checkpoint(params=sections["param"], meta=header.get("meta", {}), adam=adam)
