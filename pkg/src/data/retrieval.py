"""
Image Retrieval
===============
Global descriptors, the cosine-similarity index, and pair construction.

Descriptors come from a randomly initialised backbone seeded by the
dataset (recorded in the manifest), so retrieval is fixed and independent
of whatever model is being trained.
"""

from typing import NamedTuple

import numpy as np
from sklearn.metrics.pairwise import cosine_similarity

from src.diffcore import Tensor
from src.errors import InvalidInputError, ShapeError
from src.geometry import Pose, RelativePose, relative_pose
from src.models.backbone import Backbone, pooled_descriptor
from src.models.config import BackboneConfig

UNIT_TOL = 1e-6
DESCRIPTOR_BATCH = 32


def descriptor_backbone(image_size: int, seed: int) -> Backbone:
    """The dataset's fixed retrieval backbone."""
    return Backbone(BackboneConfig(input_size=image_size), np.random.default_rng(seed))


def global_descriptor(images: np.ndarray, backbone: Backbone) -> np.ndarray:
    """
    L2-normalised pooled last-stage features.

    images: (H, W, 3) or (B, H, W, 3). Returns (D,) or (B, D) float32.
    """
    images = np.asarray(images, dtype=np.float32)
    single = images.ndim == 3
    batch = images[None] if single else images
    out = []
    for start in range(0, len(batch), DESCRIPTOR_BATCH):
        pooled = pooled_descriptor(Tensor(batch[start:start + DESCRIPTOR_BATCH]), backbone).numpy()
        out.append(pooled.astype(np.float64))
    desc = np.concatenate(out, axis=0)
    norms = np.linalg.norm(desc, axis=1, keepdims=True)
    # relu features can pool to exactly zero; fall back to a fixed unit vector
    zero = norms[:, 0] < 1e-12
    desc[zero] = 0.0
    desc[zero, 0] = 1.0
    norms[zero] = 1.0
    desc = (desc / norms).astype(np.float32)
    return desc[0] if single else desc


class DescriptorIndex:
    """Unit descriptors keyed by view id, kept in ascending id order."""

    def __init__(self, view_ids, vectors: np.ndarray):
        view_ids = np.asarray(view_ids, dtype=np.int64)
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or len(view_ids) != len(vectors):
            raise ShapeError(f"DescriptorIndex: {len(view_ids)} ids for vectors of shape {vectors.shape}")
        if len(np.unique(view_ids)) != len(view_ids):
            raise InvalidInputError("DescriptorIndex: duplicate view ids")
        if len(vectors):
            norms = np.linalg.norm(vectors, axis=1)
            worst = np.max(np.abs(norms - 1.0))
            if worst > UNIT_TOL:
                raise InvalidInputError(f"DescriptorIndex: descriptors not unit norm (max deviation {worst:.2e})")
        order = np.argsort(view_ids, kind="stable")
        self.view_ids = view_ids[order]
        self.vectors = vectors[order]
        self._row = {int(v): i for i, v in enumerate(self.view_ids)}

    def __len__(self) -> int:
        return len(self.view_ids)

    def __contains__(self, view_id) -> bool:
        return int(view_id) in self._row

    def vector(self, view_id: int) -> np.ndarray:
        return self.vectors[self._row[int(view_id)]]

    def similarities(self, query: np.ndarray) -> np.ndarray:
        query = np.asarray(query, dtype=np.float64).reshape(1, -1)
        if query.shape[1] != self.vectors.shape[1]:
            raise ShapeError(f"DescriptorIndex: query dim {query.shape[1]} != index dim {self.vectors.shape[1]}")
        return cosine_similarity(query, self.vectors)[0]

    def top_k(self, query: np.ndarray, k: int, exclude: int = None) -> list:
        """Ids of the k most similar views, ties broken by lower id."""
        if len(self) == 0:
            raise InvalidInputError("top_k: empty index")
        sims = self.similarities(query)
        order = np.argsort(-sims, kind="stable")
        ids = [int(self.view_ids[i]) for i in order if exclude is None or int(self.view_ids[i]) != exclude]
        return ids[:k]


def nearest_neighbor(query: np.ndarray, index: DescriptorIndex, exclude: int = None) -> int:
    """View id maximising cosine similarity; the lowest id wins a tie."""
    if len(index) == 0 or (exclude is not None and len(index) == 1 and exclude in index):
        raise InvalidInputError("nearest_neighbor: empty index")
    return index.top_k(query, 1, exclude=exclude)[0]


class PairRecord(NamedTuple):
    query_id: int
    ref_id: int
    rel: RelativePose      # relative_pose(ref_pose, query pose)
    ref_pose: Pose


def build_pairs(view_ids, index: DescriptorIndex, poses: dict, k: int) -> list:
    """
    Candidate pool per query: its k nearest indexed views other than itself.
    Returns PairRecords grouped by query, most similar reference first.
    """
    if k < 1:
        raise InvalidInputError(f"build_pairs: k must be >= 1, got {k}")
    if len(index) < k + 1:
        raise InvalidInputError(f"build_pairs: need at least {k + 1} indexed views for k={k}, have {len(index)}")
    pairs = []
    for qid in view_ids:
        qid = int(qid)
        for rid in index.top_k(index.vector(qid), k, exclude=qid):
            pairs.append(PairRecord(qid, rid, relative_pose(poses[rid], poses[qid]), poses[rid]))
    return pairs


def pair_records(id_pairs, poses: dict) -> list:
    """PairRecords for stored (query_id, ref_id) rows."""
    return [PairRecord(int(q), int(r), relative_pose(poses[r], poses[q]), poses[r]) for q, r in id_pairs]
