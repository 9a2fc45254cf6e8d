"""
Pose Evaluation
===============
Median position/orientation errors over query views.

For every query the reference is fetched by cosine nearest neighbor over
the scene's database descriptors; a predictor supplies the relative pose
and the absolute pose is recovered as

    x_query = x_ref + dx,   R_query = R_ref @ dR

Predictors:
- ModelPredictor: a trained RelformerModel (eval mode, center crop)
- IdentityPredictor: dx = 0, dR = I (the reference pose is the answer)
- OraclePredictor: the ground-truth relative pose (errors must be 0)

Every report carries the identity-predictor medians next to the model's.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from src.data.retrieval import DescriptorIndex, descriptor_backbone, global_descriptor, nearest_neighbor
from src.data.scenes import prepare_input
from src.data.storage import Dataset
from src.diffcore import Tensor
from src.errors import InvalidInputError
from src.geometry import (
    Pose,
    RelativePose,
    angular_error,
    position_error,
    recover_pose,
    relative_pose,
    target_to_matrix,
)
from src.models.relformer import RelformerModel

EVAL_BATCH = 16


def median(values) -> float:
    """Middle of the sorted values; mean of the two middles for even counts."""
    values = sorted(float(v) for v in values)
    n = len(values)
    if n == 0:
        raise InvalidInputError("median of an empty list")
    mid = n // 2
    if n % 2:
        return values[mid]
    return (values[mid - 1] + values[mid]) / 2.0


class QueryCase(NamedTuple):
    scene_id: int
    query_id: int
    ref_id: int
    query_pose: Pose
    ref_pose: Pose
    query_image: np.ndarray
    ref_image: np.ndarray


class QueryError(NamedTuple):
    scene_id: int
    query_id: int
    ref_id: int
    pos_err_m: float
    rot_err_deg: float


# ---------------------------------------------------------------------------
# Predictors
# ---------------------------------------------------------------------------

class OraclePredictor:
    name = "oracle"

    def predict(self, cases: list) -> list:
        return [relative_pose(c.ref_pose, c.query_pose) for c in cases]


class IdentityPredictor:
    name = "identity"

    def predict(self, cases: list) -> list:
        return [RelativePose() for _ in cases]


class ModelPredictor:
    name = "model"

    def __init__(self, model: RelformerModel, rescale: float = 1.14):
        self.model = model.eval()
        self.kind = model.cfg.rot_kind
        self.size = model.cfg.backbone.input_size
        self.rescale = rescale

    def predict(self, cases: list) -> list:
        refs = np.stack([prepare_input(c.ref_image, self.size, self.rescale) for c in cases])
        queries = np.stack([prepare_input(c.query_image, self.size, self.rescale) for c in cases])
        dx, rot = self.model(Tensor(refs), Tensor(queries))
        dx = dx.numpy().astype(np.float64)
        rot = rot.numpy().astype(np.float64)
        return [RelativePose(dx[i], target_to_matrix(rot[i], self.kind)) for i in range(len(cases))]


# ---------------------------------------------------------------------------
# Cases
# ---------------------------------------------------------------------------

def database_index(dataset: Dataset, scene_id: int) -> DescriptorIndex:
    db_ids = dataset.view_ids(scene_id, "database")
    if not db_ids:
        raise InvalidInputError(f"scene {scene_id} has an empty database")
    return DescriptorIndex(db_ids, dataset.descriptors(scene_id)[db_ids])


def _case(dataset: Dataset, scene_id: int, query_id: int, ref_id: int) -> QueryCase:
    poses = dataset.poses(scene_id)
    return QueryCase(
        scene_id, query_id, ref_id, poses[query_id], poses[ref_id],
        dataset.image(scene_id, query_id), dataset.image(scene_id, ref_id),
    )


def query_cases(dataset: Dataset, scene_id: int, split: str = "query", pairs: list = None) -> list:
    """
    Cases for one scene.

    split "query": query views, reference = nearest database view.
    split "database": database views, reference = nearest other database view.
    split "train_pairs": the given (query_id, ref_id) pairs, or the first
    stored neighbor of every training query.
    """
    if split == "train_pairs":
        if pairs is None:
            first = {}
            for q, r in dataset.pairs(scene_id):
                first.setdefault(q, r)
            pairs = sorted(first.items())
        return [_case(dataset, scene_id, q, r) for q, r in pairs]

    index = database_index(dataset, scene_id)
    descriptors = dataset.descriptors(scene_id)
    cases = []
    for q in dataset.view_ids(scene_id, split):
        exclude = q if split == "database" else None
        cases.append(_case(dataset, scene_id, q, nearest_neighbor(descriptors[q], index, exclude=exclude)))
    return cases


def score_cases(cases: list, rel_poses: list) -> list:
    errors = []
    for case, rel in zip(cases, rel_poses):
        estimate = recover_pose(case.ref_pose, rel)
        errors.append(QueryError(
            case.scene_id, case.query_id, case.ref_id,
            position_error(estimate, case.query_pose),
            angular_error(estimate.R, case.query_pose.R),
        ))
    return errors


def evaluate_queries(cases: list, predictor, workers: int = 1) -> list:
    """QueryErrors in case order; batches are predicted in parallel threads."""
    batches = [cases[i:i + EVAL_BATCH] for i in range(0, len(cases), EVAL_BATCH)]

    def run(batch):
        return score_cases(batch, predictor.predict(batch))

    if workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(run, batches))
    else:
        results = [run(b) for b in batches]
    return [e for batch in results for e in batch]


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    split: str
    predictor: str
    scenes: dict = field(default_factory=dict)       # scene_id -> summary dict
    errors: list = field(default_factory=list)       # QueryError, model predictor
    identity_errors: list = field(default_factory=list)

    @classmethod
    def from_errors(cls, split: str, predictor: str, errors: list, identity_errors: list) -> "EvalReport":
        report = cls(split, predictor, {}, list(errors), list(identity_errors))
        for sid in sorted({e.scene_id for e in errors}):
            mine = [e for e in errors if e.scene_id == sid]
            base = [e for e in identity_errors if e.scene_id == sid]
            report.scenes[sid] = {
                "queries": len(mine),
                "median_pos_m": median(e.pos_err_m for e in mine),
                "median_rot_deg": median(e.rot_err_deg for e in mine),
                "identity_pos_m": median(e.pos_err_m for e in base) if base else float("nan"),
                "identity_rot_deg": median(e.rot_err_deg for e in base) if base else float("nan"),
            }
        return report

    def average(self, key: str) -> float:
        """Average over scenes of a per-scene median."""
        if not self.scenes:
            raise InvalidInputError("empty evaluation report")
        return float(np.mean([s[key] for s in self.scenes.values()]))

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "predictor": self.predictor,
            "scenes": {str(k): v for k, v in self.scenes.items()},
            "average": {
                key: self.average(key)
                for key in ("median_pos_m", "median_rot_deg", "identity_pos_m", "identity_rot_deg")
            },
        }


def evaluate_dataset(dataset: Dataset, predictor, split: str = "query", scenes: list = None,
                     workers: int = 1, pairs: dict = None) -> EvalReport:
    """
    Evaluate predictor on every listed scene (all by default).

    pairs maps scene_id -> (query_id, ref_id) list for the train_pairs split.
    """
    scenes = list(scenes) if scenes else dataset.scene_ids
    cases = []
    for sid in scenes:
        cases.extend(query_cases(dataset, sid, split, (pairs or {}).get(sid)))
    if not cases:
        raise InvalidInputError(f"no '{split}' cases in scenes {scenes}")
    errors = evaluate_queries(cases, predictor, workers)
    identity = evaluate_queries(cases, IdentityPredictor(), 1)
    return EvalReport.from_errors(split, predictor.name, errors, identity)


# ---------------------------------------------------------------------------
# Single-query localization
# ---------------------------------------------------------------------------

@dataclass
class Localization:
    pose: Pose
    scene_id: int
    ref_id: int
    similarity: float


def localize(image: np.ndarray, model: RelformerModel, dataset: Dataset, scene_id: int,
             rescale: float = 1.14) -> Localization:
    """Retrieve the nearest database view of scene_id, regress, and recover the absolute pose."""
    image = np.asarray(image, dtype=np.float32)
    if image.shape != (dataset.image_size, dataset.image_size, 3):
        raise InvalidInputError(
            f"localize: query image is {image.shape}, dataset images are {dataset.image_size}x{dataset.image_size}x3"
        )
    index = database_index(dataset, scene_id)
    backbone = descriptor_backbone(dataset.image_size, int(dataset.manifest["descriptor_seed"]))
    desc = global_descriptor(image, backbone)
    ref_id = nearest_neighbor(desc, index)
    ref_pose = dataset.poses(scene_id)[ref_id]
    case = QueryCase(scene_id, -1, ref_id, ref_pose, ref_pose, image, dataset.image(scene_id, ref_id))
    (rel,) = ModelPredictor(model, rescale).predict([case])
    similarity = float(np.dot(index.vector(ref_id), desc))
    return Localization(recover_pose(ref_pose, rel), scene_id, ref_id, similarity)
