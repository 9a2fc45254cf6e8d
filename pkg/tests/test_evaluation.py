import json

import numpy as np
import pytest

from src.analysis import (
    EvalReport,
    IdentityPredictor,
    ModelPredictor,
    OraclePredictor,
    QueryError,
    ablation_rows,
    evaluate_dataset,
    evaluate_queries,
    format_ablation,
    format_report,
    localize,
    median,
    query_cases,
    read_query_errors,
    write_ablation_csv,
    write_query_errors,
    write_report_json,
)
from src.data import Dataset
from src.errors import InvalidInputError
from src.geometry import angular_error, position_error
from src.models import RelformerModel


@pytest.fixture(scope="module")
def dataset(small_dataset):
    return Dataset(small_dataset)


@pytest.fixture(scope="module")
def model(tiny_model_config):
    return RelformerModel(tiny_model_config, seed=0).eval()


# ---------------------------------------------------------------------------
# Median
# ---------------------------------------------------------------------------

def test_median_examples():
    assert median([3.0, 1.0, 2.0]) == 2.0
    assert median([4.0, 1.0, 3.0, 2.0]) == 2.5
    assert median([7.0]) == 7.0
    with pytest.raises(InvalidInputError):
        median([])


def test_median_matches_sort_oracle():
    rng = np.random.default_rng(0)
    for n in range(1, 40):
        values = rng.normal(size=n)
        assert median(values) == pytest.approx(float(np.median(values)), abs=1e-12)


# ---------------------------------------------------------------------------
# Cases and predictors
# ---------------------------------------------------------------------------

def test_query_cases_use_database_references(dataset):
    cases = query_cases(dataset, 0, "query")
    database = set(dataset.view_ids(0, "database"))
    assert [c.query_id for c in cases] == [4, 9, 14, 19]
    assert all(c.ref_id in database for c in cases)


def test_database_cases_never_reference_themselves(dataset):
    cases = query_cases(dataset, 1, "database")
    assert len(cases) == 16
    assert all(c.ref_id != c.query_id for c in cases)


def test_train_pair_cases(dataset):
    cases = query_cases(dataset, 0, "train_pairs")
    stored = set(dataset.pairs(0))
    assert len(cases) == 16
    assert all((c.query_id, c.ref_id) in stored for c in cases)
    explicit = query_cases(dataset, 0, "train_pairs", pairs=[(3, 5)])
    assert [(c.query_id, c.ref_id) for c in explicit] == [(3, 5)]


def test_oracle_predictor_has_zero_error(dataset):
    errors = evaluate_queries(query_cases(dataset, 0, "query"), OraclePredictor())
    assert all(e.pos_err_m < 1e-9 for e in errors)
    assert all(e.rot_err_deg < 1e-12 for e in errors)


def test_identity_errors_are_the_pose_gaps(dataset):
    cases = query_cases(dataset, 0, "query")
    for case, err in zip(cases, evaluate_queries(cases, IdentityPredictor())):
        assert err.pos_err_m == pytest.approx(position_error(case.ref_pose, case.query_pose), abs=1e-12)
        assert err.rot_err_deg == pytest.approx(angular_error(case.ref_pose.R, case.query_pose.R), abs=1e-9)


def test_model_predictor_returns_rotations(dataset, model):
    cases = query_cases(dataset, 0, "query")
    for rel in ModelPredictor(model).predict(cases):
        assert rel.dx.shape == (3,)
        assert np.allclose(rel.dR @ rel.dR.T, np.eye(3), atol=1e-9)
        assert np.linalg.det(rel.dR) == pytest.approx(1.0, abs=1e-9)


def test_parallel_evaluation_keeps_order(dataset, model):
    cases = query_cases(dataset, 0, "database") + query_cases(dataset, 1, "database")
    serial = evaluate_queries(cases, ModelPredictor(model), workers=1)
    parallel = evaluate_queries(cases, ModelPredictor(model), workers=3)
    assert [(e.scene_id, e.query_id) for e in serial] == [(c.scene_id, c.query_id) for c in cases]
    assert serial == parallel


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def report(dataset, model):
    return evaluate_dataset(dataset, ModelPredictor(model), split="query", workers=2)


def test_report_per_scene_medians(report):
    assert report.predictor == "model" and report.split == "query"
    assert sorted(report.scenes) == [0, 1]
    for sid, summary in report.scenes.items():
        mine = [e for e in report.errors if e.scene_id == sid]
        assert summary["queries"] == 4
        assert summary["median_pos_m"] == median(e.pos_err_m for e in mine)
        assert summary["median_rot_deg"] == median(e.rot_err_deg for e in mine)
    expected = np.mean([s["median_pos_m"] for s in report.scenes.values()])
    assert report.average("median_pos_m") == pytest.approx(expected)


def test_report_is_reproducible(report, dataset, model):
    again = evaluate_dataset(dataset, ModelPredictor(model), split="query", workers=1)
    assert again.scenes == report.scenes


def test_report_scene_subset(dataset):
    report = evaluate_dataset(dataset, OraclePredictor(), split="query", scenes=[1])
    assert list(report.scenes) == [1]
    assert report.scenes[1]["median_pos_m"] < 1e-9


def test_empty_report_average():
    with pytest.raises(InvalidInputError):
        EvalReport("query", "model").average("median_pos_m")


def test_query_error_csv(report, tmp_path):
    path = tmp_path / "errors.csv"
    write_query_errors(report, path)
    rows = read_query_errors(path)
    assert len(rows) == len(report.errors) == 8
    for row, err, base in zip(rows, report.errors, report.identity_errors):
        assert QueryError(row["scene_id"], row["query_id"], row["ref_id"], row["pos_err_m"], row["rot_err_deg"]) == err
        assert row["identity_pos_m"] == base.pos_err_m


def test_report_json(report, tmp_path):
    path = tmp_path / "eval.json"
    write_report_json(report, path, extra={"checkpoint": "x.rfck"})
    data = json.loads(path.read_text())
    assert data["checkpoint"] == "x.rfck"
    assert set(data["scenes"]) == {"0", "1"}
    assert data["average"]["median_rot_deg"] == pytest.approx(report.average("median_rot_deg"))


def test_format_report(report):
    text = format_report(report, title="QUERY ERRORS")
    assert "QUERY ERRORS (model, split: query)" in text
    assert "avg" in text
    assert len(text.splitlines()) == 10


def test_ablation_rows_and_csv(report, tmp_path):
    rows = ablation_rows(report, "transformer", "6d", "coarse", 0, 1.25)
    assert [r["scene"] for r in rows] == [0, 1]
    assert all(r["final_loss"] == 1.25 for r in rows)
    path = tmp_path / "ablation.csv"
    write_ablation_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == (
        "agg,rot,maps,seed,scene,split,median_pos_m,median_rot_deg,identity_pos_m,identity_rot_deg,final_loss"
    )
    assert len(lines) == 3
    assert "transformer" in format_ablation(rows)


# ---------------------------------------------------------------------------
# Localization
# ---------------------------------------------------------------------------

def test_localize_returns_a_valid_pose(dataset, model):
    image = dataset.image(0, 9)
    loc = localize(image, model, dataset, 0)
    assert loc.scene_id == 0
    assert loc.ref_id in dataset.view_ids(0, "database")
    assert np.allclose(loc.pose.R.T @ loc.pose.R, np.eye(3), atol=1e-9)
    assert -1.0 - 1e-6 <= loc.similarity <= 1.0 + 1e-6

    again = localize(image, model, dataset, 0)
    assert again.ref_id == loc.ref_id
    assert np.array_equal(again.pose.x, loc.pose.x)


def test_localize_agrees_with_query_retrieval(dataset, model):
    case = next(c for c in query_cases(dataset, 1, "query") if c.query_id == 14)
    assert localize(dataset.image(1, 14), model, dataset, 1).ref_id == case.ref_id


def test_localize_rejects_wrong_image_size(dataset, model):
    with pytest.raises(InvalidInputError):
        localize(np.zeros((16, 16, 3)), model, dataset, 0)
    with pytest.raises(InvalidInputError):
        localize(dataset.image(0, 4), model, dataset, 5)
