import numpy as np
import pytest

from src.diffcore import Tensor, check_gradients
from src.errors import ShapeError
from src.geometry import Pose, rot_x, rot_z, sixd_to_matrix, quat_to_matrix
from src.models import LossParams, make_target, pose_loss, stack_targets
from src.models.objective import PoseTarget


def _pred(dx, rot):
    return (
        Tensor(np.atleast_2d(dx), requires_grad=True, dtype=np.float64),
        Tensor(np.atleast_2d(rot), requires_grad=True, dtype=np.float64),
    )


def _zero_target(kind="6d", batch=1):
    k = {"quat": 4, "6d": 6, "9d": 9}[kind]
    return PoseTarget(np.zeros((batch, 3)), np.zeros((batch, k)), kind)


def test_loss_with_zero_weights():
    pred = _pred([1.0, 0.0, 0.0], [2.0, 0, 0, 0, 0, 0])
    loss = pose_loss(pred, _zero_target(), LossParams(0.0, 0.0))
    assert float(loss.data) == pytest.approx(3.0, abs=1e-12)


def test_loss_with_learned_weights():
    pred = _pred([1.0, 0.0, 0.0], [2.0, 0, 0, 0, 0, 0])
    loss = pose_loss(pred, _zero_target(), LossParams(np.log(2.0), 0.0))
    assert float(loss.data) == pytest.approx(3.1931, abs=1e-4)


def test_loss_matches_closed_form():
    rng = np.random.default_rng(0)
    dx, rot = rng.normal(size=(4, 3)), rng.normal(size=(4, 6))
    gt = PoseTarget(rng.normal(size=(4, 3)), rng.normal(size=(4, 6)), "6d")
    params = LossParams(0.3, -1.2)
    s_dx, s_rot = params.values()
    l_dx = np.abs(dx - gt.dx_gt).sum(axis=1).mean()
    l_rot = np.abs(rot - gt.rot_gt).sum(axis=1).mean()
    expected = l_dx * np.exp(-s_dx) + s_dx + l_rot * np.exp(-s_rot) + s_rot

    loss, terms = pose_loss(_pred(dx, rot), gt, params, return_terms=True)
    assert float(loss.data) == pytest.approx(expected, abs=1e-6)
    assert terms["l_dx"] == pytest.approx(l_dx)
    assert terms["l_rot"] == pytest.approx(l_rot)


def test_s_gradient_matches_hand_derivative():
    pred = _pred([0.5, 0.0, 0.0], [2.0, 0, 0, 0, 0, 0])
    params = LossParams(0.7, 0.0)
    pose_loss(pred, _zero_target(), params).backward()
    s_dx = params.values()[0]
    assert float(params.s_dx.grad) == pytest.approx(-0.5 * np.exp(-s_dx) + 1.0, abs=1e-6)


def test_s_is_stationary_at_log_loss():
    pred = _pred([0.5, 0.0, 0.0], [1.0, 1.0, 0, 0, 0, 0])
    params = LossParams(0.0, -3.0)
    for _ in range(300):
        params.zero_grad()
        pose_loss(pred, _zero_target(), params).backward()
        for p in params.parameters():
            p.data = p.data - 0.5 * p.grad
    s_dx, s_rot = params.values()
    assert s_dx == pytest.approx(np.log(0.5), abs=1e-3)
    assert s_rot == pytest.approx(np.log(2.0), abs=1e-3)


def test_doubling_translation_error_adds_weighted_term():
    params = LossParams(0.4, -3.0)
    base = float(pose_loss(_pred([0.3, -0.2, 0.1], np.zeros(6)), _zero_target(), params).data)
    doubled = float(pose_loss(_pred([0.6, -0.4, 0.2], np.zeros(6)), _zero_target(), params).data)
    l_dx = 0.6
    assert doubled - base == pytest.approx(l_dx * np.exp(-params.values()[0]), abs=1e-6)


def test_loss_gradient_oracle():
    rng = np.random.default_rng(3)
    gt = PoseTarget(rng.normal(size=(3, 3)), rng.normal(size=(3, 6)), "6d")
    rot = Tensor(rng.normal(size=(3, 6)), dtype=np.float64)
    params = LossParams(0.2, -1.0)
    x = Tensor(rng.normal(size=(3, 3)), requires_grad=True, dtype=np.float64)
    assert check_gradients(lambda v: pose_loss((v, rot), gt, params), x) < 1e-4


def test_loss_rejects_dimension_mismatch():
    with pytest.raises(ShapeError):
        pose_loss(_pred(np.zeros(3), np.zeros(4)), _zero_target("6d"), LossParams())
    with pytest.raises(ShapeError):
        pose_loss(_pred(np.zeros(3), np.zeros(6)), PoseTarget(np.zeros((1, 3)), np.zeros((1, 5)), "6d"), LossParams())


def test_loss_params_defaults_and_gradients():
    params = LossParams()
    assert params.values() == (0.0, -3.0)
    assert all(p.requires_grad for p in params.parameters())


def test_make_target_identity_pairs():
    p = Pose([1.0, 2.0, 3.0], rot_z(0.4))
    t6 = make_target(p, p, "6d")
    assert np.allclose(t6.dx_gt, 0.0)
    assert np.allclose(t6.rot_gt, [1, 0, 0, 0, 1, 0])
    assert np.allclose(make_target(p, p, "quat").rot_gt, [1, 0, 0, 0])
    assert np.allclose(make_target(p, p, "9d").rot_gt, np.eye(3).reshape(9))


def test_make_target_round_trips_rotation():
    p1 = Pose([0.0, 0.0, 0.0], rot_x(0.3))
    p2 = Pose([1.0, -1.0, 0.5], rot_z(1.1) @ rot_x(-0.2))
    dR = p1.R.T @ p2.R
    assert np.max(np.abs(sixd_to_matrix(make_target(p1, p2, "6d").rot_gt) - dR)) < 1e-9
    q = make_target(p1, p2, "quat").rot_gt
    assert q[0] >= 0
    assert np.max(np.abs(quat_to_matrix(q) - dR)) < 1e-9
    assert np.allclose(make_target(p1, p2, "6d").dx_gt, [1.0, -1.0, 0.5])


def test_stack_targets():
    p1, p2 = Pose.identity(), Pose([1.0, 0.0, 0.0], rot_z(0.2))
    stacked = stack_targets([make_target(p1, p2, "6d"), make_target(p2, p1, "6d")])
    assert stacked.dx_gt.shape == (2, 3) and stacked.rot_gt.shape == (2, 6)
    with pytest.raises(ShapeError):
        stack_targets([make_target(p1, p2, "6d"), make_target(p1, p2, "quat")])
