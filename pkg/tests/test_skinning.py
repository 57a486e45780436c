import json

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from rbskin.skinning import (
    BakedWeights,
    Pose,
    PoseError,
    dqs,
    dual_quat_from_matrix,
    lbs,
    load_pose,
    matrix_from_dual_quat,
    quat_from_rotation,
    rigid_part,
    rotation_from_quat,
)


def rigid(seed):
    m = np.eye(4)
    m[:3, :3] = Rotation.random(random_state=seed).as_matrix()
    m[:3, 3] = np.random.default_rng(seed).standard_normal(3)
    return m


def baked(rng, n=200, k=3, d=3):
    w = rng.dirichlet(np.ones(k) * 0.5, n)
    return BakedWeights(w, rng.standard_normal((n, d)), np.zeros((0, d), dtype=np.int64))


def test_quaternion_round_trip():
    for s in range(20):
        r = Rotation.random(random_state=s).as_matrix()
        q = quat_from_rotation(r)
        assert np.linalg.norm(q) == pytest.approx(1.0)
        np.testing.assert_allclose(rotation_from_quat(q), r, atol=1e-12)
    # rotation by pi: the trace is -1 and the naive branch fails
    r = np.diag([1.0, -1.0, -1.0])
    np.testing.assert_allclose(rotation_from_quat(quat_from_rotation(r)), r, atol=1e-12)


def test_dual_quat_round_trip():
    for s in range(20):
        m = rigid(s)
        np.testing.assert_allclose(matrix_from_dual_quat(*dual_quat_from_matrix(m)), m, atol=1e-12)


def test_rigid_part_rejects_non_rigid():
    with pytest.raises(PoseError):
        rigid_part(np.diag([2.0, 1.0, 1.0, 1.0]))
    with pytest.raises(PoseError):
        rigid_part(np.diag([-1.0, 1.0, 1.0, 1.0]))
    bad = np.eye(4)
    bad[3, 0] = 1.0
    with pytest.raises(PoseError):
        rigid_part(bad)


def test_identity_pose_is_fixpoint(rng):
    b = baked(rng)
    pose = Pose.identity(3)
    np.testing.assert_allclose(lbs(b, pose), b.vertices, atol=1e-12)
    np.testing.assert_allclose(dqs(b, pose), b.vertices, atol=1e-12)


def test_dqs_is_rigid_per_vertex(rng):
    b = baked(rng)
    pose = Pose.from_matrices([rigid(s) for s in (1, 2, 3)])
    out = dqs(b, pose)
    # rebuild each vertex's blended transform and check it is a rotation
    piv = pose.real[np.argmax(b.weights, axis=1)]
    sign = np.where(piv @ pose.real.T < 0, -1.0, 1.0)
    c0 = (b.weights * sign) @ pose.real
    ce = (b.weights * sign) @ pose.dual
    for i in range(0, len(out), 17):
        m = matrix_from_dual_quat(c0[i], ce[i])
        r = m[:3, :3]
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-9)
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(m[:3, :3] @ b.vertices[i] + m[:3, 3], out[i], atol=1e-9)
    # distances between vertices moved by one-hot rows are preserved
    one = BakedWeights(np.tile([0.0, 1.0, 0.0], (50, 1)), rng.standard_normal((50, 3)), b.facets)
    moved = dqs(one, pose)
    d0 = np.linalg.norm(one.vertices[:, None] - one.vertices[None], axis=2)
    d1 = np.linalg.norm(moved[:, None] - moved[None], axis=2)
    np.testing.assert_allclose(d0, d1, atol=1e-9)


def test_one_hot_lbs_equals_dqs(rng):
    k = 4
    w = np.eye(k)[rng.integers(k, size=100)]
    b = BakedWeights(w, rng.standard_normal((100, 3)), np.zeros((0, 3), dtype=np.int64))
    pose = Pose.from_matrices([rigid(s) for s in range(10, 10 + k)])
    np.testing.assert_allclose(lbs(b, pose), dqs(b, pose), atol=1e-9)


def test_dqs_equivariance(rng):
    b = baked(rng)
    pose = Pose.from_matrices([rigid(s) for s in (4, 5, 6)])
    g = rigid(99)
    out = dqs(b, pose)
    out_g = dqs(b, pose.compose_left(g))
    np.testing.assert_allclose(out_g, out @ g[:3, :3].T + g[:3, 3], atol=1e-9)


def test_antipodal_fallback(rng):
    # q and -q describe the same rotation; the blend must not cancel
    m = rigid(7)
    pose = Pose.from_matrices([m, m])
    pose.real[1] *= -1
    pose.dual[1] *= -1
    b = BakedWeights(np.full((10, 2), 0.5), rng.standard_normal((10, 3)), np.zeros((0, 3), dtype=np.int64))
    out, fallbacks = dqs(b, pose, return_fallbacks=True)
    assert fallbacks == 0
    np.testing.assert_allclose(out, b.vertices @ m[:3, :3].T + m[:3, 3], atol=1e-9)


def test_2d_vertices(rng):
    w = rng.dirichlet(np.ones(2), 30)
    b = BakedWeights(w, rng.standard_normal((30, 2)), np.zeros((0, 2), dtype=np.int64))
    rot = np.eye(4)
    c, s = np.cos(0.3), np.sin(0.3)
    rot[:2, :2] = [[c, -s], [s, c]]
    rot[:2, 3] = [1.0, 2.0]
    pose = Pose.from_matrices([rot, rot])
    np.testing.assert_allclose(dqs(b, pose), b.vertices @ rot[:2, :2].T + rot[:2, 3], atol=1e-12)
    assert lbs(b, pose).shape == (30, 2)


def test_pose_count_mismatch(rng, tmp_path):
    b = baked(rng)
    with pytest.raises(PoseError):
        lbs(b, Pose.identity(2))
    path = tmp_path / "pose.json"
    path.write_text(json.dumps({"transforms": [np.eye(4).ravel().tolist()] * 2}))
    assert len(load_pose(path)) == 2
    with pytest.raises(PoseError):
        load_pose(path, 3)
