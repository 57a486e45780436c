import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from rbskin.geometry import Normalization
from rbskin.skeleton import (
    Handle,
    HandleSet,
    handle_distance,
    lagrange_mollifier,
    load_skeleton,
    skeleton_to_dict,
    smoothstep,
)


def test_smoothstep_ends_and_clamp():
    assert smoothstep(0.0) == 0.0
    assert smoothstep(1.0) == 1.0
    assert smoothstep(0.5) == 0.5
    assert smoothstep(-3.0) == 0.0 and smoothstep(7.0) == 1.0


def test_handle_distance_examples():
    p = Handle.point([0.3, 0.4])
    assert handle_distance(p, np.array([0.3, 0.4])) == 0.0
    bone = Handle.bone([0.0, 0.0], [1.0, 0.0])
    assert handle_distance(bone, np.array([0.5, 0.3])) == pytest.approx(0.3)
    assert handle_distance(bone, np.array([2.0, 0.0])) == pytest.approx(1.0)


def test_bone_rejects_coincident_endpoints():
    with pytest.raises(ValueError):
        Handle.bone([0.1, 0.1], [0.1, 0.1])


def test_handle_set_needs_positive_eps():
    with pytest.raises(ValueError):
        HandleSet([Handle.point([0, 0])], eps=0.0)
    with pytest.raises(ValueError):
        HandleSet([])


def test_mollifier_one_hot_on_isolated_handle():
    hs = HandleSet([Handle.point([0.2, 0.2]), Handle.bone([0.6, 0.2], [0.6, 0.8])], eps=0.05)
    e, b = lagrange_mollifier(hs, np.array([[0.2, 0.2], [0.6, 0.5]]))
    np.testing.assert_array_equal(e, [[1, 0], [0, 1]])
    np.testing.assert_array_equal(b, [1, 1])


def test_mollifier_shared_bone_endpoint():
    hs = HandleSet([Handle.bone([0.2, 0.5], [0.5, 0.5]), Handle.bone([0.5, 0.5], [0.5, 0.8]),
                    Handle.point([0.9, 0.1])], eps=0.05)
    e, _ = lagrange_mollifier(hs, np.array([[0.5, 0.5]]))
    np.testing.assert_allclose(e[0], [0.5, 0.5, 0.0])


def test_mollifier_half_radius_example():
    eps = 0.1
    hs = HandleSet([Handle.point([0.5, 0.5]), Handle.point([0.1, 0.1])], eps=eps)
    x = np.array([[0.5 + eps / np.sqrt(2), 0.5]])
    e, b = lagrange_mollifier(hs, x)
    assert e[0, 0] == pytest.approx(0.5)
    assert e[0, 1] == 0.0
    assert b[0] == pytest.approx(0.5)


def test_mollifier_zero_outside_shells(rng):
    hs = HandleSet([Handle.point([0.5, 0.5])], eps=0.1)
    x = rng.random((500, 2))
    e, b = lagrange_mollifier(hs, x)
    far = np.linalg.norm(x - 0.5, axis=1) >= 0.1
    assert np.all(e[far] == 0) and np.all(b[far] == 0)
    assert np.all(e >= 0)
    np.testing.assert_allclose(e.sum(1), b, atol=1e-15)


def test_mollifier_continuous_across_shell():
    hs = HandleSet([Handle.point([0.5, 0.5]), Handle.bone([0.55, 0.3], [0.7, 0.7])], eps=0.1)
    t = np.arange(0.0, 1.0, 1e-4)
    x = np.stack([t, 0.5 + 0.05 * np.sin(7 * t)], axis=1)
    e, _ = lagrange_mollifier(hs, x)
    assert np.abs(np.diff(e, axis=0)).max() <= 1e-2


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=25, deadline=None)
def test_mollifier_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    hs = HandleSet([Handle.point(rng.random(3)), Handle.bone(rng.random(3), rng.random(3) + 1.0)], eps=0.3)
    x = rng.random((20, 3))
    rot = Rotation.random(random_state=seed).as_matrix()
    shift = rng.standard_normal(3)
    move = lambda p: p @ rot.T + shift  # noqa: E731
    e0, b0 = lagrange_mollifier(hs, x)
    e1, b1 = lagrange_mollifier(hs.transformed(move), move(x))
    np.testing.assert_allclose(e0, e1, atol=1e-12)
    np.testing.assert_allclose(b0, b1, atol=1e-12)


def test_isolated():
    hs = HandleSet([Handle.point([0.1, 0.1]), Handle.point([0.15, 0.1]), Handle.point([0.9, 0.9])], eps=0.1)
    assert not hs.isolated(0)
    assert hs.isolated(2)


def test_skeleton_json_round_trip(tmp_path):
    doc = {"handles": [{"type": "point", "p": [1.0, 2.0, 3.0]},
                       {"type": "bone", "a": [0.0, 0.0, 0.0], "b": [4.0, 0.0, 0.0]}]}
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    nz = Normalization(np.array([0.0, 0.0, 0.0]), 0.25)
    hs = load_skeleton(path, nz)
    np.testing.assert_allclose(hs[0].points[0], [0.25, 0.5, 0.75])
    assert hs[1].kind == "bone"
    back = skeleton_to_dict(hs, nz)
    np.testing.assert_allclose(back["handles"][1]["b"], [4.0, 0.0, 0.0])


def test_skeleton_rejects_unknown_type(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"handles": [{"type": "cage", "p": [0, 0]}]}))
    with pytest.raises(ValueError):
        load_skeleton(path)
