import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from meshforge.body_model import (BodyPose, BodyShape, BodyTemplate, Joints3D, WeakPerspectiveCamera,
                                  chain_template, declared_joint_positions, forward_kinematics,
                                  load_template, matrix_to_axis_angle, normalize_axis_angle,
                                  procedural_template, project_weak_perspective, regress_joints, rodrigues,
                                  rodrigues_jacobian, save_template, skin, template_to_dict, write_obj)
from meshforge.errors import DimensionError, TemplateParseError, ValidationError

finite3 = arrays(np.float64, 3, elements=st.floats(-10, 10))


def quat_rotation(axis, angle):
    # independent construction from a unit quaternion
    w = math.cos(angle / 2)
    x, y, z = np.asarray(axis) * math.sin(angle / 2)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_pose(rng, sigma=0.4, joints=24):
    return BodyPose(rng.normal(0, sigma, 3 * joints))


# rodrigues

def test_rodrigues_zero_is_identity():
    assert np.array_equal(rodrigues([0, 0, 0]), np.eye(3))


def test_rodrigues_quarter_turn_z():
    R = rodrigues([0, 0, np.pi / 2])
    np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_rodrigues_matches_quaternion_oracle(rng):
    for _ in range(20):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        np.testing.assert_allclose(rodrigues(0.7 * axis), quat_rotation(axis, 0.7), atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(finite3)
def test_rodrigues_orthonormal(r):
    R = rodrigues(r)
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-10
    assert abs(np.linalg.det(R) - 1) < 1e-10


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(-1.8, 1.8)))
def test_rodrigues_angle_and_axis(r):
    angle = np.linalg.norm(r)
    R = rodrigues(r)
    assert math.isclose(math.acos(np.clip((np.trace(R) - 1) / 2, -1, 1)), angle, abs_tol=1e-6)
    np.testing.assert_allclose(R @ r, r, atol=1e-12)


def test_rodrigues_jacobian_finite_difference(rng):
    for r in [rng.normal(size=3), 1e-5 * rng.normal(size=3), np.zeros(3)]:
        _, dR = rodrigues_jacobian(r)
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1e-6
            fd = (rodrigues(r + e) - rodrigues(r - e)) / 2e-6
            np.testing.assert_allclose(dR[i], fd, atol=1e-8)


def test_axis_angle_round_trip(rng):
    for _ in range(50):
        r = rng.normal(size=3)
        r *= rng.uniform(0, np.pi - 1e-3) / np.linalg.norm(r)
        np.testing.assert_allclose(matrix_to_axis_angle(rodrigues(r)), r, atol=1e-9)


def test_normalize_axis_angle_keeps_rotation(rng):
    v = rng.normal(size=(30, 3)) * 3
    n = normalize_axis_angle(v)
    assert np.all(np.linalg.norm(n, axis=1) <= np.pi + 1e-12)
    for a, b in zip(v, n):
        np.testing.assert_allclose(rodrigues(a), rodrigues(b), atol=1e-12)
    small = rng.normal(size=(5, 3)) * 0.1
    assert np.array_equal(normalize_axis_angle(small), small)


# forward kinematics

def test_fk_zero_pose_identity(template):
    G = forward_kinematics(template, BodyPose.zeros())
    assert np.array_equal(G, np.broadcast_to(np.eye(4), G.shape))


def test_fk_root_only(template, rng):
    r = rng.normal(size=3)
    G = forward_kinematics(template, BodyPose(np.concatenate([r, np.zeros(69)])))
    for g in G:
        np.testing.assert_allclose(g[:3, :3], rodrigues(r), atol=1e-14)
        np.testing.assert_allclose(g[:3, 3], 0, atol=1e-14)


def test_fk_chain_hand_composition():
    tpl = chain_template([1.0, 1.0])
    theta = np.zeros(9)
    theta[3:6] = [0, 0, np.pi / 2]
    G = forward_kinematics(tpl, BodyPose(theta))
    leaf = G[2] @ np.array([2.0, 0, 0, 1])
    # elbow at (1,0,0) bent 90 degrees about z: the unit link now points along +y
    np.testing.assert_allclose(leaf[:3], [1.0, 1.0, 0.0], atol=1e-15)


def test_fk_joint_count_mismatch(template):
    with pytest.raises(DimensionError):
        forward_kinematics(template, BodyPose.zeros(5))


# skinning

def test_skin_rest_fixed_point_bitwise(template):
    mesh = skin(template, BodyShape(), BodyPose.zeros())
    assert np.array_equal(mesh.vertices, template.rest_vertices)


def test_skin_root_rotation_rigid(template):
    Rz = rodrigues([0, 0, np.pi / 2])
    theta = np.zeros(72)
    theta[2] = np.pi / 2
    mesh = skin(template, BodyShape(), BodyPose(theta))
    np.testing.assert_allclose(mesh.vertices, template.rest_vertices @ Rz.T, atol=1e-10)


def test_skin_linear_shape_blend(template):
    beta = np.zeros(10)
    beta[0] = 1
    mesh = skin(template, BodyShape(beta), BodyPose.zeros())
    np.testing.assert_allclose(mesh.vertices, template.rest_vertices + template.shape_basis[:, :, 0], atol=1e-15)


def test_skin_root_equivariance(template, rng):
    for _ in range(5):
        pose = random_pose(rng)
        shape = BodyShape(rng.normal(size=10))
        zero_root = BodyPose(np.concatenate([np.zeros(3), pose.theta[3:]]))
        a = skin(template, shape, pose).vertices
        b = skin(template, shape, zero_root).vertices @ rodrigues(pose.theta[:3]).T
        assert np.abs(a - b).max() < 1e-9


def test_skin_nonfinite_reports_vertex(template):
    from meshforge.errors import NumericError
    # a finite rest coordinate, ignored by the joint regressor, that overflows once rotated
    idx = int(np.nonzero(template.joint_regressor.sum(axis=0) == 0)[0][0])
    rest = np.array(template.rest_vertices)
    rest[idx, :2] = 1.5e308
    tpl = BodyTemplate(rest, template.faces, template.parents, template.skinning_weights,
                       template.shape_basis, template.joint_regressor)
    theta = np.zeros(72)
    theta[2] = np.pi / 4
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(NumericError, match=f"index {idx}$"):
            skin(tpl, BodyShape(), BodyPose(theta))


# regression and projection

def test_regress_rest_joints_match_declared(template):
    J = regress_joints(template.rest_vertices, template).joints
    assert np.abs(J - declared_joint_positions()).max() < 1e-6


def test_regress_matches_matrix_product(template, rng):
    V = rng.normal(size=template.rest_vertices.shape)
    np.testing.assert_allclose(regress_joints(V, template).joints, template.joint_regressor @ V, atol=1e-12)


def test_regress_rigid_equivariance(template, rng):
    R = rodrigues(rng.normal(size=3))
    t = rng.normal(size=3)
    V = skin(template, BodyShape(), random_pose(rng)).vertices
    a = regress_joints(V @ R.T + t, template).joints
    b = regress_joints(V, template).joints @ R.T + t
    assert np.abs(a - b).max() < 1e-9


def test_regress_dimension_mismatch(template):
    with pytest.raises(DimensionError):
        regress_joints(np.zeros((3, 3)), template)


def test_weak_perspective_examples():
    J = Joints3D(np.array([[1.0, 2.0, 3.0]]))
    assert np.array_equal(project_weak_perspective(J, WeakPerspectiveCamera(1.0)).points, [[1, 2]])
    kp = project_weak_perspective(J, WeakPerspectiveCamera(2.0, np.eye(3), [10, 10]))
    assert np.array_equal(kp.points, [[12, 14]])
    assert kp.visibility.all()


def test_weak_perspective_lipschitz_and_affine(rng):
    for _ in range(20):
        cam = WeakPerspectiveCamera(rng.uniform(0.1, 5), rodrigues(rng.normal(size=3)), rng.normal(size=2))
        J1, J2 = rng.normal(size=(14, 3)), rng.normal(size=(14, 3))
        p1 = project_weak_perspective(J1, cam).points
        d2 = np.linalg.norm(p1[:, None] - p1[None], axis=2)
        d3 = np.linalg.norm(J1[:, None] - J1[None], axis=2)
        assert np.all(d2 <= cam.scale * d3 + 1e-12)
        a = rng.uniform()
        mix = project_weak_perspective(a * J1 + (1 - a) * J2, cam).points
        ref = a * p1 + (1 - a) * project_weak_perspective(J2, cam).points
        assert np.abs(mix - ref).max() < 1e-10


def test_weak_perspective_rejects_bad_camera():
    with pytest.raises(ValidationError):
        WeakPerspectiveCamera(0.0)
    with pytest.raises(ValidationError):
        WeakPerspectiveCamera(1.0, np.diag([1.0, 1.0, -1.0]))


# procedural template

@pytest.mark.parametrize("detail", ["low", "medium"])
def test_procedural_template_invariants(detail):
    tpl = procedural_template(detail)
    assert tpl.joint_count == 24 and tpl.vertex_count >= 300
    np.testing.assert_allclose(tpl.skinning_weights.sum(axis=1), 1, atol=1e-6)
    np.testing.assert_allclose(tpl.joint_regressor.sum(axis=1), 1, atol=1e-6)
    height = np.ptp(tpl.rest_vertices[:, 2])
    assert 1.6 < height < 1.8
    assert tpl.faces.min() >= 0 and tpl.faces.max() < tpl.vertex_count


def test_procedural_height_basis(template):
    beta = np.zeros(10)
    beta[0] = 1
    taller = skin(template, BodyShape(beta), BodyPose.zeros()).vertices
    assert np.ptp(taller[:, 2]) > np.ptp(template.rest_vertices[:, 2])


def test_procedural_bad_detail():
    with pytest.raises(ValidationError):
        procedural_template("high")


# value types

def test_shape_and_pose_validation():
    with pytest.raises(DimensionError):
        BodyShape(np.zeros(9))
    with pytest.raises(ValidationError):
        BodyShape(np.r_[np.nan, np.zeros(9)])
    with pytest.raises(DimensionError):
        BodyPose(np.zeros(4))


def test_pose_normalizes_large_angles():
    theta = np.zeros(72)
    theta[3:6] = [0, 0, 1.5 * np.pi]
    pose = BodyPose(theta)
    np.testing.assert_allclose(pose.theta[3:6], [0, 0, -0.5 * np.pi], atol=1e-12)


# file formats

def test_template_round_trip_bit_identical(template, tmp_path):
    path = tmp_path / "t.json"
    save_template(template, path)
    back = load_template(path)
    for name in ("rest_vertices", "faces", "skinning_weights", "shape_basis", "joint_regressor", "bone_radii"):
        assert np.array_equal(getattr(back, name), getattr(template, name)), name
    assert back.parents == template.parents and back.metric_joint_map == template.metric_joint_map


def test_template_bad_weight_row(template, tmp_path):
    doc = template_to_dict(template)
    doc["weights"] = (template.skinning_weights * np.r_[0.9, np.ones(template.vertex_count - 1)][:, None]).tolist()
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValidationError, match="skinning"):
        load_template(path)


def test_template_truncated_reports_offset(template, tmp_path):
    path = tmp_path / "t.json"
    save_template(template, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:1000])
    with pytest.raises(TemplateParseError) as info:
        load_template(path)
    assert info.value.offset is not None and 0 < info.value.offset <= 1000


def test_template_pose_blend_data_ignored(template, tmp_path):
    doc = template_to_dict(template)
    doc["posedirs"] = [0.0]
    path = tmp_path / "t.json"
    path.write_text(json.dumps(doc))
    with pytest.warns(UserWarning):
        load_template(path)


def test_write_obj(tmp_path, template):
    path = tmp_path / "m.obj"
    write_obj(path, template.rest_vertices, template.faces, name="body")
    lines = path.read_text().splitlines()
    assert lines[0] == "o body"
    assert sum(l.startswith("v ") for l in lines) == template.vertex_count
    assert sum(l.startswith("f ") for l in lines) == len(template.faces)
