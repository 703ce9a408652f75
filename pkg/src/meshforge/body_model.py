"""Parametric skinned body: shape/pose containers, forward kinematics,
linear blend skinning, joint regression and weak-perspective projection.

Geometry is in meters throughout; pixel quantities only appear after
projection. World frame is z-up. The root rotation pivots about the world
origin (the procedural template places the pelvis there).
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError, NumericError, TemplateParseError, ValidationError

log = logging.getLogger(__name__)

NUM_BETAS = 10
NUM_JOINTS = 24

JOINT_NAMES = (
    "pelvis", "l_hip", "r_hip", "spine1", "l_knee", "r_knee", "spine2",
    "l_ankle", "r_ankle", "spine3", "l_foot", "r_foot", "neck", "l_collar",
    "r_collar", "head", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
    "l_wrist", "r_wrist", "l_hand", "r_hand",
)
# root is its own parent
SMPL_PARENTS = (0, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)
# r_ankle, r_knee, r_hip, l_hip, l_knee, l_ankle, r_wrist, r_elbow,
# r_shoulder, l_shoulder, l_elbow, l_wrist, neck, head
METRIC_JOINT_MAP = (8, 5, 2, 1, 4, 7, 21, 19, 17, 16, 18, 20, 12, 15)

_SMALL_ANGLE = 1e-4


def _frozen(a, dtype=np.float64):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# rotations


def _skew(r):
    x, y, z = r
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _rodrigues_coeffs(angle):
    """sin(a)/a, (1-cos(a))/a^2 and their derivatives divided by a."""
    a2 = angle * angle
    if angle < _SMALL_ANGLE:
        A = 1.0 - a2 / 6.0 + a2 * a2 / 120.0
        B = 0.5 - a2 / 24.0 + a2 * a2 / 720.0
        dA = -1.0 / 3.0 + a2 / 30.0
        dB = -1.0 / 12.0 + a2 / 180.0
    else:
        s, c = math.sin(angle), math.cos(angle)
        A = s / angle
        B = (1.0 - c) / a2
        dA = (c - A) / a2
        dB = (A - 2.0 * B) / a2
    return A, B, dA, dB


def rodrigues(axis_angle) -> np.ndarray:
    """Rotation matrix for an axis-angle vector (angle = vector norm)."""
    r = np.asarray(axis_angle, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(r)):
        raise NumericError("rodrigues: non-finite axis-angle input")
    angle = math.sqrt(float(r @ r))
    A, B, _, _ = _rodrigues_coeffs(angle)
    K = _skew(r)
    return np.eye(3) + A * K + B * (K @ K)


def rodrigues_jacobian(axis_angle) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(R, dR)`` where ``dR[i] = dR/dr_i`` (shape ``(3, 3, 3)``)."""
    r = np.asarray(axis_angle, dtype=np.float64).reshape(3)
    angle = math.sqrt(float(r @ r))
    A, B, dA, dB = _rodrigues_coeffs(angle)
    K = _skew(r)
    K2 = K @ K
    R = np.eye(3) + A * K + B * K2
    dR = np.empty((3, 3, 3))
    for i in range(3):
        E = _skew(np.eye(3)[i])
        dR[i] = dA * r[i] * K + A * E + dB * r[i] * K2 + B * (E @ K + K @ E)
    return R, dR


def matrix_to_axis_angle(R) -> np.ndarray:
    """Inverse of :func:`rodrigues` with the angle in ``[0, pi]``."""
    R = np.asarray(R, dtype=np.float64)
    cos_a = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = math.acos(cos_a)
    if angle < 1e-12:
        return np.zeros(3)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < math.pi - 1e-6:
        return v * (angle / (2.0 * math.sin(angle)))
    # near pi: axis from the symmetric part
    S = (R + np.eye(3)) / 2.0
    k = int(np.argmax(np.diag(S)))
    axis = S[:, k] / math.sqrt(max(S[k, k], 1e-300))
    axis /= np.linalg.norm(axis)
    if axis @ v < 0:
        axis = -axis
    return axis * angle


def normalize_axis_angle(rotvecs) -> np.ndarray:
    """Map axis-angle vectors to the equivalent rotation with angle in [0, pi].

    Vectors already in range are returned bit-for-bit unchanged.
    """
    v = np.array(rotvecs, dtype=np.float64, copy=True)
    flat = v.reshape(-1, 3)
    norms = np.linalg.norm(flat, axis=1)
    for k in np.nonzero(norms > math.pi)[0]:
        angle = math.fmod(norms[k], 2.0 * math.pi)
        axis = flat[k] / norms[k]
        if angle > math.pi:
            flat[k] = -axis * (2.0 * math.pi - angle)
        else:
            flat[k] = axis * angle
    return v


# --------------------------------------------------------------------------
# value types


@dataclass(frozen=True, eq=False)
class BodyShape:
    """Ten PCA shape coefficients; zero is the mean shape."""

    beta: np.ndarray = field(default_factory=lambda: np.zeros(NUM_BETAS))

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        if b.shape != (NUM_BETAS,):
            raise DimensionError(f"BodyShape needs {NUM_BETAS} coefficients, got {b.size}")
        if not np.all(np.isfinite(b)):
            raise ValidationError("BodyShape coefficients must be finite")
        object.__setattr__(self, "beta", _frozen(b))

    def __eq__(self, other):
        return isinstance(other, BodyShape) and np.array_equal(self.beta, other.beta)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BodyPose:
    """Root rotation followed by per-joint rotations, flattened to ``3 * J`` reals.

    Each axis-angle triple is normalized to angle ``[0, pi]`` on construction.
    """

    theta: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        if t.size == 0 or t.size % 3:
            raise DimensionError(f"pose vector length must be a positive multiple of 3, got {t.size}")
        if not np.all(np.isfinite(t)):
            raise ValidationError("BodyPose entries must be finite")
        object.__setattr__(self, "theta", _frozen(normalize_axis_angle(t)))

    @classmethod
    def zeros(cls, joint_count: int = NUM_JOINTS) -> "BodyPose":
        return cls(np.zeros(3 * joint_count))

    @classmethod
    def from_parts(cls, root_rotation, joint_rotations) -> "BodyPose":
        return cls(np.concatenate([np.ravel(root_rotation), np.ravel(joint_rotations)]))

    @property
    def joint_count(self) -> int:
        return self.theta.size // 3

    @property
    def rotations(self) -> np.ndarray:
        return self.theta.reshape(-1, 3)

    @property
    def root_rotation(self) -> np.ndarray:
        return self.theta[:3]

    @property
    def joint_rotations(self) -> np.ndarray:
        return self.theta[3:].reshape(-1, 3)

    def __eq__(self, other):
        return isinstance(other, BodyPose) and np.array_equal(self.theta, other.theta)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BodyTemplate:
    """Rest mesh with skinning data.

    ``parents[0]`` is the root and points to itself. ``bone_radii[j]`` is the
    collision radius of the bone ending at joint ``j`` (entry 0 unused).
    """

    rest_vertices: np.ndarray
    faces: np.ndarray
    parents: tuple
    skinning_weights: np.ndarray
    shape_basis: np.ndarray
    joint_regressor: np.ndarray
    metric_joint_map: tuple = METRIC_JOINT_MAP
    joint_names: tuple = ()
    bone_radii: np.ndarray | None = None

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("rest_vertices", _frozen(self.rest_vertices))
        set_("faces", _frozen(self.faces, dtype=np.int64))
        set_("parents", tuple(int(p) for p in self.parents))
        set_("skinning_weights", _frozen(self.skinning_weights))
        set_("shape_basis", _frozen(self.shape_basis))
        set_("joint_regressor", _frozen(self.joint_regressor))
        set_("metric_joint_map", tuple(int(i) for i in self.metric_joint_map))
        set_("joint_names", tuple(self.joint_names))
        if self.bone_radii is None:
            set_("bone_radii", _frozen(np.full(len(self.parents), 0.05)))
        else:
            set_("bone_radii", _frozen(self.bone_radii))
        self.validate()

    @property
    def vertex_count(self) -> int:
        return self.rest_vertices.shape[0]

    @property
    def joint_count(self) -> int:
        return len(self.parents)

    def validate(self) -> None:
        """Check every structural invariant, raising ``ValidationError``."""
        V = self.rest_vertices
        if V.ndim != 2 or V.shape[1] != 3 or V.shape[0] == 0:
            raise DimensionError(f"rest_vertices must be N x 3, got {V.shape}")
        if not np.all(np.isfinite(V)):
            raise ValidationError("rest_vertices must be finite")
        N, J = V.shape[0], self.joint_count
        F = self.faces
        if F.ndim != 2 or F.shape[1] != 3:
            raise DimensionError(f"faces must be F x 3, got {F.shape}")
        if F.size and (F.min() < 0 or F.max() >= N):
            raise ValidationError("faces: all faces must index valid vertices")
        if J < 1 or self.parents[0] != 0:
            raise ValidationError("kinematic_tree: joint 0 must be the single root (its own parent)")
        for j in range(1, J):
            p = self.parents[j]
            if not 0 <= p < j:
                raise ValidationError(
                    f"kinematic_tree: parent of joint {j} must precede it (got {p}); tree must be acyclic with a single root"
                )
        W = self.skinning_weights
        if W.shape != (N, J):
            raise DimensionError(f"skinning_weights must be {N} x {J}, got {W.shape}")
        if np.any(W < 0) or not np.all(np.isfinite(W)):
            raise ValidationError("skinning_weights must be nonnegative and finite")
        bad = np.nonzero(np.abs(W.sum(axis=1) - 1.0) > 1e-6)[0]
        if bad.size:
            raise ValidationError(
                f"skinning_weights rows must sum to 1 ± 1e-6 (row {bad[0]} sums to {W[bad[0]].sum():.9g})"
            )
        if self.shape_basis.shape != (N, 3, NUM_BETAS):
            raise DimensionError(f"shape_basis must be {N} x 3 x {NUM_BETAS}, got {self.shape_basis.shape}")
        if not np.all(np.isfinite(self.shape_basis)):
            raise ValidationError("shape_basis must be finite")
        R = self.joint_regressor
        if R.shape != (J, N):
            raise DimensionError(f"joint_regressor must be {J} x {N}, got {R.shape}")
        if np.any(R < 0) or not np.all(np.isfinite(R)):
            raise ValidationError("joint_regressor must be nonnegative and finite")
        bad = np.nonzero(np.abs(R.sum(axis=1) - 1.0) > 1e-6)[0]
        if bad.size:
            raise ValidationError(
                f"joint_regressor rows must sum to 1 ± 1e-6 (row {bad[0]} sums to {R[bad[0]].sum():.9g})"
            )
        if any(not 0 <= i < J for i in self.metric_joint_map):
            raise ValidationError("metric_joint_map entries must index template joints")
        if self.bone_radii.shape != (J,) or np.any(self.bone_radii[1:] <= 0):
            raise ValidationError("bone_radii must hold one positive radius per joint")

    def __eq__(self, other):
        if not isinstance(other, BodyTemplate):
            return NotImplemented
        return (
            self.parents == other.parents
            and self.metric_joint_map == other.metric_joint_map
            and self.joint_names == other.joint_names
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("rest_vertices", "faces", "skinning_weights", "shape_basis",
                          "joint_regressor", "bone_radii")
            )
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SkinnedMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices))


@dataclass(frozen=True, eq=False)
class Joints3D:
    joints: np.ndarray

    def __post_init__(self):
        j = _frozen(self.joints)
        if j.ndim != 2 or j.shape[1] != 3 or j.shape[0] < 1:
            raise DimensionError(f"joints must be Q x 3 with Q >= 1, got {j.shape}")
        object.__setattr__(self, "joints", j)


@dataclass(frozen=True, eq=False)
class WeakPerspectiveCamera:
    """``x2d = scale * drop_z(rotation @ X) + translation``."""

    scale: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        if not self.scale > 0:
            raise ValidationError(f"camera scale must be > 0, got {self.scale}")
        R = _frozen(self.rotation)
        if R.shape != (3, 3):
            raise DimensionError("camera rotation must be 3 x 3")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-8 or abs(np.linalg.det(R) - 1.0) > 1e-8:
            raise ValidationError("camera rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", _frozen(np.reshape(self.translation, 2)))


@dataclass(frozen=True, eq=False)
class Keypoints2D:
    points: np.ndarray
    visibility: np.ndarray

    def __post_init__(self):
        p = _frozen(self.points)
        vis = _frozen(self.visibility, dtype=bool)
        if p.ndim != 2 or p.shape[1] != 2 or vis.shape != (p.shape[0],):
            raise DimensionError("keypoints and visibility lengths must match")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "visibility", vis)


# --------------------------------------------------------------------------
# kinematics and skinning


def shaped_vertices(template: BodyTemplate, shape: BodyShape | None = None) -> np.ndarray:
    if shape is None:
        return template.rest_vertices.copy()
    return template.rest_vertices + template.shape_basis @ shape.beta


def rest_joints(template: BodyTemplate, shape: BodyShape | None = None) -> np.ndarray:
    """Joint locations of the (shaped) rest mesh."""
    return template.joint_regressor @ shaped_vertices(template, shape)


def _check_pose(template, pose):
    if pose.joint_count != template.joint_count:
        raise DimensionError(
            f"pose has {pose.joint_count} joints but template kinematic tree has {template.joint_count}"
        )


def forward_kinematics(template: BodyTemplate, pose: BodyPose,
                       shape: BodyShape | None = None) -> np.ndarray:
    """Rest-pose-factored global transforms, shape ``(J, 4, 4)``.

    ``G[k]`` maps a rest-space point rigidly attached to joint ``k`` to posed
    space, so the all-zero pose yields identities exactly.
    """
    _check_pose(template, pose)
    J = rest_joints(template, shape)
    rots = pose.rotations
    G = np.empty((template.joint_count, 4, 4))
    for k, p in enumerate(template.parents):
        R = rodrigues(rots[k])
        L = np.eye(4)
        L[:3, :3] = R
        if k == 0:
            G[0] = L
            continue
        L[:3, 3] = J[k] - R @ J[k]
        G[k] = G[p] @ L
    return G


def skin(template: BodyTemplate, shape: BodyShape, pose: BodyPose) -> SkinnedMesh:
    """Linear blend skinning of the shaped rest mesh."""
    G = forward_kinematics(template, pose, shape)
    v = shaped_vertices(template, shape)
    W = template.skinning_weights
    # displacement form keeps the rest pose an exact fixed point
    A = G[:, :3, :3] - np.eye(3)
    disp = np.einsum("nk,kab,nb->na", W, A, v) + W @ G[:, :3, 3]
    out = v + disp
    bad = np.nonzero(~np.all(np.isfinite(out), axis=1))[0]
    if bad.size:
        raise NumericError(f"skin produced a non-finite vertex at index {bad[0]}")
    return SkinnedMesh(out, template.faces)


def regress_joints(mesh: SkinnedMesh | np.ndarray, template: BodyTemplate,
                   subset: Sequence[int] | None = None) -> Joints3D:
    """Apply the joint regressor; ``subset`` selects joints (e.g. the metric map)."""
    V = mesh.vertices if isinstance(mesh, SkinnedMesh) else np.asarray(mesh, dtype=np.float64)
    if V.shape != (template.vertex_count, 3):
        raise DimensionError(f"mesh has {V.shape[0]} vertices, template has {template.vertex_count}")
    J = template.joint_regressor @ V
    if subset is not None:
        J = J[list(subset)]
    return Joints3D(J)


def posed_joints(template: BodyTemplate, shape: BodyShape, pose: BodyPose) -> np.ndarray:
    return regress_joints(skin(template, shape, pose), template).joints


def project_weak_perspective(joints: Joints3D | np.ndarray,
                             cam: WeakPerspectiveCamera) -> Keypoints2D:
    X = joints.joints if isinstance(joints, Joints3D) else np.asarray(joints, dtype=np.float64)
    pts = cam.scale * (X @ cam.rotation.T)[:, :2] + cam.translation
    return Keypoints2D(pts, np.ones(len(pts), dtype=bool))


# --------------------------------------------------------------------------
# procedural template

_JOINT_POSITIONS = np.array([
    [0.0, 0.0, 0.0],
    [-0.09, 0.0, -0.07], [0.09, 0.0, -0.07],
    [0.0, 0.0, 0.11],
    [-0.09, 0.0, -0.48], [0.09, 0.0, -0.48],
    [0.0, 0.0, 0.23],
    [-0.09, 0.0, -0.87], [0.09, 0.0, -0.87],
    [0.0, 0.0, 0.36],
    [-0.09, 0.12, -0.92], [0.09, 0.12, -0.92],
    [0.0, 0.0, 0.55],
    [-0.07, 0.0, 0.48], [0.07, 0.0, 0.48],
    [0.0, 0.0, 0.64],
    [-0.18, 0.0, 0.48], [0.18, 0.0, 0.48],
    [-0.44, 0.0, 0.48], [0.44, 0.0, 0.48],
    [-0.69, 0.0, 0.48], [0.69, 0.0, 0.48],
    [-0.77, 0.0, 0.48], [0.77, 0.0, 0.48],
])
_HEAD_TOP = np.array([0.0, 0.0, 0.77])
# radius of the bone ending at each joint; entry 0 unused
_BONE_RADII = np.array([
    0.10, 0.09, 0.09, 0.10, 0.075, 0.075, 0.11, 0.05, 0.05, 0.12, 0.04, 0.04,
    0.11, 0.06, 0.06, 0.05, 0.06, 0.06, 0.045, 0.045, 0.037, 0.037, 0.035, 0.035,
])
_HEAD_RADIUS = 0.09

_LEFT_ARM = {13, 16, 18, 20, 22}
_RIGHT_ARM = {14, 17, 19, 21, 23}
_LEFT_LEG = {4, 7, 10}
_RIGHT_LEG = {5, 8, 11}
_TORSO = {6, 9, 12}
_HEAD = {15, -1}  # -1: head-top tube
_PELVIS = {1, 2, 3}
_LOCAL_REGIONS = (_TORSO, _HEAD, _LEFT_ARM, _RIGHT_ARM, _LEFT_LEG, _RIGHT_LEG, _PELVIS)
_LIMB_ROOT = {**{c: 16 for c in (18, 20, 22)}, **{c: 17 for c in (19, 21, 23)},
              **{c: 1 for c in (4, 7, 10)}, **{c: 2 for c in (5, 8, 11)}}

_HEIGHT_RATE = 0.06
_GIRTH_RATE = 0.10
_LIMB_RATE = 0.08


def _ring_frame(d):
    ref = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(ref, d)
    u /= np.linalg.norm(u)
    w = np.cross(d, u)
    return u, w


def procedural_template(detail: str = "low") -> BodyTemplate:
    """Capsule-limbed humanoid in T-pose with the SMPL 24-joint tree.

    About 1.7 m tall, pelvis at the origin, facing +y, z up. Shape basis:
    0 height, 1 girth, 2 limb length, 3-9 girth of torso, head, left arm,
    right arm, left leg, right leg and pelvis.
    """
    if detail == "low":
        n_rings, n_around = 3, 8
    elif detail == "medium":
        n_rings, n_around = 5, 16
    else:
        raise ValidationError(f"detail must be 'low' or 'medium', got {detail!r}")
    parents = SMPL_PARENTS
    J = NUM_JOINTS
    tubes = [(parents[c], c, _JOINT_POSITIONS[parents[c]], _JOINT_POSITIONS[c], _BONE_RADII[c])
             for c in range(1, J)]
    tubes.append((15, -1, _JOINT_POSITIONS[15], _HEAD_TOP, _HEAD_RADIUS))

    verts, weights, basis, faces = [], [], [], []
    joint_members = {j: [] for j in range(J)}
    phis = 2.0 * np.pi * np.arange(n_around) / n_around
    ts = np.linspace(0.0, 1.0, n_rings)
    for p, c, a, b, radius in tubes:
        d = (b - a) / np.linalg.norm(b - a)
        u, w = _ring_frame(d)
        first = len(verts)
        for ri, t in enumerate(ts):
            center = a + t * (b - a)
            wrow = np.zeros(J)
            if ri == 0:
                if p == 0:
                    wrow[0] = 1.0
                else:
                    wrow[p], wrow[parents[p]] = 0.6, 0.4
            elif ri == n_rings - 1 and c >= 0:
                wrow[p], wrow[c] = 0.6, 0.4
            else:
                wrow[p] = 1.0
            for phi in phis:
                offset = radius * (np.cos(phi) * u + np.sin(phi) * w)
                v = center + offset
                B = np.zeros((3, NUM_BETAS))
                B[2, 0] = _HEIGHT_RATE * v[2]
                B[:, 1] = _GIRTH_RATE * offset
                if c in _LIMB_ROOT:
                    B[:, 2] = _LIMB_RATE * (center - _JOINT_POSITIONS[_LIMB_ROOT[c]])
                for d_idx, region in enumerate(_LOCAL_REGIONS, start=3):
                    if c in region:
                        B[:, d_idx] = _GIRTH_RATE * offset
                if ri == 0:
                    joint_members[p].append(len(verts))
                elif ri == n_rings - 1 and c >= 0:
                    joint_members[c].append(len(verts))
                verts.append(v)
                weights.append(wrow)
                basis.append(B)
        for ri in range(n_rings - 1):
            r0, r1 = first + ri * n_around, first + (ri + 1) * n_around
            for k in range(n_around):
                k1 = (k + 1) % n_around
                faces.append((r0 + k, r0 + k1, r1 + k1))
                faces.append((r0 + k, r1 + k1, r1 + k))
        for cap, flip in ((first, True), (first + (n_rings - 1) * n_around, False)):
            for k in range(1, n_around - 1):
                tri = (cap, cap + k, cap + k + 1)
                faces.append(tri[::-1] if flip else tri)

    N = len(verts)
    regressor = np.zeros((J, N))
    for j, members in joint_members.items():
        regressor[j, members] = 1.0 / len(members)
    template = BodyTemplate(
        rest_vertices=np.array(verts),
        faces=np.array(faces, dtype=np.int64),
        parents=parents,
        skinning_weights=np.array(weights),
        shape_basis=np.array(basis),
        joint_regressor=regressor,
        metric_joint_map=METRIC_JOINT_MAP,
        joint_names=JOINT_NAMES,
        bone_radii=_BONE_RADII,
    )
    err = np.max(np.abs(rest_joints(template) - _JOINT_POSITIONS))
    if err > 1e-6:
        raise ValidationError(f"procedural template joint regressor off by {err:.3g} m")
    return template


def declared_joint_positions() -> np.ndarray:
    """Joint locations the procedural template is built around."""
    return _JOINT_POSITIONS.copy()


def chain_template(lengths: Sequence[float], vertices_per_joint: int = 4,
                   radius: float = 0.02) -> BodyTemplate:
    """Minimal serial chain along +x, one vertex ring per joint, rigid skinning.

    Useful for kinematics checks on small trees.
    """
    J = len(lengths) + 1
    positions = np.zeros((J, 3))
    positions[1:, 0] = np.cumsum(lengths)
    verts, weights = [], []
    regressor = np.zeros((J, J * vertices_per_joint))
    phis = 2 * np.pi * np.arange(vertices_per_joint) / vertices_per_joint
    for j in range(J):
        for k, phi in enumerate(phis):
            verts.append(positions[j] + radius * np.array([0.0, np.cos(phi), np.sin(phi)]))
            wrow = np.zeros(J)
            wrow[j] = 1.0
            weights.append(wrow)
            regressor[j, j * vertices_per_joint + k] = 1.0 / vertices_per_joint
    N = len(verts)
    return BodyTemplate(
        rest_vertices=np.array(verts),
        faces=np.zeros((0, 3), dtype=np.int64),
        parents=(0,) + tuple(range(J - 1)),
        skinning_weights=np.array(weights),
        shape_basis=np.zeros((N, 3, NUM_BETAS)),
        joint_regressor=regressor,
        metric_joint_map=tuple(range(J)),
        joint_names=tuple(f"j{j}" for j in range(J)),
        bone_radii=np.full(J, radius),
    )


# --------------------------------------------------------------------------
# file formats

_REQUIRED_KEYS = ("rest_vertices", "faces", "parents", "weights", "shape_basis",
                  "joint_regressor", "metric_joint_map")
_OPTIONAL_KEYS = ("joint_names", "bone_radii", "schema_version")
_IGNORED_KEYS = ("posedirs", "pose_blend_shapes")


def _sparse(matrix):
    rows, cols = np.nonzero(matrix)
    return {"format": "sparse", "shape": list(matrix.shape), "rows": rows.tolist(),
            "cols": cols.tolist(), "values": matrix[rows, cols].tolist()}


def _dense_from_field(name, value, shape):
    try:
        if isinstance(value, dict):
            if value.get("format") != "sparse":
                raise ValueError("unknown matrix format")
            m = np.zeros(tuple(value["shape"]))
            m[np.asarray(value["rows"], dtype=np.int64), np.asarray(value["cols"], dtype=np.int64)] = \
                np.asarray(value["values"], dtype=np.float64)
        else:
            m = np.asarray(value, dtype=np.float64)
    except (ValueError, TypeError, KeyError, IndexError) as exc:
        raise ValidationError(f"malformed field {name!r}: {exc}") from None
    if shape is not None and m.shape != shape:
        raise DimensionError(f"field {name!r} has shape {m.shape}, expected {shape}")
    return m


def template_to_dict(template: BodyTemplate) -> dict:
    return {
        "schema_version": 1,
        "rest_vertices": template.rest_vertices.tolist(),
        "faces": template.faces.tolist(),
        "parents": list(template.parents),
        "weights": _sparse(template.skinning_weights),
        "shape_basis": template.shape_basis.tolist(),
        "joint_regressor": _sparse(template.joint_regressor),
        "metric_joint_map": list(template.metric_joint_map),
        "joint_names": list(template.joint_names),
        "bone_radii": template.bone_radii.tolist(),
    }


def save_template(template: BodyTemplate, path) -> None:
    Path(path).write_text(json.dumps(template_to_dict(template)), encoding="utf-8")


def template_from_dict(doc: dict) -> BodyTemplate:
    if not isinstance(doc, dict):
        raise ValidationError("template document must be a JSON object")
    for key in _REQUIRED_KEYS:
        if key not in doc:
            raise ValidationError(f"malformed template: missing field {key!r}")
    for key in doc:
        if key in _IGNORED_KEYS:
            warnings.warn(f"template field {key!r} (pose-dependent blend data) is ignored", stacklevel=3)
        elif key not in _REQUIRED_KEYS and key not in _OPTIONAL_KEYS:
            log.warning("ignoring unknown template field %r", key)
    V = _dense_from_field("rest_vertices", doc["rest_vertices"], None)
    if V.ndim != 2 or V.shape[1] != 3:
        raise DimensionError(f"field 'rest_vertices' must be N x 3, got {V.shape}")
    N = V.shape[0]
    parents = doc["parents"]
    if not isinstance(parents, list) or not all(isinstance(p, int) for p in parents):
        raise ValidationError("malformed field 'parents': expected a list of integers")
    J = len(parents)
    faces = np.asarray(doc["faces"], dtype=np.int64).reshape(-1, 3) if doc["faces"] else np.zeros((0, 3), np.int64)
    return BodyTemplate(
        rest_vertices=V,
        faces=faces,
        parents=tuple(parents),
        skinning_weights=_dense_from_field("weights", doc["weights"], (N, J)),
        shape_basis=_dense_from_field("shape_basis", doc["shape_basis"], (N, 3, NUM_BETAS)),
        joint_regressor=_dense_from_field("joint_regressor", doc["joint_regressor"], (J, N)),
        metric_joint_map=tuple(doc["metric_joint_map"]),
        joint_names=tuple(doc.get("joint_names", ())),
        bone_radii=None if doc.get("bone_radii") is None else np.asarray(doc["bone_radii"], dtype=np.float64),
    )


def load_template(path) -> BodyTemplate:
    """Read and validate a JSON template file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"template file not found: {path}")
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise TemplateParseError("template is not valid UTF-8", offset=exc.start) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise TemplateParseError(f"cannot parse template {path.name}: {exc.msg}", offset=offset) from None
    return template_from_dict(doc)


def write_obj(path, vertices, faces, name: str | None = None) -> None:
    """Wavefront OBJ with vertices and triangular faces only."""
    lines = [] if name is None else [f"o {name}"]
    lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in np.asarray(vertices, dtype=np.float64).tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in np.asarray(faces, dtype=np.int64).tolist()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
