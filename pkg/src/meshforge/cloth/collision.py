"""Capsule collision proxies for the skinned body and particle projection."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import _kernels
from ..body_model import BodyPose, BodyShape, BodyTemplate, forward_kinematics, rest_joints
from ..errors import ValidationError

GIRTH_INDEX = 1
GIRTH_RATE = 0.1


@dataclass(frozen=True, eq=False)
class CapsuleSet:
    """Capsules ``(a[k], b[k], radius[k])`` in meters."""

    a: np.ndarray
    b: np.ndarray
    radius: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.a, dtype=np.float64).reshape(-1, 3)
        b = np.ascontiguousarray(self.b, dtype=np.float64).reshape(-1, 3)
        r = np.ascontiguousarray(self.radius, dtype=np.float64).reshape(-1)
        if len(a) != len(b) or len(a) != len(r):
            raise ValidationError("capsule arrays must have equal lengths")
        if np.any(r <= 0):
            raise ValidationError("capsule radii must be > 0")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValidationError("capsule endpoints must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "radius", r)

    def __len__(self):
        return len(self.radius)

    @classmethod
    def empty(cls) -> "CapsuleSet":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))

    def signed_distance(self, points) -> np.ndarray:
        """Distance of each point to the nearest capsule surface, ``(P,)``."""
        return self.closest(points)[0]

    def closest(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Signed distance to the nearest capsule surface and its outward normal."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(self) == 0:
            return np.full(len(p), np.inf), np.zeros((len(p), 3))
        ab = self.b - self.a
        denom = (ab * ab).sum(axis=1)
        safe = np.where(denom > 0, denom, 1.0)
        t = np.einsum("pkc,kc->pk", p[:, None, :] - self.a[None], ab) / safe
        t = np.clip(np.where(denom > 0, t, 0.0), 0.0, 1.0)
        diff = p[:, None, :] - (self.a[None] + t[..., None] * ab[None])
        dist = np.sqrt((diff * diff).sum(axis=2))
        k = np.argmin(dist - self.radius[None], axis=1)
        rows = np.arange(len(p))
        d = dist[rows, k]
        normal = diff[rows, k] / np.where(d > 1e-12, d, 1.0)[:, None]
        return d - self.radius[k], normal


def resolve_collisions(cloth, colliders: CapsuleSet, cfg, backend=None):
    """Push particles closer than ``collision_epsilon`` onto the offset surface.

    Normal velocity is removed and tangential velocity scaled by
    ``1 - friction``. Pinned particles are left alone.
    """
    if len(colliders) == 0:
        return cloth
    free = np.nonzero(~cloth.pinned_mask)[0]
    pos = np.ascontiguousarray(cloth.positions[free])
    vel = np.ascontiguousarray(cloth.velocities[free])
    _kernels.capsule_resolve(pos, vel, colliders.a, colliders.b, colliders.radius,
                             cfg.collision_epsilon, cfg.friction, backend=backend)
    x = cloth.positions.copy()
    v = cloth.velocities.copy()
    x[free] = pos
    v[free] = vel
    return replace(cloth, positions=x, velocities=v)


def posed_joint_positions(template: BodyTemplate, pose: BodyPose, shape: BodyShape | None = None) -> np.ndarray:
    G = forward_kinematics(template, pose, shape)
    J = rest_joints(template, shape)
    return np.einsum("kab,kb->ka", G[:, :3, :3], J) + G[:, :3, 3]


def body_colliders(template: BodyTemplate, pose: BodyPose, shape: BodyShape | None = None) -> CapsuleSet:
    """One capsule per bone between posed parent and child joints.

    Radii come from the template's bone table scaled by ``exp(0.1 * girth)``.
    """
    joints = posed_joint_positions(template, pose, shape)
    girth = 0.0 if shape is None else float(shape.beta[GIRTH_INDEX])
    children = np.arange(1, template.joint_count)
    parents = np.array([template.parents[c] for c in children], dtype=np.int64)
    radius = template.bone_radii[children] * np.exp(GIRTH_RATE * girth)
    return CapsuleSet(joints[parents], joints[children], radius)
