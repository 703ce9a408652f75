"""Pose sequences, pairwise pose distances, contrast-pair selection and
linear axis-angle interpolation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .body_model import NUM_BETAS, NUM_JOINTS, BodyPose, BodyShape
from .errors import DimensionError, TemplateParseError, ValidationError


@dataclass(frozen=True, eq=False)
class PoseSequence:
    """Ordered (pose, shape) frames sampled at ``fps``."""

    frames: tuple
    fps: float = 30.0

    def __post_init__(self):
        frames = tuple((pose, shape) for pose, shape in self.frames)
        if not frames:
            raise ValidationError("PoseSequence must contain at least one frame")
        if not self.fps > 0:
            raise ValidationError(f"fps must be > 0, got {self.fps}")
        count = frames[0][0].joint_count
        for i, (pose, shape) in enumerate(frames):
            if not isinstance(pose, BodyPose) or not isinstance(shape, BodyShape):
                raise ValidationError(f"frame {i} must be a (BodyPose, BodyShape) pair")
            if pose.joint_count != count:
                raise DimensionError(f"frame {i} has {pose.joint_count} joints, frame 0 has {count}")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "fps", float(self.fps))

    @classmethod
    def from_arrays(cls, thetas, betas=None, fps: float = 30.0) -> "PoseSequence":
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        if betas is None:
            betas = np.zeros((len(thetas), NUM_BETAS))
        betas = np.atleast_2d(np.asarray(betas, dtype=np.float64))
        if len(betas) == 1 and len(thetas) > 1:
            betas = np.repeat(betas, len(thetas), axis=0)
        return cls(tuple((BodyPose(t), BodyShape(b)) for t, b in zip(thetas, betas)), fps)

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def joint_count(self) -> int:
        return self.frames[0][0].joint_count

    @property
    def thetas(self) -> np.ndarray:
        return np.stack([p.theta for p, _ in self.frames])

    @property
    def betas(self) -> np.ndarray:
        return np.stack([s.beta for _, s in self.frames])

    def __eq__(self, other):
        if not isinstance(other, PoseSequence):
            return NotImplemented
        return (self.fps == other.fps and len(self) == len(other)
                and np.array_equal(self.thetas, other.thetas)
                and np.array_equal(self.betas, other.betas))

    __hash__ = None


@dataclass(frozen=True)
class InterpConfig:
    radians_per_frame: float = 0.05
    min_frames: int = 10
    max_frames: int = 300
    include_root: bool = True


def _theta(pose, include_root):
    return pose.theta if include_root else pose.theta[3:]


def pose_distance(a: BodyPose, b: BodyPose, include_root: bool = True) -> float:
    """L2 distance between flattened pose vectors."""
    if a.joint_count != b.joint_count:
        raise DimensionError(f"joint-count mismatch: {a.joint_count} vs {b.joint_count}")
    return float(np.linalg.norm(_theta(a, include_root) - _theta(b, include_root)))


def distance_matrix(X: PoseSequence, Y: PoseSequence, include_root: bool = True) -> np.ndarray:
    if X.joint_count != Y.joint_count:
        raise DimensionError(f"joint-count mismatch: {X.joint_count} vs {Y.joint_count}")
    A = X.thetas if include_root else X.thetas[:, 3:]
    B = Y.thetas if include_root else Y.thetas[:, 3:]
    # explicit differences rather than the Gram trick: exact zeros on equal rows
    return np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2))


def select_contrast_pair(D) -> tuple[int, int, float]:
    """Indices of the largest entry; ties go to the smallest row, then column."""
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.size == 0:
        raise ValidationError("distance matrix must be a non-empty 2-D array")
    if np.any(D < 0) or not np.all(np.isfinite(D)):
        raise ValidationError("distance matrix entries must be finite and nonnegative")
    flat = int(np.argmax(D))  # first occurrence in row-major order
    i, j = divmod(flat, D.shape[1])
    return i, j, float(D[i, j])


def frames_for_distance(dist: float, cfg: InterpConfig = InterpConfig()) -> int:
    if dist < 0:
        raise ValidationError(f"distance must be >= 0, got {dist}")
    k = math.ceil(dist / cfg.radians_per_frame)
    return int(min(max(k, cfg.min_frames), cfg.max_frames))


def interpolate(A: BodyPose, B: BodyPose, k: int, shape: BodyShape | None = None,
                fps: float = 30.0) -> PoseSequence:
    """``k`` frames linearly spaced on raw axis-angle coordinates, A to B inclusive."""
    if k < 2:
        raise ValidationError(f"interpolate needs k >= 2, got {k}")
    if A.joint_count != B.joint_count:
        raise DimensionError(f"joint-count mismatch: {A.joint_count} vs {B.joint_count}")
    shape = shape if shape is not None else BodyShape()
    frames = [(A, shape)]
    for i in range(1, k - 1):
        t = i / (k - 1)
        # convex form: the k=3 midpoint is exactly (A + B) / 2
        frames.append((BodyPose((1.0 - t) * A.theta + t * B.theta), shape))
    frames.append((B, shape))
    return PoseSequence(tuple(frames), fps)


def prepend_leadin(seq: PoseSequence, start: BodyPose, n: int) -> PoseSequence:
    """Smooth lead-in of ``n`` frames from ``start`` into the first frame of ``seq``."""
    if n < 0:
        raise ValidationError(f"lead-in length must be >= 0, got {n}")
    if n <= 1:
        return seq
    first_pose, first_shape = seq.frames[0]
    lead = interpolate(start, first_pose, n, shape=first_shape, fps=seq.fps)
    return PoseSequence(lead.frames + seq.frames[1:], seq.fps)


def contrast_sequence(X: PoseSequence, Y: PoseSequence | None = None,
                      cfg: InterpConfig = InterpConfig()) -> PoseSequence:
    """Novel sequence interpolating the most distant pose pair of X and Y.

    With ``Y=None`` the pair is drawn from X itself.
    """
    Y = X if Y is None else Y
    i, j, dist = select_contrast_pair(distance_matrix(X, Y, cfg.include_root))
    k = frames_for_distance(dist, cfg)
    pose_a, shape_a = X.frames[i]
    return interpolate(pose_a, Y.frames[j][0], k, shape=shape_a, fps=X.fps)


def t_pose(joint_count: int = NUM_JOINTS) -> BodyPose:
    return BodyPose.zeros(joint_count)


def save_sequence(seq: PoseSequence, path) -> None:
    """JSON-lines: header ``{"fps", "joint_count"}`` then one frame per line."""
    lines = [json.dumps({"fps": seq.fps, "joint_count": seq.joint_count})]
    for pose, shape in seq.frames:
        lines.append(json.dumps({"theta": pose.theta.tolist(), "beta": shape.beta.tolist()}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_sequence(path) -> PoseSequence:
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ValidationError(f"{path}: empty pose sequence file")
    try:
        header = json.loads(lines[0])
        fps = float(header["fps"])
        count = int(header.get("joint_count", NUM_JOINTS))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise TemplateParseError(f"{path}:1: bad header: {exc}") from None
    thetas, betas = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            theta = np.asarray(rec["theta"], dtype=np.float64)
            beta = np.asarray(rec.get("beta", [0.0] * NUM_BETAS), dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise TemplateParseError(f"{path}:{lineno}: bad frame record: {exc}") from None
        if theta.shape != (3 * count,):
            raise DimensionError(f"{path}:{lineno}: theta has {theta.size} values, expected {3 * count}")
        thetas.append(theta)
        betas.append(beta)
    if not thetas:
        raise ValidationError(f"{path}: no frames")
    return PoseSequence.from_arrays(np.array(thetas), np.array(betas), fps)
