"""Sequence synthesis: skinning, cloth, camera rig, projection and dataset I/O."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import _kernels
from .body_model import (
    METRIC_JOINT_MAP, BodyPose, BodyTemplate, regress_joints, save_template,
    shaped_vertices, skin,
)
from .cloth import (
    ClothState, GarmentPattern, SimConfig, body_colliders, build_garment, pattern_to_dict, step,
    update_pin_anchors,
)
from .errors import DatasetError, DegeneracyError, DimensionError, ValidationError
from .pose_sequence import PoseSequence, prepend_leadin, t_pose

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
VIEWPOINTS = ("E", "W", "S", "N")
_VIEW_AXES = {"E": (1.0, 0.0, 0.0), "W": (-1.0, 0.0, 0.0), "N": (0.0, 1.0, 0.0), "S": (0.0, -1.0, 0.0)}
_WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class SceneConfig:
    """Camera rig, optics and variation seed.

    ``light_strengths`` are drawn from the seed in [0.3, 1.0] when omitted.
    """

    seed: int = 0
    viewpoints: tuple = VIEWPOINTS
    light_strengths: tuple | None = None
    resolution: tuple = (250, 250)
    sensor_mm: float = 32.0
    focal_mm: float = 180.0
    camera_distance: float = 6.0
    preview: str = "silhouette"
    preview_every: int = 1
    cloth_snapshot_every: int = 10
    settle_seconds: float = 0.5
    leadin_frames: int = 10

    def __post_init__(self):
        views = tuple(self.viewpoints)
        if not views:
            raise ValidationError("at least one viewpoint is required")
        for v in views:
            if v not in VIEWPOINTS:
                raise ValidationError(f"unknown viewpoint {v!r}; expected a subset of {VIEWPOINTS}")
        if len(set(views)) != len(views):
            raise ValidationError("viewpoints must be distinct")
        res = self.resolution
        res = (int(res), int(res)) if np.isscalar(res) else tuple(int(r) for r in res)
        if len(res) != 2 or min(res) <= 0:
            raise ValidationError(f"resolution must be two positive integers, got {self.resolution}")
        if not (self.sensor_mm > 0 and self.focal_mm > 0 and self.camera_distance > 0):
            raise ValidationError("sensor_mm, focal_mm and camera_distance must be > 0")
        if self.preview not in ("silhouette", "depth", "none"):
            raise ValidationError(f"preview must be silhouette, depth or none, got {self.preview!r}")
        if self.preview_every < 1 or self.cloth_snapshot_every < 1:
            raise ValidationError("preview_every and cloth_snapshot_every must be >= 1")
        if self.settle_seconds < 0 or self.leadin_frames < 0:
            raise ValidationError("settle_seconds and leadin_frames must be >= 0")
        seed = int(self.seed)
        if not 0 <= seed < 2 ** 64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        lights = self.light_strengths
        if lights is None:
            lights = np.random.default_rng(seed).uniform(0.3, 1.0, size=4)
        lights = tuple(float(x) for x in lights)
        if len(lights) != 4:
            raise ValidationError(f"light_strengths needs 4 values, got {len(lights)}")
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "viewpoints", views)
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "light_strengths", lights)

    @property
    def focal_px(self) -> float:
        return self.focal_mm / self.sensor_mm * self.resolution[0]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["viewpoints"] = list(self.viewpoints)
        d["light_strengths"] = list(self.light_strengths)
        d["resolution"] = list(self.resolution)
        return d


# --------------------------------------------------------------------------
# cameras


@dataclass(frozen=True, eq=False)
class PerspectiveCamera:
    """Pinhole camera. Camera frame: x right, y down, z along the view direction."""

    position: np.ndarray
    look_at: np.ndarray
    focal_mm: float = 180.0
    sensor_mm: float = 32.0
    resolution: tuple = (250, 250)

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        at = np.asarray(self.look_at, dtype=np.float64).reshape(3)
        if not np.any(pos != at):
            raise DegeneracyError("camera position coincides with look_at")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "look_at", at)
        object.__setattr__(self, "resolution", tuple(int(r) for r in self.resolution))

    @property
    def focal_px(self) -> float:
        return self.focal_mm / self.sensor_mm * self.resolution[0]

    @property
    def principal_point(self) -> np.ndarray:
        return np.array([self.resolution[0] / 2.0, self.resolution[1] / 2.0])

    @property
    def rotation(self) -> np.ndarray:
        """World-to-camera rotation (rows are the camera axes in world coordinates)."""
        fwd = self.look_at - self.position
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, _WORLD_UP)
        if np.linalg.norm(right) < 1e-9:
            right = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
        right = right / np.linalg.norm(right)
        down = np.cross(fwd, right)
        return np.stack([right, down, fwd])

    def to_camera(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return (p - self.position) @ self.rotation.T

    def with_resolution(self, resolution) -> "PerspectiveCamera":
        return PerspectiveCamera(self.position, self.look_at, self.focal_mm, self.sensor_mm, resolution)

    def to_dict(self) -> dict:
        return {"position": self.position.tolist(), "look_at": self.look_at.tolist(),
                "focal_mm": self.focal_mm, "sensor_mm": self.sensor_mm,
                "resolution": list(self.resolution)}

    @classmethod
    def from_dict(cls, d) -> "PerspectiveCamera":
        return cls(d["position"], d["look_at"], float(d["focal_mm"]), float(d["sensor_mm"]),
                   tuple(d["resolution"]))

    def __eq__(self, other):
        if not isinstance(other, PerspectiveCamera):
            return NotImplemented
        return (np.array_equal(self.position, other.position) and np.array_equal(self.look_at, other.look_at)
                and self.focal_mm == other.focal_mm and self.sensor_mm == other.sensor_mm
                and self.resolution == other.resolution)

    __hash__ = None


def project_camera_points(camera: PerspectiveCamera, cam_points) -> tuple[np.ndarray, np.ndarray]:
    """Project points already expressed in the camera frame."""
    P = np.asarray(cam_points, dtype=np.float64).reshape(-1, 3)
    at_center = np.all(P == 0.0, axis=1)
    if np.any(at_center):
        raise DegeneracyError(f"point {int(np.nonzero(at_center)[0][0])} lies at the camera's optical center")
    z = P[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = camera.focal_px * P[:, :2] / z[:, None] + camera.principal_point
    W, H = camera.resolution
    visible = (z > 0) & (uv[:, 0] >= 0) & (uv[:, 0] < W) & (uv[:, 1] >= 0) & (uv[:, 1] < H)
    return uv, visible


def perspective_project(camera: PerspectiveCamera, points) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates ``(P, 2)`` and in-frame visibility of world points.

    Points behind the camera are invisible.
    """
    return project_camera_points(camera, camera.to_camera(points))


def place_camera_rig(pelvis_track, cfg: SceneConfig) -> dict:
    """Per viewpoint, one camera per frame at ``camera_distance`` from the pelvis."""
    track = np.asarray(pelvis_track, dtype=np.float64).reshape(-1, 3)
    if len(track) == 0:
        raise ValidationError("pelvis track is empty")
    rig = {}
    for view in cfg.viewpoints:
        offset = cfg.camera_distance * np.asarray(_VIEW_AXES[view])
        rig[view] = [PerspectiveCamera(p + offset, p, cfg.focal_mm, cfg.sensor_mm, cfg.resolution)
                     for p in track]
    return rig


# --------------------------------------------------------------------------
# annotations


@dataclass(frozen=True, eq=False)
class AnnotatedFrame:
    """Ground truth for one frame seen from one camera.

    ``joints3d`` is in the camera frame; vertices are in the world frame.
    """

    theta: np.ndarray
    beta: np.ndarray
    joints3d: np.ndarray
    keypoints2d: np.ndarray
    visibility: np.ndarray
    body_vertices: np.ndarray
    camera: PerspectiveCamera
    cloth_vertices: np.ndarray | None = None

    def __post_init__(self):
        for name in ("theta", "beta", "joints3d", "keypoints2d", "body_vertices"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        object.__setattr__(self, "visibility", np.asarray(self.visibility, dtype=bool))
        if self.cloth_vertices is not None:
            object.__setattr__(self, "cloth_vertices", np.asarray(self.cloth_vertices, dtype=np.float64).reshape(-1, 3))
        Q = len(self.joints3d)
        if self.joints3d.shape != (Q, 3) or self.keypoints2d.shape != (Q, 2) or self.visibility.shape != (Q,):
            raise DimensionError("joints3d, keypoints2d and visibility must agree on the joint count")
        if self.beta.shape != (10,) or self.theta.ndim != 1 or self.theta.size % 3:
            raise DimensionError("theta must be 3K+3 values and beta 10 values")

    def check_projection(self, tol: float = 1e-6) -> float:
        """Max pixel deviation of keypoints from the projection of joints3d.

        Raises ValidationError when the deviation or visibility disagrees.
        """
        uv, vis = project_camera_points(self.camera, self.joints3d)
        err = float(np.max(np.abs(uv - self.keypoints2d))) if len(uv) else 0.0
        if not err <= tol:
            raise ValidationError(f"keypoints deviate from projected joints by {err:.3g} px")
        if not np.array_equal(vis, self.visibility):
            raise ValidationError("visibility flags disagree with the in-frame test")
        return err

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.tolist(), "beta": self.beta.tolist(),
            "joints3d": self.joints3d.tolist(), "keypoints2d": self.keypoints2d.tolist(),
            "visibility": self.visibility.astype(int).tolist(),
            "body_vertices": self.body_vertices.tolist(),
            "cloth_vertices": None if self.cloth_vertices is None else self.cloth_vertices.tolist(),
            "camera": self.camera.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "AnnotatedFrame":
        cloth = d.get("cloth_vertices")
        return cls(np.asarray(d["theta"], dtype=np.float64), np.asarray(d["beta"], dtype=np.float64),
                   np.asarray(d["joints3d"], dtype=np.float64).reshape(-1, 3),
                   np.asarray(d["keypoints2d"], dtype=np.float64).reshape(-1, 2),
                   np.asarray(d["visibility"], dtype=bool),
                   np.asarray(d["body_vertices"], dtype=np.float64).reshape(-1, 3),
                   PerspectiveCamera.from_dict(d["camera"]),
                   None if cloth is None else np.asarray(cloth, dtype=np.float64))

    def __eq__(self, other):
        if not isinstance(other, AnnotatedFrame):
            return NotImplemented
        same_cloth = ((self.cloth_vertices is None and other.cloth_vertices is None)
                      or (self.cloth_vertices is not None and other.cloth_vertices is not None
                          and np.array_equal(self.cloth_vertices, other.cloth_vertices)))
        return (same_cloth and self.camera == other.camera
                and all(np.array_equal(getattr(self, n), getattr(other, n))
                        for n in ("theta", "beta", "joints3d", "keypoints2d", "visibility", "body_vertices")))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SequenceAnnotation:
    frames: tuple
    fps: float
    view: str
    provenance: dict = field(default_factory=dict)
    light_strengths: tuple = ()
    cloth_faces: np.ndarray | None = None

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValidationError("a sequence annotation needs at least one frame")
        b0 = frames[0].beta
        for i, f in enumerate(frames):
            if not np.array_equal(f.beta, b0):
                raise ValidationError(f"beta changes at frame {i}; one avatar keeps a constant shape")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "fps", float(self.fps))
        object.__setattr__(self, "light_strengths", tuple(float(x) for x in self.light_strengths))
        if self.cloth_faces is not None:
            object.__setattr__(self, "cloth_faces", np.asarray(self.cloth_faces, dtype=np.int64).reshape(-1, 3))

    def __len__(self):
        return len(self.frames)

    def __eq__(self, other):
        if not isinstance(other, SequenceAnnotation):
            return NotImplemented
        faces_eq = ((self.cloth_faces is None) == (other.cloth_faces is None)
                    and (self.cloth_faces is None or np.array_equal(self.cloth_faces, other.cloth_faces)))
        return (self.fps == other.fps and self.view == other.view and self.provenance == other.provenance
                and self.light_strengths == other.light_strengths and faces_eq
                and self.frames == other.frames)

    __hash__ = None


def config_hash(*parts) -> str:
    """Short stable digest of JSON-serializable configuration parts."""
    blob = json.dumps(parts, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    if hasattr(o, "__dataclass_fields__"):
        return {f.name: getattr(o, f.name) for f in fields(o)}
    raise TypeError(f"cannot serialize {type(o).__name__}")


# --------------------------------------------------------------------------
# generation


def _substeps(fps: float, h: float) -> int:
    return max(1, int(round(1.0 / (fps * h))))


class _ClothDriver:
    """Advances a garment alongside the animated body."""

    def __init__(self, template, garment, shape, sim_cfg, scene_cfg, fps):
        self.template = template
        self.sim = sim_cfg
        self.n_sub = _substeps(fps, sim_cfg.timestep)
        rest = shaped_vertices(template, shape)
        self.state = build_garment(garment, body_rest_vertices=rest)
        self.shape = shape
        rest_pose = t_pose(template.joint_count)
        self.body = rest
        self.colliders = body_colliders(template, rest_pose, shape)
        settle = int(math.ceil(scene_cfg.settle_seconds / sim_cfg.timestep))
        for _ in range(settle):
            self.state = step(self.state, self.colliders, sim_cfg)

    def advance(self, pose: BodyPose, body_vertices: np.ndarray) -> ClothState:
        colliders = body_colliders(self.template, pose, self.shape)
        prev = self.body
        for k in range(self.n_sub):
            # pins follow the body linearly across substeps
            a = (k + 1) / self.n_sub
            self.state = update_pin_anchors(self.state, (1.0 - a) * prev + a * body_vertices)
            self.state = step(self.state, colliders, self.sim)
        self.body = body_vertices
        return self.state


def generate_sequence(poses: PoseSequence, template: BodyTemplate, garment: GarmentPattern | None = None,
                      cfg: SceneConfig = SceneConfig(), sim_cfg: SimConfig = SimConfig(),
                      source_id: str = "sequence") -> dict:
    """Annotated frames for every viewpoint, keyed by view name.

    The garment, if any, is simulated once in the world frame and shared by
    all views. Output is a deterministic function of the inputs.
    """
    if poses.joint_count != template.joint_count:
        raise DimensionError(f"pose sequence has {poses.joint_count} joints, template has {template.joint_count}")
    shape = poses.frames[0][1]
    for i, (_, s) in enumerate(poses.frames):
        if not np.array_equal(s.beta, shape.beta):
            raise ValidationError(f"frame {i} changes beta; generate one avatar per sequence")

    cloth = None
    if garment is not None:
        cloth = _ClothDriver(template, garment, shape, sim_cfg, cfg, poses.fps)
        lead = prepend_leadin(poses, t_pose(template.joint_count), cfg.leadin_frames)
        for pose, _ in lead.frames[:max(cfg.leadin_frames - 1, 0)]:
            cloth.advance(pose, skin(template, shape, pose).vertices)

    bodies, joints, cloth_frames = [], [], []
    for pose, _ in poses.frames:
        verts = skin(template, shape, pose).vertices
        bodies.append(verts)
        joints.append(regress_joints(verts, template).joints)
        cloth_frames.append(None if cloth is None else cloth.advance(pose, verts).positions.copy())

    pelvis = np.array([j[0] for j in joints])
    rig = place_camera_rig(pelvis, cfg)
    provenance = {"source": source_id, "seed": cfg.seed,
                  "config_hash": config_hash(cfg.to_dict(), asdict(sim_cfg),
                                             None if garment is None else pattern_to_dict(garment))}
    out = {}
    for view in cfg.viewpoints:
        frames = []
        for f, (pose, shp) in enumerate(poses.frames):
            cam = rig[view][f]
            j_cam = cam.to_camera(joints[f])
            uv, vis = project_camera_points(cam, j_cam)
            frames.append(AnnotatedFrame(pose.theta.copy(), shp.beta.copy(), j_cam, uv, vis,
                                         bodies[f], cam, cloth_frames[f]))
        out[view] = SequenceAnnotation(tuple(frames), poses.fps, view, provenance, cfg.light_strengths,
                                       None if cloth is None else cloth.state.faces)
    return out


def transfer(recovered, template: BodyTemplate, garment: GarmentPattern | None = None,
             cfg: SceneConfig = SceneConfig(), sim_cfg: SimConfig = SimConfig(), fps: float = 30.0,
             source_id: str = "transfer") -> dict:
    """Re-animate the template with recovered poses.

    ``recovered`` holds per-frame objects with ``theta`` and ``beta`` (or an
    ``(F, 88)`` array in recovery-vector layout). The shape is the mean beta.
    """
    if isinstance(recovered, np.ndarray):
        arr = np.atleast_2d(recovered)
        n_theta = 3 * template.joint_count
        thetas, betas = arr[:, :n_theta], arr[:, n_theta:n_theta + 10]
    else:
        recovered = list(recovered)
        if not recovered:
            raise ValidationError("no recovered frames to transfer")
        thetas = np.stack([np.asarray(r.theta, dtype=np.float64) for r in recovered])
        betas = np.stack([np.asarray(r.beta, dtype=np.float64) for r in recovered])
    if not (np.all(np.isfinite(thetas)) and np.all(np.isfinite(betas))):
        raise ValidationError("recovered vectors must be finite")
    beta = betas.mean(axis=0)
    seq = PoseSequence.from_arrays(thetas, np.repeat(beta[None], len(thetas), axis=0), fps)
    return generate_sequence(seq, template, garment, cfg, sim_cfg, source_id)


# --------------------------------------------------------------------------
# previews


def rasterize_preview(frame: AnnotatedFrame, mode: str = "silhouette", body_faces=None, cloth_faces=None,
                      resolution=None, backend=None) -> np.ndarray:
    """Silhouette (uint8 0/1) or camera-space depth (float, +inf background).

    ``resolution`` re-renders at another pixel size with the same optics.
    """
    if mode not in ("silhouette", "depth"):
        raise ValidationError(f"mode must be silhouette or depth, got {mode!r}")
    cam = frame.camera if resolution is None else frame.camera.with_resolution(
        (resolution, resolution) if np.isscalar(resolution) else resolution)
    W, H = cam.resolution
    zbuf = np.full((H, W), np.inf)
    meshes = []
    if body_faces is not None and len(body_faces):
        meshes.append((frame.body_vertices, body_faces))
    if cloth_faces is not None and frame.cloth_vertices is not None and len(cloth_faces):
        meshes.append((frame.cloth_vertices, cloth_faces))
    for verts, faces in meshes:
        P = cam.to_camera(verts)
        z = P[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            screen = cam.focal_px * P[:, :2] / np.where(z > 0, z, 1.0)[:, None] + cam.principal_point
        _kernels.rasterize(screen, z, faces, zbuf, near=1e-6, backend=backend)
    if mode == "silhouette":
        return np.isfinite(zbuf).astype(np.uint8)
    return zbuf


def write_pgm(path, image) -> None:
    """Binary PGM: silhouettes as 8-bit 0/255, depth as 16-bit millimeters (0 = background)."""
    img = np.asarray(image)
    if img.dtype == np.uint8:
        data, maxval = (img * 255).astype(">u1"), 255
    else:
        mm = np.where(np.isfinite(img), np.clip(np.round(img * 1000.0), 1, 65535), 0)
        data, maxval = mm.astype(">u2"), 65535
    H, W = img.shape
    Path(path).write_bytes(f"P5\n{W} {H}\n{maxval}\n".encode("ascii") + data.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise DatasetError(f"{path}: not a binary PGM file")
    W, H, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    dtype = ">u1" if maxval < 256 else ">u2"
    return np.frombuffer(parts[4], dtype=dtype, count=W * H).reshape(H, W).copy()


# --------------------------------------------------------------------------
# dataset directories


def _line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def export_dataset(sequences: dict, directory, template: BodyTemplate | None = None,
                   preview: str = "silhouette", preview_every: int = 1, cloth_snapshot_every: int = 10) -> Path:
    """Write ``{sequence_id: {view: SequenceAnnotation}}`` to ``directory``.

    Layout: ``manifest.json``, optional ``template.json`` and, per sequence
    directory, ``annot_<view>.jsonl``, ``preview_<view>/%05d.pgm`` and
    ``cloth_<view>.obj``.
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    body_faces = None
    if template is not None:
        save_template(template, root / "template.json")
        body_faces = template.faces
    entries, total = [], 0
    for seq_id in sorted(sequences):
        views = sequences[seq_id]
        seq_dir = root / seq_id
        seq_dir.mkdir(exist_ok=True)
        first = views[sorted(views)[0]]
        for view in sorted(views):
            ann = views[view]
            lines = [_line(f.to_dict()) for f in ann.frames]
            (seq_dir / f"annot_{view}.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
            if preview != "none" and body_faces is not None:
                pdir = seq_dir / f"preview_{view}"
                pdir.mkdir(exist_ok=True)
                for i in range(0, len(ann), preview_every):
                    img = rasterize_preview(ann.frames[i], preview, body_faces, ann.cloth_faces)
                    write_pgm(pdir / f"{i:05d}.pgm", img)
            if ann.cloth_faces is not None and ann.frames[0].cloth_vertices is not None:
                _write_cloth_obj(seq_dir / f"cloth_{view}.obj", ann, cloth_snapshot_every)
        entries.append({
            "id": seq_id, "views": sorted(views), "frame_count": len(first), "fps": first.fps,
            "seed": first.provenance.get("seed"), "config_hash": first.provenance.get("config_hash"),
            "source": first.provenance.get("source"), "light_strengths": list(first.light_strengths),
            "cloth_faces": None if first.cloth_faces is None else first.cloth_faces.tolist(),
        })
        total += len(first)
    manifest = {"schema_version": SCHEMA_VERSION, "frame_count": total, "sequences": entries,
                "metric_joint_map": list(METRIC_JOINT_MAP if template is None else template.metric_joint_map),
                "template": "template.json" if template is not None else None}
    (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return root


def _write_cloth_obj(path, ann: SequenceAnnotation, every: int):
    lines, base = [], 0
    for i in range(0, len(ann), every):
        v = ann.frames[i].cloth_vertices
        lines.append(f"o frame_{i:05d}")
        lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in v.tolist()]
        lines += [f"f {a + base + 1} {b + base + 1} {c + base + 1}" for a, b, c in ann.cloth_faces.tolist()]
        base += len(v)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    if not path.is_file():
        raise DatasetError(f"{path}: manifest not found")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DatasetError(f"{path}: schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")
    return manifest


def load_annotations(path) -> list:
    path = Path(path)
    frames = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                frames.append(AnnotatedFrame.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: bad annotation record: {exc}") from None
    if not frames:
        raise DatasetError(f"{path}: no annotation records")
    return frames


def import_dataset(directory) -> dict:
    """Inverse of :func:`export_dataset` (previews and OBJ snapshots are not read)."""
    root = Path(directory)
    manifest = read_manifest(root)
    out = {}
    for entry in manifest["sequences"]:
        seq_id = entry["id"]
        faces = entry.get("cloth_faces")
        views = {}
        for view in entry["views"]:
            frames = load_annotations(root / seq_id / f"annot_{view}.jsonl")
            if len(frames) != entry["frame_count"]:
                raise DatasetError(f"{root / seq_id / f'annot_{view}.jsonl'}: {len(frames)} frames, "
                                   f"manifest says {entry['frame_count']}")
            provenance = {"source": entry.get("source"), "seed": entry.get("seed"),
                          "config_hash": entry.get("config_hash")}
            views[view] = SequenceAnnotation(tuple(frames), entry["fps"], view, provenance,
                                             tuple(entry.get("light_strengths", ())),
                                             None if faces is None else np.asarray(faces, dtype=np.int64))
        out[seq_id] = views
    return out


def dataset_template(directory) -> BodyTemplate | None:
    from .body_model import load_template
    manifest = read_manifest(directory)
    name = manifest.get("template")
    return None if name is None else load_template(Path(directory) / name)


def sequence_seed(base_seed: int, index: int) -> int:
    """Independent 64-bit seed for the ``index``-th sequence of a run."""
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1, dtype=np.uint64)[0])
