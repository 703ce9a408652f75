"""Joint and vertex error metrics for recovered body sequences.

Library functions are unit-agnostic; the CLI converts meters to millimeters.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .body_model import Joints3D, SkinnedMesh
from .errors import DegeneracyError, DimensionError, NumericError, ValidationError

_RANK_TOL = 1e-12


def _as_frames(x, name: str) -> np.ndarray:
    """Stack a sequence of point sets into an ``(M, P, 3)`` array."""
    if isinstance(x, (Joints3D,)):
        arr = x.joints[None]
    elif isinstance(x, SkinnedMesh):
        arr = x.vertices[None]
    elif isinstance(x, (list, tuple)) and x and isinstance(x[0], (Joints3D, SkinnedMesh)):
        arr = np.stack([f.joints if isinstance(f, Joints3D) else f.vertices for f in x])
    else:
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"{name} must be (M, P, 3) or (P, 3), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr.astype(np.float64, copy=False)


def _pair(pred, gt):
    p = _as_frames(pred, "pred")
    g = _as_frames(gt, "gt")
    if p.shape != g.shape:
        raise DimensionError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    return p, g


def mpjpe(pred, gt) -> float:
    """Mean Euclidean joint error over frames and joints."""
    p, g = _pair(pred, gt)
    return float(np.linalg.norm(p - g, axis=2).mean())


@dataclass(frozen=True)
class Similarity:
    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points) -> np.ndarray:
        return self.scale * np.asarray(points) @ self.rotation.T + self.translation


def procrustes_align(pred, gt) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Similarity ``(s, R, t)`` minimizing ``sum ||s R pred + t - gt||^2``.

    Reflections are excluded (``det R = +1``). Returns ``(s, R, t, aligned)``.
    """
    X = np.asarray(pred, dtype=np.float64)
    Y = np.asarray(gt, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[1] != 3:
        raise DimensionError(f"procrustes needs matching (P, 3) sets, got {X.shape} and {Y.shape}")
    if len(X) < 3:
        raise DegeneracyError(f"procrustes needs at least 3 points, got {len(X)}")
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mx, Y - my
    C = Xc.T @ Yc
    U, S, Vt = np.linalg.svd(C)
    if not S[0] > 0 or S[1] <= _RANK_TOL * S[0]:
        raise DegeneracyError(f"degenerate point configuration: cross-covariance rank < 2 "
                              f"(singular values {S[0]:.3g}, {S[1]:.3g})")
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, 1.0, d if d != 0 else 1.0])
    R = Vt.T @ D @ U.T
    s = float((S * np.diag(D)).sum() / (Xc * Xc).sum())
    t = my - s * R @ mx
    return s, R, t, s * X @ R.T + t


def _ssd(a, b) -> float:
    return float(((a - b) ** 2).sum())


def pa_mpjpe(pred, gt, return_frames: bool = False):
    """MPJPE after per-frame Procrustes alignment of pred onto gt."""
    p, g = _pair(pred, gt)
    errs = np.empty(len(p))
    for m in range(len(p)):
        aligned = procrustes_align(p[m], g[m])[3]
        before, after = _ssd(p[m], g[m]), _ssd(aligned, g[m])
        # the identity transform is feasible, so alignment can never lose
        if after > before + 1e-9 * (1.0 + before):
            raise NumericError(f"frame {m}: aligned SSD {after:.6g} exceeds unaligned {before:.6g}")
        errs[m] = np.linalg.norm(aligned - g[m], axis=1).mean()
    value = float(errs.mean())
    return (value, errs) if return_frames else value


def mpvpe(pred_meshes, gt_meshes, normalized: bool = True) -> float:
    """Per-frame sum of vertex errors averaged over frames; divided by N when normalized."""
    p, g = _pair(pred_meshes, gt_meshes)
    per_frame = np.linalg.norm(p - g, axis=2).sum(axis=1)
    value = per_frame.sum() / len(p)
    return float(value / p.shape[1]) if normalized else float(value)


def _check_p(p):
    if p not in (1, 2):
        raise ValidationError(f"p must be 1 or 2, got {p}")


def mrvpv(pred_meshes, p: int = 2) -> float:
    """Sum of frame-to-frame vertex displacements (l_p), divided by M."""
    _check_p(p)
    v = _as_frames(pred_meshes, "pred_meshes")
    if len(v) < 2:
        raise ValidationError(f"mrvpv needs at least 2 frames, got {len(v)}")
    step = np.linalg.norm(v[1:] - v[:-1], ord=p, axis=2)
    return float(step.sum() / len(v))


def mrsv(betas, p: int = 2) -> float:
    """Sum of frame-to-frame shape changes (l_p), divided by M."""
    _check_p(p)
    b = np.asarray(betas, dtype=np.float64)
    if b.ndim != 2:
        raise DimensionError(f"betas must be (M, 10), got shape {b.shape}")
    if b.shape[1] != 10:
        raise DimensionError(f"each beta must have 10 entries, got {b.shape[1]}")
    if len(b) < 2:
        raise ValidationError(f"mrsv needs at least 2 frames, got {len(b)}")
    return float(np.linalg.norm(b[1:] - b[:-1], ord=p, axis=1).sum() / len(b))


@dataclass(frozen=True)
class MetricReport:
    mpjpe: float
    pa_mpjpe: float
    mpvpe: float
    mrvpv_l1: float
    mrvpv_l2: float
    mrsv_l1: float
    mrsv_l2: float
    frame_count: int
    joint_count: int
    vertex_count: int

    def __post_init__(self):
        for name in ("mpjpe", "pa_mpjpe", "mpvpe", "mrvpv_l1", "mrvpv_l2", "mrsv_l1", "mrsv_l2"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")

    def to_dict(self) -> dict:
        return asdict(self)

    def scaled(self, factor: float) -> "MetricReport":
        """Lengths multiplied by ``factor`` (shape variation is unitless)."""
        d = self.to_dict()
        for name in ("mpjpe", "pa_mpjpe", "mpvpe", "mrvpv_l1", "mrvpv_l2"):
            d[name] *= factor
        return MetricReport(**d)


def evaluate_sequence(pred_joints, gt_joints, pred_vertices=None, gt_vertices=None,
                      pred_betas=None, normalized: bool = True) -> MetricReport:
    """All metrics for one sequence; vertex and shape terms are 0 when not supplied."""
    pj, gj = _pair(pred_joints, gt_joints)
    M, Q = pj.shape[:2]
    mpv = rv1 = rv2 = 0.0
    N = 0
    if pred_vertices is not None and gt_vertices is not None:
        pv, gv = _pair(pred_vertices, gt_vertices)
        if len(pv) != M:
            raise DimensionError(f"vertex frames {len(pv)} != joint frames {M}")
        N = pv.shape[1]
        mpv = mpvpe(pv, gv, normalized=normalized)
        if M >= 2:
            rv1, rv2 = mrvpv(pv, 1), mrvpv(pv, 2)
    rs1 = rs2 = 0.0
    if pred_betas is not None and M >= 2:
        rs1, rs2 = mrsv(pred_betas, 1), mrsv(pred_betas, 2)
    return MetricReport(mpjpe(pj, gj), pa_mpjpe(pj, gj), mpv, rv1, rv2, rs1, rs2, M, Q, N)


def mean_report(reports) -> MetricReport:
    """Frame-weighted mean of several reports."""
    reports = list(reports)
    if not reports:
        raise ValidationError("no reports to average")
    w = np.array([r.frame_count for r in reports], dtype=np.float64)
    d = {}
    for name in ("mpjpe", "pa_mpjpe", "mpvpe", "mrvpv_l1", "mrvpv_l2", "mrsv_l1", "mrsv_l2"):
        d[name] = float(np.dot(w, [getattr(r, name) for r in reports]) / w.sum())
    return MetricReport(**d, frame_count=int(w.sum()), joint_count=reports[0].joint_count,
                        vertex_count=reports[0].vertex_count)


TABLE_COLUMNS = (("MPJPE", "mpjpe"), ("PA-MPJPE", "pa_mpjpe"), ("MPVPE", "mpvpe"),
                 ("MRSV_1", "mrsv_l1"), ("MRSV_2", "mrsv_l2"),
                 ("MRVPV_1", "mrvpv_l1"), ("MRVPV_2", "mrvpv_l2"))


def format_table(rows: dict, precision: int = 1) -> str:
    """Aligned plain-text table; ``rows`` maps a row label to a MetricReport."""
    header = ["Sequence"] + [c for c, _ in TABLE_COLUMNS]
    body = [[label] + [f"{getattr(r, key):.{precision}f}" for _, key in TABLE_COLUMNS]
            for label, r in rows.items()]
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = []
    for n, row in enumerate([header] + body):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells))
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
