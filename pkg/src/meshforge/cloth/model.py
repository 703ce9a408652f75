"""Cloth state, garment patterns and their construction into particle systems."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import TemplateParseError, ValidationError

STRETCH, SHEAR, BEND = 0, 1, 2
KIND_NAMES = ("stretch", "shear", "bend")


@dataclass(frozen=True)
class Material:
    """Spring constants (N/m), spring damping (N s/m) and areal density (kg/m^2)."""

    stretch: float = 5000.0
    shear: float = 500.0
    bend: float = 10.0
    stretch_damping: float = 0.5
    shear_damping: float = 0.05
    bend_damping: float = 0.005
    density: float = 0.15

    def stiffness(self, kind):
        return (self.stretch, self.shear, self.bend)[kind]

    def damping(self, kind):
        return (self.stretch_damping, self.shear_damping, self.bend_damping)[kind]


@dataclass
class ClothState:
    """Particles, springs and pin constraints.

    Pins hold particle ``pin_indices[k]`` at ``pin_anchors[k]``. When
    ``pin_body_vertex[k] >= 0`` the anchor follows that body vertex plus
    ``pin_offsets[k]`` (see :func:`update_pin_anchors`).
    """

    masses: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    spring_i: np.ndarray
    spring_j: np.ndarray
    rest_lengths: np.ndarray
    stiffness: np.ndarray
    spring_damping: np.ndarray
    kinds: np.ndarray
    pin_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    pin_anchors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    pin_body_vertex: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    pin_offsets: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    global_damping: float = 0.0
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    time: float = 0.0

    def __post_init__(self):
        self.masses = np.ascontiguousarray(self.masses, dtype=np.float64)
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.velocities = np.ascontiguousarray(self.velocities, dtype=np.float64).reshape(-1, 3)
        for name in ("spring_i", "spring_j", "kinds", "pin_indices", "pin_body_vertex"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.int64).reshape(-1))
        for name in ("rest_lengths", "stiffness", "spring_damping"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64).reshape(-1))
        self.pin_anchors = np.ascontiguousarray(self.pin_anchors, dtype=np.float64).reshape(-1, 3)
        self.pin_offsets = np.ascontiguousarray(self.pin_offsets, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.pin_body_vertex) == 0 and len(self.pin_indices):
            self.pin_body_vertex = np.full(len(self.pin_indices), -1, dtype=np.int64)
        if len(self.pin_offsets) == 0 and len(self.pin_indices):
            self.pin_offsets = np.zeros((len(self.pin_indices), 3))
        self.validate()

    @property
    def particle_count(self) -> int:
        return len(self.masses)

    @property
    def spring_count(self) -> int:
        return len(self.spring_i)

    def validate(self) -> None:
        n = self.particle_count
        if self.positions.shape != (n, 3) or self.velocities.shape != (n, 3):
            raise ValidationError("positions and velocities must be n x 3 with n = number of masses")
        if np.any(self.masses <= 0):
            raise ValidationError("particle masses must be > 0")
        m = self.spring_count
        for name in ("spring_j", "rest_lengths", "stiffness", "spring_damping", "kinds"):
            if len(getattr(self, name)) != m:
                raise ValidationError(f"spring array {name} has the wrong length")
        if m:
            if np.any(self.rest_lengths <= 0):
                raise ValidationError("spring rest lengths must be > 0")
            if np.any(self.spring_i == self.spring_j):
                raise ValidationError("springs must connect two distinct particles")
            if min(self.spring_i.min(), self.spring_j.min()) < 0 or max(self.spring_i.max(), self.spring_j.max()) >= n:
                raise ValidationError("spring endpoints must index particles")
        p = len(self.pin_indices)
        if self.pin_anchors.shape != (p, 3) or len(self.pin_body_vertex) != p or self.pin_offsets.shape != (p, 3):
            raise ValidationError("pin arrays must have matching lengths")
        if p and (self.pin_indices.min() < 0 or self.pin_indices.max() >= n):
            raise ValidationError("pins must index particles")
        if len(np.unique(self.pin_indices)) != p:
            raise ValidationError("a particle may carry at most one pin")

    def copy(self) -> "ClothState":
        return replace(self, positions=self.positions.copy(), velocities=self.velocities.copy(),
                       pin_anchors=self.pin_anchors.copy())

    @property
    def pinned_mask(self) -> np.ndarray:
        mask = np.zeros(self.particle_count, dtype=bool)
        mask[self.pin_indices] = True
        return mask

    def with_pins(self, indices, anchors=None, body_vertex=None, offsets=None) -> "ClothState":
        indices = np.asarray(indices, dtype=np.int64).reshape(-1)
        anchors = self.positions[indices].copy() if anchors is None else anchors
        body_vertex = np.full(len(indices), -1) if body_vertex is None else body_vertex
        offsets = np.zeros((len(indices), 3)) if offsets is None else offsets
        return replace(self, pin_indices=indices, pin_anchors=anchors, pin_body_vertex=body_vertex,
                       pin_offsets=offsets)


def update_pin_anchors(cloth: ClothState, body_vertices) -> ClothState:
    """Move body-tracking anchors onto the current body surface."""
    track = cloth.pin_body_vertex >= 0
    if not np.any(track):
        return cloth
    anchors = cloth.pin_anchors.copy()
    anchors[track] = np.asarray(body_vertices)[cloth.pin_body_vertex[track]] + cloth.pin_offsets[track]
    return replace(cloth, pin_anchors=anchors)


@dataclass(frozen=True)
class Panel:
    """Rectangular particle grid; particle ``(r, c)`` has local index ``r * cols + c``.

    ``placement`` positions the grid in space: ``{"kind": "plane", "origin",
    "u", "v"}`` (columns along ``u``, rows along ``v``) or ``{"kind":
    "cylinder", "center", "radius"}`` (columns wrap around +z, rows descend).
    """

    rows: int
    cols: int
    spacing: float
    density: float = 0.15
    placement: dict | None = None

    def local_index(self, r, c) -> int:
        return r * self.cols + c

    def edge(self, side: str) -> list:
        if side == "top":
            return [self.local_index(0, c) for c in range(self.cols)]
        if side == "bottom":
            return [self.local_index(self.rows - 1, c) for c in range(self.cols)]
        if side == "left":
            return [self.local_index(r, 0) for r in range(self.rows)]
        if side == "right":
            return [self.local_index(r, self.cols - 1) for r in range(self.rows)]
        raise ValidationError(f"unknown panel edge {side!r}")

    def positions(self) -> np.ndarray:
        r, c = np.meshgrid(np.arange(self.rows), np.arange(self.cols), indexing="ij")
        r, c = r.ravel().astype(float), c.ravel().astype(float)
        place = self.placement or {"kind": "plane"}
        kind = place.get("kind", "plane")
        if kind == "plane":
            origin = np.asarray(place.get("origin", (0.0, 0.0, 0.0)), dtype=np.float64)
            u = np.asarray(place.get("u", (1.0, 0.0, 0.0)), dtype=np.float64)
            v = np.asarray(place.get("v", (0.0, 1.0, 0.0)), dtype=np.float64)
            u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
            return origin + self.spacing * (c[:, None] * u + r[:, None] * v)
        if kind == "cylinder":
            center = np.asarray(place.get("center", (0.0, 0.0, 0.0)), dtype=np.float64)
            radius = float(place.get("radius", self.spacing * (self.cols - 1) / (2 * math.pi)))
            phi = 2 * math.pi * c / (self.cols - 1)
            return center + np.stack([radius * np.cos(phi), radius * np.sin(phi),
                                      -self.spacing * r], axis=1)
        raise ValidationError(f"unknown panel placement {kind!r}")


@dataclass(frozen=True)
class Seam:
    """Merge ``panel_a`` local indices ``run_a`` pairwise with ``panel_b``'s ``run_b``."""

    panel_a: int
    run_a: tuple
    panel_b: int
    run_b: tuple


@dataclass(frozen=True)
class Pin:
    """Pin particle ``(row, col)`` of ``panel``.

    ``body_vertex`` = ``None`` pins at the placed position, an integer tracks
    that body vertex, ``"nearest"`` tracks the nearest rest-body vertex.
    """

    panel: int
    row: int
    col: int
    body_vertex: int | str | None = None


@dataclass(frozen=True)
class GarmentPattern:
    panels: tuple
    seams: tuple = ()
    pins: tuple = ()
    material: Material = Material()

    def __post_init__(self):
        if not self.panels:
            raise ValidationError("garment needs at least one panel")
        for k, p in enumerate(self.panels):
            if p.rows < 1 or p.cols < 1:
                raise ValidationError(f"panel {k}: rows and cols must be >= 1")
            if not p.spacing > 0:
                raise ValidationError(f"panel {k}: spacing must be > 0")
            if not p.density > 0:
                raise ValidationError(f"panel {k}: density must be > 0")
        for s in self.seams:
            if len(s.run_a) != len(s.run_b):
                raise ValidationError("seam runs must have equal length")


def build_garment(pattern: GarmentPattern, body_rest_vertices=None) -> ClothState:
    """Assemble the particle system: lumped masses, stretch/shear/bend springs,
    merged seams and pins."""
    mat = pattern.material
    offsets, total = [], 0
    for p in pattern.panels:
        offsets.append(total)
        total += p.rows * p.cols

    # seams: union-find over global indices
    parent = list(range(total))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    used = set()
    for s in pattern.seams:
        for pa, run, other in ((s.panel_a, s.run_a, s.panel_b), (s.panel_b, s.run_b, s.panel_a)):
            if not 0 <= pa < len(pattern.panels):
                raise ValidationError(f"seam references missing panel {pa}")
            size = pattern.panels[pa].rows * pattern.panels[pa].cols
            for li in run:
                if not 0 <= li < size:
                    raise ValidationError(f"seam index {li} outside panel {pa}")
        keys = [(s.panel_a, li) for li in s.run_a] + [(s.panel_b, li) for li in s.run_b]
        for key in keys:
            if key in used:
                raise ValidationError(f"overlapping seam indices: panel {key[0]} particle {key[1]} used twice")
            used.add(key)
        for la, lb in zip(s.run_a, s.run_b):
            ra, rb = find(offsets[s.panel_a] + la), find(offsets[s.panel_b] + lb)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    roots = [find(g) for g in range(total)]
    uniq = sorted(set(roots))
    remap = {r: k for k, r in enumerate(uniq)}
    gid = np.array([remap[r] for r in roots], dtype=np.int64)
    n = len(uniq)

    raw_pos = np.concatenate([p.positions() for p in pattern.panels])
    positions = np.zeros((n, 3))
    counts = np.zeros(n)
    np.add.at(positions, gid, raw_pos)
    np.add.at(counts, gid, 1.0)
    positions /= counts[:, None]

    masses = np.zeros(n)
    springs = {}
    faces = []
    for p, off in zip(pattern.panels, offsets):
        cell_mass = p.density * p.spacing * p.spacing / 4.0
        for r in range(p.rows - 1):
            for c in range(p.cols - 1):
                quad = [gid[off + p.local_index(r + dr, c + dc)] for dr, dc in ((0, 0), (0, 1), (1, 1), (1, 0))]
                for q in quad:
                    masses[q] += cell_mass
                faces.append((quad[0], quad[1], quad[2]))
                faces.append((quad[0], quad[2], quad[3]))

        def add(r0, c0, r1, c1, kind, rest):
            if not (0 <= r1 < p.rows and 0 <= c1 < p.cols):
                return
            a, b = gid[off + p.local_index(r0, c0)], gid[off + p.local_index(r1, c1)]
            if a == b:
                return
            key = (min(a, b), max(a, b))
            springs.setdefault(key, (kind, rest))

        s = p.spacing
        for r in range(p.rows):
            for c in range(p.cols):
                add(r, c, r, c + 1, STRETCH, s)
                add(r, c, r + 1, c, STRETCH, s)
        for r in range(p.rows):
            for c in range(p.cols):
                add(r, c, r + 1, c + 1, SHEAR, s * math.sqrt(2.0))
                if c + 1 < p.cols:
                    add(r, c + 1, r + 1, c, SHEAR, s * math.sqrt(2.0))
        for r in range(p.rows):
            for c in range(p.cols):
                add(r, c, r, c + 2, BEND, 2 * s)
                add(r, c, r + 2, c, BEND, 2 * s)

    if np.any(masses <= 0):
        # single-row or single-column panels have no cells; give them a line mass
        for p, off in zip(pattern.panels, offsets):
            if p.rows == 1 or p.cols == 1:
                for li in range(p.rows * p.cols):
                    masses[gid[off + li]] += p.density * p.spacing * p.spacing
    keys = sorted(springs)
    si = np.array([k[0] for k in keys], dtype=np.int64)
    sj = np.array([k[1] for k in keys], dtype=np.int64)
    kinds = np.array([springs[k][0] for k in keys], dtype=np.int64)
    rest = np.array([springs[k][1] for k in keys], dtype=np.float64)
    stiff = np.array([mat.stiffness(k) for k in kinds], dtype=np.float64)
    damp = np.array([mat.damping(k) for k in kinds], dtype=np.float64)

    pin_idx, pin_vertex, pin_off = [], [], []
    for pin in pattern.pins:
        panel = pattern.panels[pin.panel]
        g = int(gid[offsets[pin.panel] + panel.local_index(pin.row, pin.col)])
        if pin.body_vertex is None:
            vidx, off = -1, np.zeros(3)
        else:
            if body_rest_vertices is None:
                raise ValidationError("body-tracking pins need the rest body vertices")
            body = np.asarray(body_rest_vertices)
            if pin.body_vertex == "nearest":
                vidx = int(np.argmin(((body - positions[g]) ** 2).sum(axis=1)))
            else:
                vidx = int(pin.body_vertex)
            off = positions[g] - body[vidx]
        pin_idx.append(g)
        pin_vertex.append(vidx)
        pin_off.append(off)
    pin_idx = np.array(pin_idx, dtype=np.int64)
    return ClothState(
        masses=masses, positions=positions, velocities=np.zeros((n, 3)),
        spring_i=si, spring_j=sj, rest_lengths=rest, stiffness=stiff, spring_damping=damp,
        kinds=kinds, pin_indices=pin_idx, pin_anchors=positions[pin_idx].copy(),
        pin_body_vertex=np.array(pin_vertex, dtype=np.int64),
        pin_offsets=np.array(pin_off).reshape(-1, 3), faces=np.array(faces, dtype=np.int64).reshape(-1, 3),
    )


# --------------------------------------------------------------------------
# pattern files

_PANEL_KEYS = {"rows", "cols", "spacing", "density", "placement"}


def pattern_to_dict(pattern: GarmentPattern) -> dict:
    return {
        "schema_version": 1,
        "panels": [{"rows": p.rows, "cols": p.cols, "spacing": p.spacing, "density": p.density,
                    **({"placement": p.placement} if p.placement else {})} for p in pattern.panels],
        "seams": [{"panel_a": s.panel_a, "run_a": list(s.run_a), "panel_b": s.panel_b,
                   "run_b": list(s.run_b)} for s in pattern.seams],
        "pins": [{"panel": p.panel, "row": p.row, "col": p.col,
                  **({"body_vertex": p.body_vertex} if p.body_vertex is not None else {})}
                 for p in pattern.pins],
        "material": dict(vars(pattern.material)),
    }


def pattern_from_dict(doc: dict) -> GarmentPattern:
    try:
        panels = []
        for k, p in enumerate(doc["panels"]):
            extra = set(p) - _PANEL_KEYS
            if extra:
                raise ValidationError(f"panel {k}: unknown keys {sorted(extra)}")
            panels.append(Panel(int(p["rows"]), int(p["cols"]), float(p["spacing"]),
                                float(p.get("density", Material.density)), p.get("placement")))
        seams = []
        for s in doc.get("seams", []):
            if "edge_a" in s:
                run_a = panels[s["panel_a"]].edge(s["edge_a"])
                run_b = panels[s["panel_b"]].edge(s["edge_b"])
                if s.get("reverse"):
                    run_b = run_b[::-1]
            else:
                run_a, run_b = s["run_a"], s["run_b"]
            seams.append(Seam(int(s["panel_a"]), tuple(run_a), int(s["panel_b"]), tuple(run_b)))
        pins = tuple(Pin(int(p["panel"]), int(p["row"]), int(p["col"]), p.get("body_vertex"))
                     for p in doc.get("pins", []))
        material = Material(**doc.get("material", {}))
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError(f"malformed garment pattern: {exc!r}") from None
    return GarmentPattern(tuple(panels), tuple(seams), pins, material)


def save_pattern(pattern: GarmentPattern, path) -> None:
    Path(path).write_text(json.dumps(pattern_to_dict(pattern), indent=1), encoding="utf-8")


def load_pattern(path) -> GarmentPattern:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TemplateParseError(f"cannot parse garment {path}: {exc.msg}",
                                 offset=len(text[: exc.pos].encode("utf-8"))) from None
    return pattern_from_dict(doc)


def skirt_pattern(rows: int = 8, cols: int = 25, spacing: float = 0.04,
                  waist_height: float = 0.02, pin_every: int = 2) -> GarmentPattern:
    """Tube skirt around the procedural body's pelvis, waist pinned to the body."""
    panel = Panel(rows, cols, spacing, placement={
        "kind": "cylinder", "center": [0.0, 0.0, waist_height],
        "radius": spacing * (cols - 1) / (2 * math.pi)})
    seam = Seam(0, tuple(panel.edge("left")), 0, tuple(panel.edge("right")))
    pins = tuple(Pin(0, 0, c, "nearest") for c in range(0, cols - 1, pin_every))
    return GarmentPattern((panel,), (seam,), pins)


def cape_pattern(rows: int = 10, cols: int = 9, spacing: float = 0.05) -> GarmentPattern:
    """Rectangular cape hanging behind the shoulders, top edge pinned."""
    width = spacing * (cols - 1)
    panel = Panel(rows, cols, spacing, placement={
        "kind": "plane", "origin": [-width / 2, -0.16, 0.5], "u": [1.0, 0.0, 0.0], "v": [0.0, 0.0, -1.0]})
    pins = tuple(Pin(0, 0, c, "nearest") for c in range(cols))
    return GarmentPattern((panel,), (), pins)
