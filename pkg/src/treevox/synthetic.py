"""Procedural capsule trees with analytic ground truth, plus virtual rigs.

Trees are unions of capsules (cylinders with hemispherical caps), so every
cross-section of a branch interior is locally a sphere — the same model the
diameter estimator assumes — and silhouettes can be ray-cast analytically.

Ground-truth angles follow the measurement convention: the angle between
the child direction and the *backward* parent direction (from the junction
toward the parent's origin). A child continuing its parent's line scores
180 degrees, a perpendicular child 90.

Virtual rigs pose a pinhole camera on rings around the tree:

* desk rig — 24 poses, 640x480, one camera, two stacked rings;
* full rig — 56 views, 1900x1200, two cameras (lower/upper ring) sharing
  28 stops.

A seed jitters pose placement, so repeated runs exercise different voxel/
view alignments. ``calibration_set`` factors each world-to-camera matrix A
into the robot chain A = Z B X^-1 with randomized (but seeded) X and Z, so
a scene bundle rehearses the full calibration file round trip.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import (
    CalibrationSet,
    CameraIntrinsics,
    CameraView,
    HomogeneousTransform,
    compose,
    invert,
    pixel_rays,
    project,
    save_calibration,
)
from .segmentation import ColorImage, SilhouetteMap, save_color_image, save_silhouette
from .traits import BranchTraitReport, BranchTraits

_EPS = 1e-9


# ---------------------------------------------------------------------------
# Tree model
# ---------------------------------------------------------------------------


@dataclass
class Branch:
    """One capsule: start/end points (mm), radius (mm), parent branch index (-1 = root)."""

    start: np.ndarray
    end: np.ndarray
    radius: float
    parent: int = -1

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float).reshape(3)
        self.end = np.asarray(self.end, dtype=float).reshape(3)
        if self.radius <= 0:
            raise ValueError("branch radius must be positive")
        if np.allclose(self.start, self.end):
            raise ValueError("branch must have distinct endpoints")

    @property
    def direction(self) -> np.ndarray:
        d = self.end - self.start
        return d / np.linalg.norm(d)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


@dataclass
class SyntheticTree:
    branches: list

    def __post_init__(self):
        for i, b in enumerate(self.branches):
            if b.parent >= i or b.parent < -1:
                raise ValueError(f"branch {i} has invalid parent {b.parent} (must precede it)")
            if b.parent >= 0:
                p = self.branches[b.parent]
                if _point_segment_distance(b.start, p.start, p.end) > 1e-9:
                    raise ValueError(f"branch {i} does not start on its parent's axis")

    def capsules(self) -> list:
        return [(b.start, b.end, b.radius) for b in self.branches]

    def bounds(self) -> tuple:
        lo = np.min([np.minimum(b.start, b.end) - b.radius for b in self.branches], axis=0)
        hi = np.max([np.maximum(b.start, b.end) + b.radius for b in self.branches], axis=0)
        return lo, hi

    def transformed(self, t: HomogeneousTransform) -> "SyntheticTree":
        return SyntheticTree(
            [Branch(t.apply(b.start), t.apply(b.end), b.radius, b.parent) for b in self.branches]
        )


def ground_truth(tree: SyntheticTree) -> BranchTraitReport:
    """Analytic traits per branch; angle vs. the backward parent direction.

    A branch with no children ends in a free hemispherical cap, so its
    physical length runs one radius past the axis endpoint.
    """
    has_child = {b.parent for b in tree.branches if b.parent >= 0}
    branches = []
    for i, b in enumerate(tree.branches):
        if b.parent < 0:
            angle, flags = None, ["root-branch"]
        else:
            parent = tree.branches[b.parent]
            cosang = float(np.clip(b.direction @ (-parent.direction), -1.0, 1.0))
            angle, flags = float(np.degrees(np.arccos(cosang))), []
        length = b.length if i in has_child else b.length + b.radius
        branches.append(
            BranchTraits(
                branch_id=f"b{i}",
                junction=b.start.copy(),
                diameter=2.0 * b.radius,
                length=length,
                angle=angle,
                flags=flags,
                direction=b.direction.copy(),
            )
        )
    return BranchTraitReport(branches, {"source": "analytic"})


# ---------------------------------------------------------------------------
# Scene presets
# ---------------------------------------------------------------------------


@dataclass
class SyntheticScene:
    """A renderable scene: optional tree, plus bare primitives for test shapes."""

    name: str
    region_min: np.ndarray
    region_max: np.ndarray
    tree: SyntheticTree | None = None
    capsules: list = field(default_factory=list)   # (p0, p1, r) without tree semantics
    boxes: list = field(default_factory=list)      # (bmin, bmax)

    def __post_init__(self):
        self.region_min = np.asarray(self.region_min, dtype=float).reshape(3)
        self.region_max = np.asarray(self.region_max, dtype=float).reshape(3)

    def all_capsules(self) -> list:
        caps = list(self.capsules)
        if self.tree is not None:
            caps += self.tree.capsules()
        return caps


def _child(attach_z, azimuth_deg, back_angle_deg, length, radius, parent=0, trunk_xy=(0.0, 0.0)):
    """Capsule leaving a vertical trunk: back_angle is measured against straight
    down (the backward trunk direction), so 90 = horizontal, >90 = rising."""
    phi = np.radians(azimuth_deg)
    alpha = np.radians(back_angle_deg)
    d = np.array([np.sin(alpha) * np.cos(phi), np.sin(alpha) * np.sin(phi), -np.cos(alpha)])
    start = np.array([trunk_xy[0], trunk_xy[1], attach_z], dtype=float)
    return Branch(start, start + length * d, radius, parent)


def scene_tree_a() -> SyntheticScene:
    """Trunk plus a whorl of four primaries at the trunk top.

    Diameters: trunk 34.5 mm, children 14.1 / 17.5 / 16.1 / 23.0 mm.
    """
    trunk = Branch((0, 0, 0), (0, 0, 500.0), 17.25, -1)
    kids = [
        _child(500.0, 0, 90, 300.0, 7.05),
        _child(500.0, 90, 100, 340.0, 8.75),
        _child(500.0, 180, 90, 400.0, 8.05),
        _child(500.0, 270, 115, 350.0, 11.5),
    ]
    tree = SyntheticTree([trunk] + kids)
    # region offsets put the trunk axis and the whorl height on voxel centers
    # at the default 3 mm final resolution
    return SyntheticScene("tree_a", (-430.5, -430.5, -2.5), (430.5, 430.5, 700), tree=tree)


def scene_angle_fan() -> SyntheticScene:
    """Thin trunk with four well-separated children at 30/45/60/75 degrees
    (vs. the backward trunk direction) — the angle-accuracy scene.

    A junction vertex lands where the child and parent cores stop sharing
    voxels, i.e. displaced down the parent by roughly
    (r_parent + r_child + webbing) / tan(angle).  At 30 degrees that offset
    tilts the measured child chord by atan(offset / d_angle)-- the dominant
    angle error — so this scene keeps every radius small and is meant to be
    carved at 1.5 mm (6 -> 1.5 hierarchy) with the close-in desk rig; see
    preset_settings().
    """
    trunk = Branch((0, 0, 0), (0, 0, 600.0), 3.0, -1)
    kids = [
        _child(500.0, 0, 30, 200.0, 3.5),
        _child(398.0, 90, 45, 200.0, 3.5),
        _child(299.0, 180, 60, 200.0, 3.5),
        _child(200.0, 270, 75, 200.0, 3.5),
    ]
    tree = SyntheticTree([trunk] + kids)
    # region offsets put the trunk axis and the attachment heights on voxel
    # centers at the 1.5 mm final resolution
    return SyntheticScene(
        "angle_fan", (-200.25, -200.25, -0.25), (200.25, 200.25, 620), tree=tree
    )


def scene_cylinder() -> SyntheticScene:
    """Single vertical branch, 30 mm diameter, 400 mm long."""
    tree = SyntheticTree([Branch((0, 0, 0), (0, 0, 400.0), 15.0, -1)])
    # x/y offsets put the axis on a voxel-center column at 3 mm resolution
    return SyntheticScene("cylinder", (-61.5, -61.5, 0), (61.5, 61.5, 450), tree=tree)


def scene_sphere() -> SyntheticScene:
    """Floating 50 mm-radius sphere — the hull-containment test shape."""
    c = np.array([0.0, 0.0, 350.0])
    return SyntheticScene("sphere", (-80, -80, 270), (80, 80, 430), capsules=[(c, c, 50.0)])


def scene_cube() -> SyntheticScene:
    """Axis-aligned 100 mm cube."""
    return SyntheticScene(
        "cube", (-80, -80, 270), (80, 80, 430),
        boxes=[(np.array([-50.0, -50.0, 300.0]), np.array([50.0, 50.0, 400.0]))],
    )


PRESETS = {
    "tree_a": scene_tree_a,
    "angle_fan": scene_angle_fan,
    "cylinder": scene_cylinder,
    "sphere": scene_sphere,
    "cube": scene_cube,
}


def preset_settings(name: str) -> dict:
    """Recommended carve resolution and rig geometry for a preset scene.

    Most presets use the stock 12 -> 3 mm hierarchy and the default rig.
    angle_fan carves 6 -> 1.5 mm — junction webbing scales with voxel size
    and drives the measured-angle bias at acute angles — and pulls the rig
    in so the pixel footprint (~1.5 mm at radius 900) keeps up with the
    finer grid.
    """
    if name == "angle_fan":
        return {
            "initial_voxel_size": 6.0,
            "final_voxel_size": 1.5,
            "rig": {
                "ring_radius": 900.0,
                "upper_radius": 600.0,
                "upper_height": 1000.0,
                "target_height": 300.0,
            },
        }
    return {"initial_voxel_size": 12.0, "final_voxel_size": 3.0, "rig": {}}


def save_scene(path: str | Path, scene: SyntheticScene) -> None:
    doc = {
        "name": scene.name,
        "region_min": list(scene.region_min),
        "region_max": list(scene.region_max),
        "branches": None
        if scene.tree is None
        else [
            {"start": list(b.start), "end": list(b.end), "radius": b.radius, "parent": b.parent}
            for b in scene.tree.branches
        ],
        "capsules": [[list(p0), list(p1), r] for p0, p1, r in scene.capsules],
        "boxes": [[list(a), list(b)] for a, b in scene.boxes],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_scene(path: str | Path) -> SyntheticScene:
    doc = json.loads(Path(path).read_text())
    tree = None
    if doc.get("branches"):
        tree = SyntheticTree(
            [Branch(b["start"], b["end"], b["radius"], b["parent"]) for b in doc["branches"]]
        )
    return SyntheticScene(
        doc["name"],
        doc["region_min"],
        doc["region_max"],
        tree=tree,
        capsules=[(np.array(p0), np.array(p1), r) for p0, p1, r in doc.get("capsules", [])],
        boxes=[(np.array(a), np.array(b)) for a, b in doc.get("boxes", [])],
    )


# ---------------------------------------------------------------------------
# Virtual rig
# ---------------------------------------------------------------------------


def _axis_angle(axis, degrees: float) -> np.ndarray:
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    th = np.radians(degrees)
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(th) * k + (1 - np.cos(th)) * (k @ k)


def look_at(camera_pos, target, up=(0, 0, 1.0)) -> HomogeneousTransform:
    """World-to-camera transform with +z forward and image rows running down."""
    pos = np.asarray(camera_pos, dtype=float)
    f = np.asarray(target, dtype=float) - pos
    f = f / np.linalg.norm(f)
    upv = np.asarray(up, dtype=float)
    x = np.cross(f, upv)
    if np.linalg.norm(x) < 1e-9:  # looking straight along up
        x = np.cross(f, np.array([0.0, 1.0, 0.0]))
    x = x / np.linalg.norm(x)
    y = np.cross(f, x)
    r = np.stack([x, y, f])
    return HomogeneousTransform(r, -r @ pos)


def _random_rigid(rng, max_rot_deg: float, max_trans_mm: float) -> HomogeneousTransform:
    axis = rng.normal(size=3)
    axis = axis / np.linalg.norm(axis)
    rot = _axis_angle(axis, rng.uniform(-max_rot_deg, max_rot_deg))
    return HomogeneousTransform(rot, rng.uniform(-max_trans_mm, max_trans_mm, size=3))


@dataclass
class VirtualRig:
    intrinsics: dict                 # camera_id -> CameraIntrinsics
    poses: list                      # (pose_index, camera_id, world-to-camera A)
    target: np.ndarray               # mm, point every pose faces

    def views(self, silhouettes: list | None = None) -> list:
        order = sorted(range(len(self.poses)), key=lambda i: (self.poses[i][0], self.poses[i][1]))
        out = []
        for rank, i in enumerate(order):
            j, c, a = self.poses[i]
            sil = silhouettes[rank] if silhouettes is not None else None
            out.append(CameraView(c, j, self.intrinsics[c], a, sil))
        return out

    def calibration_set(self, seed: int = 0) -> CalibrationSet:
        """Factor every pose as A = Z B X^-1 with seeded nontrivial X and Z."""
        rng = np.random.default_rng(seed)
        x = _random_rigid(rng, 30.0, 400.0)
        z = {c: _random_rigid(rng, 15.0, 150.0) for c in sorted(self.intrinsics)}
        b = {}
        for j, c, a in self.poses:
            b[(j, c)] = compose(invert(z[c]), compose(a, x))
        return CalibrationSet(x=x, z=z, b=b, intrinsics=dict(self.intrinsics))


def desk_rig(
    seed: int = 0,
    k1: float = 0.0,
    k2: float = 0.0,
    ring_radius: float = 1200.0,
    upper_radius: float = 900.0,
    upper_height: float = 1350.0,
    target_height: float = 350.0,
) -> VirtualRig:
    """24 poses at 640x480: 16 on a level ring, 8 looking down from above.

    The default ring radius at fx 600 puts the pixel footprint near 2 mm at
    the subject, comfortably under a 3 mm final voxel size; pass a smaller
    radius when carving finer grids.
    """
    intr = CameraIntrinsics(600.0, 600.0, 319.5, 239.5, k1, k2, 640, 480)
    target = np.array([0.0, 0.0, target_height])
    rng = np.random.default_rng(seed)
    poses = []
    j = 1
    for k in range(16):
        az = 2 * np.pi * k / 16 + rng.uniform(-0.07, 0.07)
        rad = ring_radius + rng.uniform(-40, 40)
        z = target_height + rng.uniform(-30, 30)
        pos = np.array([rad * np.cos(az), rad * np.sin(az), z])
        poses.append((j, 1, look_at(pos, target + rng.uniform(-15, 15, size=3))))
        j += 1
    for k in range(8):
        az = 2 * np.pi * (k + 0.5) / 8 + rng.uniform(-0.07, 0.07)
        rad = upper_radius + rng.uniform(-40, 40)
        z = upper_height + rng.uniform(-30, 30)
        pos = np.array([rad * np.cos(az), rad * np.sin(az), z])
        poses.append((j, 1, look_at(pos, target + rng.uniform(-15, 15, size=3))))
        j += 1
    return VirtualRig({1: intr}, poses, target)


def full_rig(seed: int = 0) -> VirtualRig:
    """56 views at 1900x1200: 28 stops, camera 1 on a low ring, camera 2 high."""
    intr = CameraIntrinsics(1600.0, 1600.0, 949.5, 599.5, 0.0, 0.0, 1900, 1200)
    target = np.array([0.0, 0.0, 600.0])
    rng = np.random.default_rng(seed)
    poses = []
    for j in range(1, 29):
        az = 2 * np.pi * (j - 1) / 28 + rng.uniform(-0.04, 0.04)
        rad = 2800.0 + rng.uniform(-60, 60)
        pos1 = np.array([rad * np.cos(az), rad * np.sin(az), 300.0 + rng.uniform(-40, 40)])
        pos2 = np.array(
            [(rad - 300) * np.cos(az), (rad - 300) * np.sin(az), 1900.0 + rng.uniform(-40, 40)]
        )
        poses.append((j, 1, look_at(pos1, target + rng.uniform(-20, 20, size=3))))
        poses.append((j, 2, look_at(pos2, target + rng.uniform(-20, 20, size=3))))
    return VirtualRig({1: intr, 2: intr}, poses, target)


RIGS = {"desk": desk_rig, "full": full_rig}


# ---------------------------------------------------------------------------
# Analytic silhouette rendering
# ---------------------------------------------------------------------------


def _capsule_hits(origin, dirs, p0, p1, r) -> np.ndarray:
    """Boolean: does the ray origin + t*dirs (t > 0) meet the capsule."""
    n = dirs.shape[0]
    hits = np.zeros(n, dtype=bool)
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    axis = p1 - p0
    length = float(np.linalg.norm(axis))

    if length > _EPS:
        ah = axis / length
        m = origin - p0
        ma = float(m @ ah)
        da = dirs @ ah
        d_perp = dirs - da[:, None] * ah
        m_perp = m - ma * ah
        a = (d_perp ** 2).sum(axis=1)
        b = 2.0 * d_perp @ m_perp
        c = float(m_perp @ m_perp) - r * r
        disc = b * b - 4 * a * c
        ok = (a > _EPS) & (disc >= 0)
        sq = np.sqrt(np.maximum(disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-b - sq) / (2 * a)
            t2 = (-b + sq) / (2 * a)
            par = np.abs(da) < _EPS
            safe = np.where(par, 1.0, da)
            ts1 = (0.0 - ma) / safe
            ts2 = (length - ma) / safe
        lo_s = np.where(par, -np.inf, np.minimum(ts1, ts2))
        hi_s = np.where(par, np.inf, np.maximum(ts1, ts2))
        s_ok = np.where(par, (ma >= 0) & (ma <= length), True)
        lo = np.maximum(np.maximum(t1, _EPS), lo_s)
        hi = np.minimum(t2, hi_s)
        hits |= ok & s_ok & (hi >= lo)

    dd = (dirs ** 2).sum(axis=1)
    caps = [p0] if length <= _EPS else [p0, p1]
    for p in caps:
        m = origin - p
        b = 2.0 * dirs @ m
        c = float(m @ m) - r * r
        disc = b * b - 4 * dd * c
        ok = disc >= 0
        t2 = (-b + np.sqrt(np.maximum(disc, 0.0))) / (2 * dd)
        hits |= ok & (t2 >= _EPS)
    return hits


def _box_hits(origin, dirs, bmin, bmax) -> np.ndarray:
    """Boolean slab test for an axis-aligned box."""
    tmin = np.full(dirs.shape[0], _EPS)
    tmax = np.full(dirs.shape[0], np.inf)
    for ax in range(3):
        d = dirs[:, ax]
        zero = np.abs(d) < _EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            safe = np.where(zero, 1.0, d)
            t_lo = (bmin[ax] - origin[ax]) / safe
            t_hi = (bmax[ax] - origin[ax]) / safe
        near = np.minimum(t_lo, t_hi)
        far = np.maximum(t_lo, t_hi)
        inside = (origin[ax] >= bmin[ax]) & (origin[ax] <= bmax[ax])
        near = np.where(zero, np.where(inside, -np.inf, np.inf), near)
        far = np.where(zero, np.where(inside, np.inf, -np.inf), far)
        tmin = np.maximum(tmin, near)
        tmax = np.minimum(tmax, far)
    return tmax >= tmin


def _pixel_window(view: CameraView, corners: np.ndarray):
    """Image-space bounding window of a convex corner set, or None when off-frame."""
    w, h = view.intrinsics.width, view.intrinsics.height
    u, v, in_front = project(view, corners)
    if not in_front.all():
        # some geometry behind the image plane: fall back to the full frame
        return (0, w - 1, 0, h - 1) if in_front.any() else None
    c0 = int(np.floor(u.min())) - 2
    c1 = int(np.ceil(u.max())) + 2
    r0 = int(np.floor(v.min())) - 2
    r1 = int(np.ceil(v.max())) + 2
    if c1 < 0 or r1 < 0 or c0 > w - 1 or r0 > h - 1:
        return None
    return max(c0, 0), min(c1, w - 1), max(r0, 0), min(r1, h - 1)


def _corners(lo, hi) -> np.ndarray:
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])


def render_primitives(view: CameraView, capsules=(), boxes=(), supersample: int = 1) -> SilhouetteMap:
    """Silhouette by analytic ray casting through pixel centers.

    supersample > 1 averages an s x s subpixel grid per pixel, giving soft
    coverage probabilities at the outline instead of a hard 0/1 edge.
    """
    k = view.intrinsics
    if k.k1 != 0 or k.k2 != 0:
        raise ValueError("analytic rendering requires a distortion-free view")
    s = int(supersample)
    if s < 1:
        raise ValueError("supersample must be >= 1")
    out = np.zeros((k.height, k.width), dtype=np.float64)
    offsets = (np.arange(s) + 0.5) / s - 0.5

    def splat(window, hit_fn):
        if window is None:
            return
        c0, c1, r0, r1 = window
        cols = np.arange(c0, c1 + 1)
        rows = np.arange(r0, r1 + 1)
        cc, rr = np.meshgrid(cols, rows)
        acc = np.zeros(cc.size, dtype=np.float64)
        for du in offsets:
            for dv in offsets:
                origin, dirs = pixel_rays(view, cc.ravel() + du, rr.ravel() + dv)
                acc += hit_fn(origin, dirs)
        patch = out[r0 : r1 + 1, c0 : c1 + 1]
        np.maximum(patch, acc.reshape(rr.shape) / (s * s), out=patch)

    for p0, p1, r in capsules:
        lo = np.minimum(p0, p1) - r
        hi = np.maximum(p0, p1) + r
        splat(_pixel_window(view, _corners(lo, hi)),
              lambda o, d, p0=p0, p1=p1, r=r: _capsule_hits(o, d, p0, p1, r))
    for bmin, bmax in boxes:
        splat(_pixel_window(view, _corners(bmin, bmax)),
              lambda o, d, bmin=bmin, bmax=bmax: _box_hits(o, d, bmin, bmax))
    return SilhouetteMap(out)


def render_silhouette(tree: SyntheticTree, view: CameraView, supersample: int = 1) -> SilhouetteMap:
    return render_primitives(view, capsules=tree.capsules(), supersample=supersample)


def render_scene(scene: SyntheticScene, rig: VirtualRig, supersample: int = 3) -> list:
    """One silhouette per rig view, in the rig's (pose, camera) order."""
    return [
        render_primitives(v, capsules=scene.all_capsules(), boxes=scene.boxes,
                          supersample=supersample)
        for v in rig.views()
    ]


def compose_color_image(
    silmap: SilhouetteMap,
    fg_rgb=(128, 128, 128),
    bg_rgb=(0, 0, 255),
    noise_std: float = 0.0,
    seed: int = 0,
) -> ColorImage:
    """Flat-shaded color frame: foreground color where the map says tree."""
    mask = silmap.probabilities >= 0.5
    px = np.where(mask[..., None], np.array(fg_rgb, float), np.array(bg_rgb, float))
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        px = px + rng.normal(0.0, noise_std, size=px.shape)
    return ColorImage(np.clip(np.rint(px), 0, 255).astype(np.uint8))


# ---------------------------------------------------------------------------
# Silhouette perturbation (inconsistency injection)
# ---------------------------------------------------------------------------


def perturb_silhouettes(
    maps: list,
    flip_fraction: float,
    seed: int,
    view_fraction: float = 0.2,
    region_radius: int = 3,
) -> list:
    """Erode/dilate random boundary disks in a random subset of views.

    Picks round(view_fraction * n) views; in each, chooses boundary-centered
    disks (alternately set to background/foreground) so that roughly
    flip_fraction of the silhouette boundary is disturbed. Deterministic for
    a fixed seed; flip_fraction 0 returns the input maps unchanged.
    """
    if not 0.0 <= flip_fraction <= 0.2:
        raise ValueError("flip_fraction must lie in [0, 0.2]")
    if flip_fraction == 0 or not maps:
        return list(maps)
    rng = np.random.default_rng(seed)
    n_pick = max(1, int(round(view_fraction * len(maps))))
    chosen = set(rng.choice(len(maps), size=min(n_pick, len(maps)), replace=False).tolist())

    dy, dx = np.mgrid[-region_radius : region_radius + 1, -region_radius : region_radius + 1]
    disk = np.argwhere(dy ** 2 + dx ** 2 <= region_radius ** 2) - region_radius

    out = []
    for i, m in enumerate(maps):
        if i not in chosen:
            out.append(m)
            continue
        probs = m.probabilities.copy()
        binary = probs >= 0.5
        inner = binary & ~_erode4(binary)
        outer = ~binary & _dilate4(binary)
        boundary = np.argwhere(inner | outer)
        if len(boundary) == 0:
            out.append(m)
            continue
        n_regions = max(1, int(round(flip_fraction * len(boundary) / (2 * region_radius + 1))))
        picks = rng.choice(len(boundary), size=min(n_regions, len(boundary)), replace=False)
        h, w = probs.shape
        for k, bi in enumerate(picks):
            cy, cx = boundary[bi]
            ys = np.clip(cy + disk[:, 0], 0, h - 1)
            xs = np.clip(cx + disk[:, 1], 0, w - 1)
            probs[ys, xs] = 1.0 if k % 2 else 0.0
        out.append(SilhouetteMap(probs))
    return out


def _erode4(b: np.ndarray) -> np.ndarray:
    out = b.copy()
    out[1:] &= b[:-1]
    out[:-1] &= b[1:]
    out[:, 1:] &= b[:, :-1]
    out[:, :-1] &= b[:, 1:]
    return out


def _dilate4(b: np.ndarray) -> np.ndarray:
    out = b.copy()
    out[1:] |= b[:-1]
    out[:-1] |= b[1:]
    out[:, 1:] |= b[:, :-1]
    out[:, :-1] |= b[:, 1:]
    return out


# ---------------------------------------------------------------------------
# Analytic voxelization (oracle for carve-free tests)
# ---------------------------------------------------------------------------


def voxelize_capsules(capsules, origin, voxel_size: float, dims) -> np.ndarray:
    """Occupancy by the center-in-shape rule, computed analytically."""
    origin = np.asarray(origin, dtype=float)
    dims = tuple(int(d) for d in dims)
    occ = np.zeros(dims, dtype=bool)
    for p0, p1, r in capsules:
        p0 = np.asarray(p0, float)
        p1 = np.asarray(p1, float)
        lo = np.minimum(p0, p1) - r
        hi = np.maximum(p0, p1) + r
        i0 = np.maximum(np.floor((lo - origin) / voxel_size - 0.5).astype(int), 0)
        i1 = np.minimum(np.ceil((hi - origin) / voxel_size).astype(int) + 1, dims)
        if np.any(i0 >= i1):
            continue
        ix, iy, iz = [np.arange(i0[a], i1[a]) for a in range(3)]
        gx, gy, gz = np.meshgrid(ix, iy, iz, indexing="ij")
        centers = origin + (np.stack([gx, gy, gz], axis=-1) + 0.5) * voxel_size
        ab = p1 - p0
        denom = float(ab @ ab)
        w = centers - p0
        if denom > 0:
            t = np.clip((w @ ab) / denom, 0.0, 1.0)
        else:
            t = np.zeros(w.shape[:-1])
        closest = p0 + t[..., None] * ab
        d2 = ((centers - closest) ** 2).sum(axis=-1)
        occ[i0[0]:i1[0], i0[1]:i1[1], i0[2]:i1[2]] |= d2 <= r * r
    return occ


def voxelize_tree(tree: SyntheticTree, origin, voxel_size: float, dims) -> np.ndarray:
    return voxelize_capsules(tree.capsules(), origin, voxel_size, dims)


# ---------------------------------------------------------------------------
# Scene bundle on disk
# ---------------------------------------------------------------------------


def write_scene_bundle(
    out_dir: str | Path,
    scene: SyntheticScene,
    rig: VirtualRig,
    calib_seed: int = 0,
    color_images: bool = True,
    noise_std: float = 0.0,
    flip_fraction: float = 0.0,
    perturb_seed: int = 0,
    perturb_view_fraction: float = 0.2,
) -> dict:
    """Render a scene and write everything a pipeline run consumes.

    Layout: calibration.txt, scene.json, ground_truth.json (tree scenes),
    silhouettes/sil_<pose>_<camera>.pgm, images/img_<pose>_<camera>.ppm.
    Returns the paths written.
    """
    from .traits import save_report  # local import keeps module load cheap

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "silhouettes").mkdir(exist_ok=True)

    calib = rig.calibration_set(calib_seed)
    save_calibration(out / "calibration.txt", calib)
    save_scene(out / "scene.json", scene)

    maps = render_scene(scene, rig)
    if flip_fraction > 0:
        maps = perturb_silhouettes(
            maps, flip_fraction, perturb_seed, view_fraction=perturb_view_fraction
        )
    views = rig.views()
    paths = {
        "calibration": out / "calibration.txt",
        "scene": out / "scene.json",
        "silhouettes": out / "silhouettes",
    }
    if color_images:
        (out / "images").mkdir(exist_ok=True)
        paths["images"] = out / "images"
    for view, silmap in zip(views, maps):
        tag = f"{view.pose_index}_{view.camera_id}"
        save_silhouette(out / "silhouettes" / f"sil_{tag}.pgm", silmap)
        if color_images:
            img = compose_color_image(silmap, noise_std=noise_std, seed=perturb_seed)
            save_color_image(out / "images" / f"img_{tag}.ppm", img)
    if scene.tree is not None:
        save_report(out / "ground_truth.json", ground_truth(scene.tree))
        paths["ground_truth"] = out / "ground_truth.json"
    return paths
