"""Branch trait measurement: junction location, diameter, length, angle.

All measurements read the rooted graph plus the labeled voxel grid.

Diameter: the distance label at a junction reflects the parent's
thickness, so the read point is offset along the child path until it
clears that radius, then the next n_d labels are averaged and doubled.
For the root edge the offset uses the path's maximum label instead of the
label at the root voxel itself — the root sits against the ground plane
(or a branch tip), where labels shrink to ~1 voxel and an unoffset window
would read the basal taper rather than the trunk.

Angle: direction vectors are sampled where each path first reaches
straight-line distance d_angle from the junction. The parent path is
traversed from the junction back toward the parent's origin, so a child
continuing its parent's line measures 180 degrees and a perpendicular
child measures 90.

Lengths sum the Euclidean steps between consecutive path voxel centers,
which slightly overestimates on noisy staircase paths (never below the
endpoint chord).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import TreeGraph
from .reconstruction import VoxelGrid

_UP = {"x": np.array([1.0, 0, 0]), "y": np.array([0, 1.0, 0]), "z": np.array([0, 0, 1.0])}


@dataclass
class TraitConfig:
    n_d: int = 5          # vertices averaged for the radius estimate
    d_angle: float = 50.0  # mm from the junction where directions are sampled

    def __post_init__(self):
        if int(self.n_d) != self.n_d or self.n_d < 1:
            raise ValueError("n_d must be an integer >= 1")
        self.n_d = int(self.n_d)
        if self.d_angle <= 0:
            raise ValueError("d_angle must be positive")


@dataclass
class BranchTraits:
    branch_id: str
    junction: np.ndarray          # mm
    diameter: float | None        # mm
    length: float | None          # mm
    angle: float | None           # degrees vs. the backward parent direction
    flags: list = field(default_factory=list)
    start_vertex: int | None = None
    end_vertex: int | None = None
    direction: np.ndarray | None = None   # unit chord, junction toward tip


@dataclass
class BranchTraitReport:
    branches: list
    meta: dict = field(default_factory=dict)


def _labels_at(grid: VoxelGrid, path: np.ndarray) -> np.ndarray:
    if grid.distance_labels is None:
        raise ValueError("grid has no distance labels")
    return grid.distance_labels[path[:, 0], path[:, 1], path[:, 2]]


def junction_location(edge, grid: VoxelGrid) -> np.ndarray:
    """World center (mm) of the edge's start-vertex voxel."""
    return grid.index_to_center(np.asarray(edge.path[0]))


def branch_diameter(
    path: np.ndarray,
    grid: VoxelGrid,
    cfg: TraitConfig,
    is_root_edge: bool = False,
):
    """(diameter_mm or None, flags). Offset past the junction thickness, then
    average the next n_d labels; window clamped at the path end."""
    flags = []
    labels = _labels_at(grid, path)
    d0 = float(labels.max() if is_root_edge else labels[0])
    centers = grid.index_to_center(path)
    dist = np.linalg.norm(centers - centers[0], axis=1)
    past = dist >= d0 * grid.voxel_size - 1e-9
    if not past.any():
        return None, ["diameter-unmeasured: path ends before clearing the junction offset"]
    a = int(np.argmax(past))
    window = labels[a : a + cfg.n_d]
    if len(window) < cfg.n_d:
        flags.append("short-window")
    return 2.0 * float(window.mean()) * grid.voxel_size, flags


def branch_length(path: np.ndarray, grid: VoxelGrid) -> float:
    """Sum of Euclidean steps between consecutive voxel centers, mm."""
    if len(path) < 2:
        raise ValueError("length needs a path of at least 2 voxels")
    centers = grid.index_to_center(np.asarray(path))
    return float(np.linalg.norm(np.diff(centers, axis=0), axis=1).sum())


def _sample_at(centers: np.ndarray, d: float):
    """First point at straight-line distance >= d from the path start."""
    dist = np.linalg.norm(centers - centers[0], axis=1)
    far = dist >= d - 1e-9
    if not far.any():
        return None
    return centers[int(np.argmax(far))]


def branch_angle(
    parent_path: np.ndarray,
    child_path: np.ndarray,
    grid: VoxelGrid,
    cfg: TraitConfig,
):
    """(degrees or None, flags); both paths must start at the shared junction,
    the parent path ordered junction -> parent origin."""
    pc = grid.index_to_center(np.asarray(parent_path))
    cc = grid.index_to_center(np.asarray(child_path))
    if not np.allclose(pc[0], cc[0]):
        raise ValueError("parent and child paths must start at the same junction voxel")
    p = _sample_at(pc, cfg.d_angle)
    if p is None:
        return None, ["angle-unmeasured: parent path shorter than d_angle"]
    c = _sample_at(cc, cfg.d_angle)
    if c is None:
        return None, ["angle-unmeasured: child path shorter than d_angle"]
    return _angle_between(p - pc[0], c - cc[0]), []


def _angle_between(v1: np.ndarray, v2: np.ndarray) -> float:
    cosang = np.dot(v1, v2) / (np.linalg.norm(v1) * np.linalg.norm(v2))
    return float(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))


def measure_all(
    graph: TreeGraph,
    grid: VoxelGrid,
    cfg: TraitConfig | None = None,
    up_axis: str = "z",
) -> BranchTraitReport:
    """Traits for every edge, root-first; per-edge failures become flags."""
    cfg = cfg or TraitConfig()
    in_edge = {e.end: e for e in graph.edges}
    out_degree: dict[int, int] = {}
    for e in graph.edges:
        out_degree[e.start] = out_degree.get(e.start, 0) + 1

    branches = []
    for e in graph.edges:
        flags = []
        junction = junction_location(e, grid)
        is_root_edge = e.start == graph.root
        diameter, dflags = branch_diameter(e.path, grid, cfg, is_root_edge=is_root_edge)
        flags += dflags
        length = branch_length(e.path, grid)
        if is_root_edge and out_degree.get(graph.root, 0) == 1:
            angle = None
            flags.append("root-edge")
        elif is_root_edge:
            # forked root: no parent path exists, so measure against straight
            # down — the direction a parent would arrive from below ground
            flags.append("angle-vs-up-axis")
            cc = grid.index_to_center(e.path)
            c = _sample_at(cc, cfg.d_angle)
            if c is None:
                angle = None
                flags.append("angle-unmeasured: child path shorter than d_angle")
            else:
                angle = _angle_between(-_UP[up_axis], c - cc[0])
        else:
            parent = in_edge[e.start]
            angle, aflags = branch_angle(parent.path[::-1], e.path, grid, cfg)
            flags += aflags
        cc = grid.index_to_center(e.path)
        chord = cc[-1] - cc[0]
        norm = float(np.linalg.norm(chord))
        branches.append(
            BranchTraits(
                branch_id=f"v{e.start}-v{e.end}",
                junction=junction,
                diameter=diameter,
                length=length,
                angle=angle,
                flags=flags,
                start_vertex=e.start,
                end_vertex=e.end,
                direction=chord / norm if norm > 0 else None,
            )
        )
    meta = {
        "voxel_size_mm": grid.voxel_size,
        "n_d": cfg.n_d,
        "d_angle_mm": cfg.d_angle,
        "up_axis": up_axis,
    }
    return BranchTraitReport(branches, meta)


# ---------------------------------------------------------------------------
# Report serialization (JSON)
# ---------------------------------------------------------------------------


def report_to_dict(report: BranchTraitReport) -> dict:
    return {
        "meta": report.meta,
        "branches": [
            {
                "id": b.branch_id,
                "start_vertex": b.start_vertex,
                "end_vertex": b.end_vertex,
                "junction_mm": [float(v) for v in b.junction],
                "diameter_mm": None if b.diameter is None else float(b.diameter),
                "length_mm": None if b.length is None else float(b.length),
                "angle_deg": None if b.angle is None else float(b.angle),
                "direction": None if b.direction is None else [float(v) for v in b.direction],
                "flags": list(b.flags),
            }
            for b in report.branches
        ],
    }


def report_from_dict(doc: dict) -> BranchTraitReport:
    branches = [
        BranchTraits(
            branch_id=b["id"],
            junction=np.array(b["junction_mm"], dtype=float),
            diameter=b["diameter_mm"],
            length=b["length_mm"],
            angle=b["angle_deg"],
            flags=list(b.get("flags", [])),
            start_vertex=b.get("start_vertex"),
            end_vertex=b.get("end_vertex"),
            direction=None if b.get("direction") is None
            else np.array(b["direction"], dtype=float),
        )
        for b in doc["branches"]
    ]
    return BranchTraitReport(branches, dict(doc.get("meta", {})))


def save_report(path: str | Path, report: BranchTraitReport) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n")


def load_report(path: str | Path) -> BranchTraitReport:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"trait report not found: {path}")
    return report_from_dict(json.loads(path.read_text()))
