"""Rooted directed graph from an undirected skeleton segment set.

The root is the segment endpoint closest to the ground plane (lowest
coordinate along the declared up axis). A breadth-first pass then walks
outward: popping vertex v_a consumes every unused segment incident to it
and emits a directed edge (v_a, v_b) with the path re-oriented to start
at v_a. Out-degree zero marks a terminal tip.

Cycles are not resolved: a segment whose far endpoint was already visited
would close a loop, so it is left out of the edge set and reported in
``cycle_remainder`` (as is anything unreachable from the root). The
emitted graph is always acyclic with |E| = |V| - 1.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ply import write_ply
from .reconstruction import VoxelGrid
from .skeleton import SkeletonSegment

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class GraphVertex:
    id: int
    voxel: tuple            # grid index
    position: np.ndarray    # world mm


@dataclass
class GraphEdge:
    start: int              # vertex ids
    end: int
    path: np.ndarray        # (n, 3) voxel indices ordered start -> end


@dataclass
class TreeGraph:
    vertices: list
    edges: list
    root: int
    cycle_remainder: list = field(default_factory=list)

    def out_degree(self, vertex_id: int) -> int:
        return sum(1 for e in self.edges if e.start == vertex_id)

    def in_edge(self, vertex_id: int) -> GraphEdge | None:
        for e in self.edges:
            if e.end == vertex_id:
                return e
        return None

    def tips(self) -> list:
        return [v.id for v in self.vertices if self.out_degree(v.id) == 0]


def _up_key(position: np.ndarray, up_axis: str):
    """Sort key: height along the up axis, then the remaining axes in order."""
    a = _AXES[up_axis]
    rest = [i for i in range(3) if i != a]
    return (position[a], position[rest[0]], position[rest[1]])


def select_root(segments: list, grid: VoxelGrid, up_axis: str = "z") -> tuple:
    """Endpoint closest to the ground plane; ties broken on the other axes."""
    if not segments:
        raise ValueError("cannot pick a root from an empty segment set")
    if up_axis not in _AXES:
        raise ValueError(f"up_axis must be one of x, y, z, got {up_axis!r}")
    best = None
    best_key = None
    for seg in segments:
        for voxel in (seg.endpoint_a, seg.endpoint_b):
            key = _up_key(grid.index_to_center(np.array(voxel)), up_axis)
            if best_key is None or key < best_key:
                best, best_key = voxel, key
    return best


def build_graph(segments: list, grid: VoxelGrid, up_axis: str = "z") -> TreeGraph:
    """Directed rooted graph via breadth-first consumption of the segment set."""
    root_voxel = select_root(segments, grid, up_axis)

    incident: dict[tuple, list[int]] = {}
    for i, seg in enumerate(segments):
        if seg.endpoint_a == seg.endpoint_b:
            raise ValueError(f"self-loop segment at {seg.endpoint_a}")
        incident.setdefault(seg.endpoint_a, []).append(i)
        incident.setdefault(seg.endpoint_b, []).append(i)

    vertex_id: dict[tuple, int] = {root_voxel: 0}
    vertices = [GraphVertex(0, root_voxel, grid.index_to_center(np.array(root_voxel)))]
    edges: list[GraphEdge] = []
    remainder: list[SkeletonSegment] = []
    used = [False] * len(segments)
    queue = deque([root_voxel])

    while queue:
        va = queue.popleft()
        # deterministic, input-order-independent iteration over unused segments
        pending = []
        for i in incident.get(va, []):
            if used[i]:
                continue
            seg = segments[i]
            vb = seg.endpoint_b if seg.endpoint_a == va else seg.endpoint_a
            pending.append((vb, len(seg), seg.path.tobytes(), i))
        for vb, _, _, i in sorted(pending):
            if used[i]:
                continue
            used[i] = True
            seg = segments[i]
            path = seg.path if seg.endpoint_a == va else seg.path[::-1]
            if vb in vertex_id:
                remainder.append(seg)  # both endpoints known: closes a cycle
                continue
            vid = len(vertices)
            vertex_id[vb] = vid
            vertices.append(GraphVertex(vid, vb, grid.index_to_center(np.array(vb))))
            edges.append(GraphEdge(vertex_id[va], vid, np.array(path)))
            queue.append(vb)

    for i, seg in enumerate(segments):
        if not used[i]:
            remainder.append(seg)  # disconnected from the root's component

    return TreeGraph(vertices, edges, root=0, cycle_remainder=remainder)


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def graph_to_text(g: TreeGraph) -> str:
    """Human-readable structured report (one vertex/edge per line)."""
    lines = [f"root v{g.root}", f"vertices {len(g.vertices)}", f"edges {len(g.edges)}"]
    for v in g.vertices:
        x, y, z = v.position
        lines.append(
            f"vertex v{v.id} voxel {v.voxel[0]} {v.voxel[1]} {v.voxel[2]} "
            f"position_mm {x:.3f} {y:.3f} {z:.3f}"
        )
    for e in g.edges:
        lines.append(f"edge v{e.start} v{e.end} voxels {len(e.path)}")
    lines.append(f"tips {' '.join('v%d' % t for t in g.tips())}")
    lines.append(f"cycle_remainder_segments {len(g.cycle_remainder)}")
    return "\n".join(lines) + "\n"


def save_graph(path: str | Path, g: TreeGraph) -> None:
    doc = {
        "root": g.root,
        "vertices": [
            {"id": v.id, "voxel": list(v.voxel), "position_mm": list(map(float, v.position))}
            for v in g.vertices
        ],
        "edges": [
            {"start": e.start, "end": e.end, "path": e.path.tolist()} for e in g.edges
        ],
        "cycle_remainder": [seg.path.tolist() for seg in g.cycle_remainder],
    }
    Path(path).write_text(json.dumps(doc))


def load_graph(path: str | Path) -> TreeGraph:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"graph file not found: {path}")
    doc = json.loads(path.read_text())
    vertices = [
        GraphVertex(v["id"], tuple(v["voxel"]), np.array(v["position_mm"]))
        for v in doc["vertices"]
    ]
    edges = [
        GraphEdge(e["start"], e["end"], np.asarray(e["path"], dtype=np.int32))
        for e in doc["edges"]
    ]
    remainder = [SkeletonSegment(np.asarray(p, dtype=np.int32)) for p in doc["cycle_remainder"]]
    return TreeGraph(vertices, edges, doc["root"], remainder)


def graph_to_ply(path: str | Path, g: TreeGraph, grid: VoxelGrid) -> None:
    """Polylines for edges plus a per-point flag marking graph vertices."""
    verts, flags, lines = [], [], []
    base = 0
    for e in g.edges:
        pts = grid.index_to_center(e.path)
        verts.append(pts)
        mark = np.zeros(len(pts))
        mark[0] = mark[-1] = 1.0
        flags.append(mark)
        lines.append(np.stack([np.arange(base, base + len(pts) - 1),
                               np.arange(base + 1, base + len(pts))], axis=1))
        base += len(pts)
    if verts:
        write_ply(path, np.vstack(verts), scalars={"junction": np.concatenate(flags)},
                  edges=np.vstack(lines))
    else:
        write_ply(path, np.zeros((0, 3)), edges=np.zeros((0, 2), dtype=np.int32))
