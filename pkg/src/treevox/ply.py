"""Minimal binary PLY export for point clouds and polyline graphs.

Little-endian binary PLY with float32 vertex coordinates (mm), optional
float32 per-vertex scalar attributes, and an optional edge element for
skeleton/graph polylines. Viewers such as MeshLab and CloudCompare open
these directly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def write_ply(
    path: str | Path,
    vertices: np.ndarray,
    scalars: dict | None = None,
    edges: np.ndarray | None = None,
) -> None:
    """Write vertices (n, 3), optional named scalars (n,), optional edges (m, 2)."""
    verts = np.ascontiguousarray(np.asarray(vertices, dtype=np.float32).reshape(-1, 3))
    n = verts.shape[0]
    scalars = scalars or {}
    for name, values in scalars.items():
        if len(values) != n:
            raise ValueError(f"scalar {name!r} has {len(values)} values for {n} vertices")

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {axis}" for axis in "xyz"]
    header += [f"property float {name}" for name in scalars]
    if edges is not None:
        edges = np.ascontiguousarray(np.asarray(edges, dtype=np.int32).reshape(-1, 2))
        header.append(f"element edge {edges.shape[0]}")
        header += ["property int vertex1", "property int vertex2"]
    header.append("end_header")

    cols = [verts] + [np.asarray(scalars[k], dtype=np.float32).reshape(-1, 1) for k in scalars]
    body = np.hstack(cols).astype("<f4")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(body.tobytes())
        if edges is not None:
            f.write(edges.astype("<i4").tobytes())
