"""Visual-hull occupancy from calibrated silhouette probability maps.

Carving is a tolerance vote rather than a strict intersection: a voxel
survives when at least ``consistency_fraction`` of the views that actually
see it (center projects in front of the camera and inside the image) say
"foreground". Strict hulls erode real geometry as soon as one silhouette
is wrong; the vote tolerates a bounded number of bad views per voxel.

The hierarchical carve runs the same vote level by level, halving the
voxel size each time; coarse survivors are dilated and split into eight
children to form the next candidate set (octree-style refinement).

Grid convention used everywhere downstream, bit-exact:

    voxel world center = origin + (index + 0.5) * voxel_size   per axis

Binary occupancy format (.vox), little-endian:

    magic   4 bytes  b"TVOX"
    version uint32   1
    origin  3 float64 (mm)
    voxel_size float64 (mm)
    dims    3 uint32  (nx, ny, nz)
    payload bit-packed occupancy, x-fastest order, LSB-first within a byte
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .calibration import CameraView, project
from .ply import write_ply

_VOX_MAGIC = b"TVOX"
_VOX_VERSION = 1
_CHUNK = 1 << 20  # candidate voxels projected per batch


@dataclass
class VoxelGrid:
    """Axis-aligned occupancy grid; ``origin`` is the min corner of voxel (0,0,0)."""

    origin: np.ndarray          # (3,) mm
    voxel_size: float           # mm, cube edge
    dims: tuple                 # (nx, ny, nz)
    occupancy: np.ndarray       # bool (nx, ny, nz)
    distance_labels: np.ndarray | None = None  # float, voxel units; 0 where empty

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.dims = tuple(int(d) for d in self.dims)
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if any(d <= 0 for d in self.dims):
            raise ValueError(f"grid dims must be positive, got {self.dims}")
        occ = np.asarray(self.occupancy)
        if occ.shape != self.dims:
            raise ValueError(f"occupancy shape {occ.shape} does not match dims {self.dims}")
        self.occupancy = occ.astype(bool)
        if self.distance_labels is not None and self.distance_labels.shape != self.dims:
            raise ValueError("distance_labels shape does not match dims")

    @classmethod
    def full(cls, origin, voxel_size: float, dims) -> "VoxelGrid":
        """All-candidate grid (every voxel set)."""
        dims = tuple(int(d) for d in dims)
        return cls(origin, voxel_size, dims, np.ones(dims, dtype=bool))

    def index_to_center(self, indices: np.ndarray) -> np.ndarray:
        """World centers (mm) of voxel indices, shape-preserving over (..., 3)."""
        idx = np.asarray(indices, dtype=float)
        return self.origin + (idx + 0.5) * self.voxel_size

    def occupied_indices(self) -> np.ndarray:
        return np.argwhere(self.occupancy)

    def occupied_centers(self) -> np.ndarray:
        return self.index_to_center(self.occupied_indices())

    @property
    def n_occupied(self) -> int:
        return int(np.count_nonzero(self.occupancy))


@dataclass
class CarveConfig:
    initial_voxel_size: float = 12.0
    final_voxel_size: float = 3.0
    silhouette_threshold: float = 0.5
    consistency_fraction: float = 0.95
    dilation_radius: int = 1

    def __post_init__(self):
        if self.final_voxel_size <= 0 or self.initial_voxel_size <= 0:
            raise ValueError("voxel sizes must be positive")
        if self.final_voxel_size > self.initial_voxel_size:
            raise ValueError("final_voxel_size must not exceed initial_voxel_size")
        ratio = self.initial_voxel_size / self.final_voxel_size
        k = round(np.log2(ratio))
        if abs(ratio - 2 ** k) > 1e-9 * ratio:
            raise ValueError(f"initial/final voxel size ratio {ratio} is not a power of 2")
        if not 0.5 < self.consistency_fraction <= 1.0:
            raise ValueError("consistency_fraction must lie in (0.5, 1]")
        if not 0.0 <= self.silhouette_threshold <= 1.0:
            raise ValueError("silhouette_threshold must lie in [0, 1]")
        if self.dilation_radius < 0:
            raise ValueError("dilation_radius must be >= 0")

    @property
    def n_levels(self) -> int:
        return round(np.log2(self.initial_voxel_size / self.final_voxel_size)) + 1


def carve_level(grid: VoxelGrid, views: list[CameraView], cfg: CarveConfig) -> VoxelGrid:
    """Vote over views for every candidate voxel (grid.occupancy marks candidates).

    A candidate stays occupied iff it projects into >= 1 image and the
    fraction of those views whose silhouette probability at the projected
    pixel is >= silhouette_threshold reaches consistency_fraction.
    """
    if not views:
        raise ValueError("carve_level needs at least one view")
    for v in views:
        if v.silhouette is None:
            raise ValueError(f"view (pose {v.pose_index}, camera {v.camera_id}) has no silhouette")

    idx = np.argwhere(grid.occupancy).astype(np.int32)
    n = idx.shape[0]
    n_valid = np.zeros(n, dtype=np.uint16)
    n_inside = np.zeros(n, dtype=np.uint16)
    masks = [v.silhouette.probabilities >= cfg.silhouette_threshold for v in views]

    for lo in range(0, n, _CHUNK):
        chunk = idx[lo : lo + _CHUNK]
        centers = grid.index_to_center(chunk)
        for view, mask in zip(views, masks):
            u, v_pix, in_front = project(view, centers)
            c = np.rint(u)
            r = np.rint(v_pix)
            w, h = view.intrinsics.width, view.intrinsics.height
            with np.errstate(invalid="ignore"):
                valid = in_front & (c >= 0) & (c <= w - 1) & (r >= 0) & (r <= h - 1)
            inside = np.zeros(chunk.shape[0], dtype=bool)
            inside[valid] = mask[r[valid].astype(np.intp), c[valid].astype(np.intp)]
            n_valid[lo : lo + chunk.shape[0]] += valid
            n_inside[lo : lo + chunk.shape[0]] += inside

    if n > 0 and not n_valid.any():
        warnings.warn("search region projects outside every image; reconstruction is empty")
    keep = (n_valid > 0) & (n_inside + 1e-9 >= cfg.consistency_fraction * n_valid)
    occ = np.zeros(grid.dims, dtype=bool)
    occ[idx[keep, 0], idx[keep, 1], idx[keep, 2]] = True
    return VoxelGrid(grid.origin, grid.voxel_size, grid.dims, occ)


def _level_dims(extent: np.ndarray, voxel_size: float) -> tuple:
    return tuple(max(1, int(np.ceil(e / voxel_size - 1e-12))) for e in extent)


def carve_hierarchical(
    region_min,
    region_max,
    views: list[CameraView],
    cfg: CarveConfig,
) -> VoxelGrid:
    """Coarse-to-fine carve of the axis-aligned box [region_min, region_max]."""
    region_min = np.asarray(region_min, dtype=float).reshape(3)
    region_max = np.asarray(region_max, dtype=float).reshape(3)
    extent = region_max - region_min
    if np.any(extent <= 0):
        raise ValueError("search region must have positive volume on every axis")

    size = cfg.initial_voxel_size
    grid = VoxelGrid.full(region_min, size, _level_dims(extent, size))
    while True:
        grid = carve_level(grid, views, cfg)
        if size <= cfg.final_voxel_size * (1 + 1e-9):
            return grid
        candidates = grid.occupancy
        if cfg.dilation_radius > 0:
            box = np.ones((2 * cfg.dilation_radius + 1,) * 3, dtype=bool)
            candidates = ndimage.binary_dilation(candidates, structure=box)
        size = size / 2
        dims = _level_dims(extent, size)
        fine = candidates.repeat(2, axis=0).repeat(2, axis=1).repeat(2, axis=2)
        fine = fine[: dims[0], : dims[1], : dims[2]]
        grid = VoxelGrid(region_min, size, dims, fine)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_occupancy(path: str | Path, grid: VoxelGrid) -> None:
    """Write the .vox binary occupancy format described in the module docstring."""
    header = struct.pack(
        "<4sI3dd3I",
        _VOX_MAGIC,
        _VOX_VERSION,
        *grid.origin,
        grid.voxel_size,
        *grid.dims,
    )
    bits = np.packbits(grid.occupancy.ravel(order="F"), bitorder="little")
    with open(path, "wb") as f:
        f.write(header)
        f.write(bits.tobytes())


def load_occupancy(path: str | Path) -> VoxelGrid:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"occupancy file not found: {path}")
    data = path.read_bytes()
    head_size = struct.calcsize("<4sI3dd3I")
    magic, version, ox, oy, oz, vs, nx, ny, nz = struct.unpack("<4sI3dd3I", data[:head_size])
    if magic != _VOX_MAGIC:
        raise ValueError(f"{path} is not a TVOX occupancy file")
    if version != _VOX_VERSION:
        raise ValueError(f"unsupported TVOX version {version}")
    count = nx * ny * nz
    bits = np.frombuffer(data, dtype=np.uint8, offset=head_size)
    flat = np.unpackbits(bits, count=count, bitorder="little")
    occ = flat.reshape((nx, ny, nz), order="F").astype(bool)
    return VoxelGrid((ox, oy, oz), vs, (nx, ny, nz), occ)


def grid_to_ply(path: str | Path, grid: VoxelGrid) -> None:
    """Occupied-voxel centers as a PLY point cloud; labels ride along if present."""
    idx = grid.occupied_indices()
    scalars = None
    if grid.distance_labels is not None:
        scalars = {"label": grid.distance_labels[idx[:, 0], idx[:, 1], idx[:, 2]]}
    write_ply(path, grid.index_to_center(idx), scalars=scalars)


def labels_to_grid(grid: VoxelGrid, labels: np.ndarray) -> VoxelGrid:
    """Copy of grid with distance labels attached."""
    if labels.shape != grid.dims:
        raise ValueError(f"labels shape {labels.shape} does not match grid dims {grid.dims}")
    return replace(grid, distance_labels=np.asarray(labels, dtype=float))
