import numpy as np
import pytest

from treevox.edt import distance_transform
from treevox.reconstruction import VoxelGrid
from treevox.skeleton import (
    SkeletonConfig,
    SkeletonSegment,
    load_skeleton,
    save_skeleton,
    seed_voxel,
    skeleton_to_ply,
    skeletonize,
)
from treevox.synthetic import voxelize_capsules

VS = 3.0


def labeled_grid(capsules, dims=(40, 40, 60), origin=(-60.0, -60.0, 0.0)):
    occ = voxelize_capsules(capsules, origin=origin, voxel_size=VS, dims=dims)
    return distance_transform(VoxelGrid(origin, VS, dims, occ))


def caps_cylinder(r=9.0, z0=6.0, z1=160.0):
    # x/y offsets keep the axis on a voxel-center column (origin -60, vs 3)
    a = np.array([-1.5, -1.5, z0])
    b = np.array([-1.5, -1.5, z1])
    return [(a, b, r)]


def test_cylinder_gives_single_centered_segment():
    grid = labeled_grid(caps_cylinder())
    segs = skeletonize(grid, SkeletonConfig())
    assert len(segs) == 1
    path = grid.index_to_center(segs[0].path)
    zs = sorted((path[0][2], path[-1][2]))
    assert zs[0] < 6.0 + 2 * VS and zs[1] > 160.0 - 2 * VS
    # the path must hug the axis
    assert np.abs(path[:, :2] - (-1.5)).max() <= 1.5 * VS


def test_requires_labels_and_occupancy():
    occ = np.zeros((4, 4, 4), dtype=bool)
    occ[1, 1, 1] = True
    grid = VoxelGrid((0, 0, 0), VS, (4, 4, 4), occ)
    with pytest.raises(ValueError, match="labels"):
        skeletonize(grid)
    empty = distance_transform(VoxelGrid((0, 0, 0), VS, (4, 4, 4), np.zeros((4, 4, 4), bool)))
    with pytest.raises(ValueError, match="empty"):
        skeletonize(empty)


def test_seed_is_lowest_occupied():
    grid = labeled_grid(caps_cylinder())
    seed = seed_voxel(grid)
    zmin = grid.occupied_indices()[:, 2].min()
    assert seed[2] == zmin


def test_t_shape_recovers_junction():
    caps = caps_cylinder() + [(np.array([-1.5, -1.5, 90.0]),
                               np.array([55.0, -1.5, 90.0]), 7.5)]
    grid = labeled_grid(caps)
    segs = skeletonize(grid, SkeletonConfig())
    assert len(segs) == 3  # trunk below, trunk above, side branch
    ends = [grid.index_to_center(np.array(e)) for s in segs
            for e in (s.endpoint_a, s.endpoint_b)]
    # some endpoint sits at the junction, shared by all three segments
    junction = None
    for e in ends:
        if sum(np.allclose(e, f) for f in ends) == 3:
            junction = e
    assert junction is not None
    assert np.linalg.norm(junction - np.array([-1.5, -1.5, 90.0])) <= np.sqrt(3) * 2 * VS


def test_short_nub_is_pruned():
    nub = [(np.array([-1.5, -1.5, 90.0]), np.array([13.5, -1.5, 90.0]), 4.0)]
    grid = labeled_grid(caps_cylinder() + nub)
    segs = skeletonize(grid, SkeletonConfig(min_branch_length=20.0))
    assert len(segs) == 1  # 15 mm stub dies, trunk pieces merge back


def test_disconnected_component_is_dropped():
    blob = [(np.array([45.0, 45.0, 150.0]), np.array([45.0, 45.0, 150.0]), 6.0)]
    grid = labeled_grid(caps_cylinder() + blob)
    segs = skeletonize(grid, SkeletonConfig())
    assert len(segs) == 1
    centers = grid.index_to_center(segs[0].path)
    assert centers[:, 0].max() < 30.0  # nothing from the floating blob


def test_coverage_of_occupied_volume():
    # every occupied voxel lies inside some coverage ball of the emitted
    # skeleton (radius scale * local label)
    cfg = SkeletonConfig()
    grid = labeled_grid(caps_cylinder())
    segs = skeletonize(grid, cfg)
    path = np.vstack([s.path for s in segs]).astype(float)
    occ_idx = grid.occupied_indices().astype(float)
    dmin = np.min(np.linalg.norm(occ_idx[:, None, :] - path[None, :, :], axis=2), axis=1)
    max_label = grid.distance_labels.max()
    assert dmin.max() <= cfg.coverage_radius_scale * max_label + np.sqrt(3)


def test_deterministic_and_canonically_ordered():
    caps = caps_cylinder() + [(np.array([-1.5, -1.5, 90.0]),
                               np.array([55.0, -1.5, 90.0]), 7.5)]
    grid = labeled_grid(caps)
    a = skeletonize(grid, SkeletonConfig())
    b = skeletonize(grid, SkeletonConfig())
    assert a == b
    keys = [(s.endpoint_a, s.endpoint_b) for s in a]
    assert keys == sorted(keys)


def test_segment_validation():
    with pytest.raises(ValueError):
        SkeletonSegment(np.array([[0, 0, 0]]))  # too short
    with pytest.raises(ValueError):
        SkeletonSegment(np.array([[0, 0, 0], [2, 0, 0]]))  # not 26-adjacent
    with pytest.raises(ValueError):
        SkeletonSegment(np.array([[0, 0, 0], [1, 0, 0], [0, 0, 0]]))  # repeats
    seg = SkeletonSegment(np.array([[0, 0, 0], [1, 1, 0], [2, 1, 0]]))
    assert seg.length_mm(2.0) == pytest.approx(2 * (np.sqrt(2) + 1))


def test_skeleton_roundtrip_and_ply(tmp_path):
    grid = labeled_grid(caps_cylinder())
    segs = skeletonize(grid, SkeletonConfig())
    save_skeleton(tmp_path / "skel.json", segs)
    back = load_skeleton(tmp_path / "skel.json")
    assert back == segs
    skeleton_to_ply(tmp_path / "skel.ply", segs, grid)
    head = (tmp_path / "skel.ply").read_bytes()[:200]
    assert head.startswith(b"ply")
    assert b"element edge" in head
