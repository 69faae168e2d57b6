import time

import numpy as np
import pytest

from treevox.edt import distance_transform, squared_edt
from treevox.reconstruction import VoxelGrid


def brute_force_sq(occ):
    """All-pairs oracle. Distance to the nearest empty voxel center, where
    everything beyond the array border counts as empty."""
    dims = occ.shape
    pad = np.zeros(tuple(d + 2 for d in dims), dtype=bool)
    pad[1:-1, 1:-1, 1:-1] = occ
    empties = np.argwhere(~pad)
    out = np.zeros(dims, dtype=np.int64)
    for idx in np.argwhere(occ):
        d = ((empties - (idx + 1)) ** 2).sum(axis=1)
        out[tuple(idx)] = d.min()
    return out


def test_empty_grid_is_all_zero():
    assert not squared_edt(np.zeros((4, 5, 6), dtype=bool)).any()


def test_single_voxel_has_unit_distance():
    occ = np.zeros((5, 5, 5), dtype=bool)
    occ[2, 2, 2] = True
    sq = squared_edt(occ)
    assert sq[2, 2, 2] == 1
    assert sq.sum() == 1


def test_full_grid_measures_distance_to_border():
    # with a virtual empty border, the center of a 5^3 solid block is 3 away
    occ = np.ones((5, 5, 5), dtype=bool)
    sq = squared_edt(occ)
    assert sq[2, 2, 2] == 9
    assert sq[0, 0, 0] == 1
    assert sq[2, 2, 0] == 1


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(6)
    for _ in range(20):
        occ = rng.uniform(size=(8, 8, 8)) < rng.uniform(0.2, 0.9)
        assert np.array_equal(squared_edt(occ), brute_force_sq(occ))


def test_anisotropic_shapes_and_dtype():
    rng = np.random.default_rng(7)
    occ = rng.uniform(size=(3, 11, 6)) < 0.6
    sq = squared_edt(occ)
    assert sq.shape == occ.shape
    assert np.issubdtype(sq.dtype, np.integer)
    assert np.array_equal(sq, brute_force_sq(occ))
    assert (sq[~occ] == 0).all()


def test_distance_transform_wraps_sqrt_labels():
    occ = np.zeros((6, 6, 6), dtype=bool)
    occ[1:5, 1:5, 1:5] = True
    grid = VoxelGrid((0, 0, 0), 2.0, (6, 6, 6), occ)
    labeled = distance_transform(grid)
    assert labeled.distance_labels is not None
    assert np.array_equal(labeled.occupancy, occ)
    assert labeled.distance_labels[2, 2, 2] == pytest.approx(np.sqrt(4))  # 2 to empty
    assert labeled.distance_labels[1, 1, 1] == pytest.approx(1.0)
    assert (labeled.distance_labels[~occ] == 0).all()
    # the input grid is not mutated
    assert grid.distance_labels is None


def test_speed_at_acceptance_scale():
    # 50 random 16^3 grids well under a second; the heavy comparison against
    # the oracle at this count lives in the acceptance suite
    rng = np.random.default_rng(8)
    grids = [rng.uniform(size=(16, 16, 16)) < 0.5 for _ in range(50)]
    t0 = time.perf_counter()
    for occ in grids:
        squared_edt(occ)
    assert time.perf_counter() - t0 < 1.0
