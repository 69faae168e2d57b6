import dataclasses

import numpy as np
import pytest

from treevox.reconstruction import (
    CarveConfig,
    VoxelGrid,
    carve_hierarchical,
    carve_level,
    load_occupancy,
    save_occupancy,
)
from treevox.segmentation import SilhouetteMap
from treevox.synthetic import desk_rig, render_scene, scene_sphere

SPHERE_C = np.array([0.0, 0.0, 350.0])
SPHERE_R = 50.0


@pytest.fixture(scope="module")
def sphere_setup():
    scene = scene_sphere()
    rig = desk_rig(0)
    views = rig.views(render_scene(scene, rig))
    return scene, views


def uniform_views(views, value):
    shape = (views[0].intrinsics.height, views[0].intrinsics.width)
    sil = SilhouetteMap(np.full(shape, float(value)))
    return [dataclasses.replace(v, silhouette=sil) for v in views]


def test_config_validates_level_ratio():
    with pytest.raises(ValueError):
        CarveConfig(initial_voxel_size=12.0, final_voxel_size=5.0)  # 2.4x
    with pytest.raises(ValueError):
        CarveConfig(initial_voxel_size=3.0, final_voxel_size=12.0)
    assert CarveConfig(initial_voxel_size=12.0, final_voxel_size=3.0).n_levels == 3
    assert CarveConfig(initial_voxel_size=3.0, final_voxel_size=3.0).n_levels == 1
    with pytest.raises(ValueError):
        CarveConfig(consistency_fraction=0.0)
    with pytest.raises(ValueError):
        CarveConfig(silhouette_threshold=1.5)


def test_grid_geometry_and_vox_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    occ = rng.uniform(size=(7, 9, 5)) < 0.4
    grid = VoxelGrid((-10.0, 3.0, 0.5), 2.5, (7, 9, 5), occ)
    assert np.allclose(grid.index_to_center(np.array([0, 0, 0])), [-8.75, 4.25, 1.75])
    save_occupancy(tmp_path / "g.vox", grid)
    back = load_occupancy(tmp_path / "g.vox")
    assert np.array_equal(back.occupancy, grid.occupancy)
    assert back.voxel_size == grid.voxel_size
    assert np.allclose(back.origin, grid.origin)
    assert back.dims == grid.dims
    # byte-identical on re-save: the format is canonical
    save_occupancy(tmp_path / "g2.vox", back)
    assert (tmp_path / "g.vox").read_bytes() == (tmp_path / "g2.vox").read_bytes()


def test_all_on_silhouettes_keep_every_visible_voxel(sphere_setup):
    scene, views = sphere_setup
    grid = VoxelGrid.full(scene.region_min, 10.0, (16, 16, 16))
    out = carve_level(grid, uniform_views(views, 1.0), CarveConfig())
    # the desk rig sees the whole region, so everything survives
    assert out.occupancy.all()


def test_all_off_silhouettes_clear_the_grid(sphere_setup):
    scene, views = sphere_setup
    grid = VoxelGrid.full(scene.region_min, 10.0, (16, 16, 16))
    out = carve_level(grid, uniform_views(views, 0.0), CarveConfig())
    assert not out.occupancy.any()


def test_carve_requires_views(sphere_setup):
    scene, _ = sphere_setup
    grid = VoxelGrid.full(scene.region_min, 10.0, (16, 16, 16))
    with pytest.raises(ValueError, match="view"):
        carve_level(grid, [], CarveConfig())


def test_sphere_hull_containment(sphere_setup):
    # analytic oracle: the hull of a sphere is the sphere; voxelization adds
    # at most one voxel diagonal of slop either way
    scene, views = sphere_setup
    cfg = CarveConfig(consistency_fraction=1.0)
    grid = carve_hierarchical(scene.region_min, scene.region_max, views, cfg)
    d = np.linalg.norm(grid.occupied_centers() - SPHERE_C, axis=1)
    slop = np.sqrt(3) * grid.voxel_size
    assert d.max() <= SPHERE_R + slop
    centers = VoxelGrid.full(grid.origin, grid.voxel_size, grid.dims).index_to_center(
        np.argwhere(np.ones(grid.dims, bool)))
    din = np.linalg.norm(centers - SPHERE_C, axis=1).reshape(grid.dims)
    inner = din <= SPHERE_R - slop
    assert (grid.occupancy | ~inner).all()


def test_threshold_monotonicity(sphere_setup):
    scene, views = sphere_setup
    grid = VoxelGrid.full(scene.region_min, 5.0, (32, 32, 32))
    lo = carve_level(grid, views, CarveConfig(silhouette_threshold=0.3))
    hi = carve_level(grid, views, CarveConfig(silhouette_threshold=0.8))
    assert not (hi.occupancy & ~lo.occupancy).any()
    assert hi.n_occupied <= lo.n_occupied


def test_view_monotonicity_at_full_consistency(sphere_setup):
    # intersection property: more views can only remove volume
    scene, views = sphere_setup
    cfg = CarveConfig(consistency_fraction=1.0)
    grid = VoxelGrid.full(scene.region_min, 5.0, (32, 32, 32))
    few = carve_level(grid, views[:8], cfg)
    more = carve_level(grid, views, cfg)
    assert not (more.occupancy & ~few.occupancy).any()


def test_single_level_hierarchy_equals_flat(sphere_setup):
    scene, views = sphere_setup
    cfg = CarveConfig(initial_voxel_size=6.0, final_voxel_size=6.0)
    hier = carve_hierarchical(scene.region_min, scene.region_max, views, cfg)
    flat = carve_level(VoxelGrid.full(hier.origin, 6.0, hier.dims), views, cfg)
    assert np.array_equal(hier.occupancy, flat.occupancy)
    assert np.allclose(hier.origin, flat.origin)


def test_hierarchical_close_to_flat_carve(sphere_setup):
    scene, views = sphere_setup
    cfg = CarveConfig()
    hier = carve_hierarchical(scene.region_min, scene.region_max, views, cfg)
    flat = carve_level(VoxelGrid.full(hier.origin, hier.voxel_size, hier.dims), views, cfg)
    inter = (hier.occupancy & flat.occupancy).sum()
    union = (hier.occupancy | flat.occupancy).sum()
    assert inter / union >= 0.99
    assert abs(hier.n_occupied - flat.n_occupied) <= 0.05 * flat.n_occupied


def test_carve_deterministic(sphere_setup):
    scene, views = sphere_setup
    cfg = CarveConfig()
    a = carve_hierarchical(scene.region_min, scene.region_max, views, cfg)
    b = carve_hierarchical(scene.region_min, scene.region_max, views, cfg)
    assert np.array_equal(a.occupancy, b.occupancy)


def test_region_outside_all_frusta_warns(sphere_setup):
    _, views = sphere_setup
    # a box far behind every camera
    with pytest.warns(UserWarning, match="empty"):
        grid = carve_hierarchical((9000, 9000, 9000), (9100, 9100, 9100), views,
                                  CarveConfig(initial_voxel_size=12.0, final_voxel_size=12.0))
    assert grid.n_occupied == 0
