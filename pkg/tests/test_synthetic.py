import numpy as np
import pytest

from treevox.calibration import pixel_rays, project
from treevox.synthetic import (
    Branch,
    SyntheticScene,
    SyntheticTree,
    desk_rig,
    full_rig,
    ground_truth,
    load_scene,
    perturb_silhouettes,
    render_primitives,
    render_scene,
    save_scene,
    scene_angle_fan,
    scene_tree_a,
    voxelize_capsules,
)


def small_tree():
    return SyntheticTree([
        Branch((0, 0, 0), (0, 0, 100.0), 5.0, -1),
        Branch((0, 0, 100.0), (50.0, 0, 100.0), 2.0, 0),
    ])


def test_tree_validates_parentage():
    with pytest.raises(ValueError, match="parent"):
        SyntheticTree([Branch((0, 0, 0), (0, 0, 1), 1.0, 0)])  # self-parent
    with pytest.raises(ValueError):
        SyntheticTree([
            Branch((0, 0, 0), (0, 0, 100), 5.0, -1),
            Branch((30, 0, 50), (60, 0, 50), 2.0, 0),  # start off the parent axis
        ])


def test_ground_truth_hand_case():
    gt = ground_truth(small_tree())
    trunk, child = gt.branches
    assert trunk.angle is None and "root-branch" in trunk.flags
    assert trunk.diameter == pytest.approx(10.0)
    assert trunk.length == pytest.approx(100.0)      # has a child: no cap
    assert child.angle == pytest.approx(90.0)
    assert child.length == pytest.approx(52.0)       # tip cap adds one radius
    assert np.allclose(child.junction, [0, 0, 100])
    assert np.allclose(child.direction, [1, 0, 0])


def test_ground_truth_continuing_child_is_180():
    tree = SyntheticTree([
        Branch((0, 0, 0), (0, 0, 100.0), 5.0, -1),
        Branch((0, 0, 100.0), (0, 0, 180.0), 4.0, 0),
    ])
    assert ground_truth(tree).branches[1].angle == pytest.approx(180.0)


def march_hits(view, capsules, step=0.5):
    """Boundary-band-aware ray-march oracle: per-pixel hit mask plus a mask
    of pixels too close to a surface to classify robustly."""
    h, w = view.intrinsics.height, view.intrinsics.width
    cols, rows = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    origins, dirs = pixel_rays(view, cols.ravel(), rows.ravel())
    ts = np.arange(200.0, 2400.0, step)
    closest = np.full(dirs.shape[0], np.inf)
    for p0, p1, r in capsules:
        axis = p1 - p0
        L2 = float(axis @ axis)
        for t in ts:
            pts = origins + dirs * t
            if L2 == 0.0:
                d = np.linalg.norm(pts - p0, axis=1)
            else:
                s = np.clip((pts - p0) @ axis / L2, 0.0, 1.0)
                d = np.linalg.norm(pts - (p0 + s[:, None] * axis), axis=1)
            closest = np.minimum(closest, d - r)
    hit = (closest <= 0).reshape(h, w)
    band = (np.abs(closest) < 1.0).reshape(h, w)
    return hit, band


def test_render_agrees_with_ray_march_oracle():
    # coarse frame so the dense march stays cheap
    from treevox.calibration import CameraIntrinsics, CameraView
    from treevox.synthetic import look_at

    intr = CameraIntrinsics(60.0, 60.0, 31.5, 23.5, 0.0, 0.0, 64, 48)
    pose = look_at(np.array([900.0, 200.0, 500.0]), np.array([0.0, 0.0, 300.0]))
    view = CameraView(1, 1, intr, pose)
    capsules = [
        (np.array([0.0, 0.0, 100.0]), np.array([0.0, 0.0, 500.0]), 40.0),
        (np.array([0.0, 0.0, 450.0]), np.array([150.0, 80.0, 560.0]), 25.0),
        (np.array([-60.0, -40.0, 300.0]), np.array([-60.0, -40.0, 300.0]), 50.0),  # sphere
    ]
    rendered = render_primitives(view, capsules=capsules, supersample=1).probabilities
    hit, band = march_hits(view, capsules)
    agree = (rendered >= 0.5) == hit
    assert agree[~band].all()


def test_supersampling_softens_only_the_boundary():
    scene = scene_tree_a()
    rig = desk_rig(0)
    view = rig.views()[0]
    soft = render_primitives(view, capsules=scene.all_capsules(), supersample=3).probabilities
    hard = render_primitives(view, capsules=scene.all_capsules(), supersample=1).probabilities
    frac = soft[(soft > 0) & (soft < 1)]
    assert frac.size > 0                       # boundary pixels exist
    assert ((soft == 0) | (soft == 1)).sum() > 0.9 * soft.size
    # away from fractional pixels the two agree exactly
    interior = (soft == 1)
    assert (hard[interior] == 1).all()


def test_render_rejects_distortion_and_bad_supersample():
    from treevox.calibration import CameraIntrinsics, CameraView
    from treevox.synthetic import look_at

    pose = look_at(np.array([500.0, 0.0, 300.0]), np.array([0.0, 0.0, 300.0]))
    distorted = CameraIntrinsics(60.0, 60.0, 31.5, 23.5, 0.1, 0.0, 64, 48)
    with pytest.raises(ValueError, match="distortion"):
        render_primitives(CameraView(1, 1, distorted, pose), capsules=[])
    clean = CameraIntrinsics(60.0, 60.0, 31.5, 23.5, 0.0, 0.0, 64, 48)
    with pytest.raises(ValueError, match="supersample"):
        render_primitives(CameraView(1, 1, clean, pose), capsules=[], supersample=0)


def test_voxelize_capsules_matches_distance_check():
    rng = np.random.default_rng(21)
    for _ in range(5):
        p0 = rng.uniform(5, 55, size=3)
        p1 = rng.uniform(5, 55, size=3)
        r = rng.uniform(2, 8)
        occ = voxelize_capsules([(p0, p1, r)], origin=(0, 0, 0), voxel_size=3.0,
                                dims=(20, 20, 20))
        centers = (np.argwhere(np.ones((20, 20, 20), bool)) + 0.5) * 3.0
        axis = p1 - p0
        L2 = float(axis @ axis)
        s = np.clip((centers - p0) @ axis / L2, 0, 1) if L2 > 0 else np.zeros(len(centers))
        d = np.linalg.norm(centers - (p0 + s[:, None] * axis), axis=1)
        want = (d <= r).reshape(20, 20, 20)
        assert np.array_equal(occ, want)


def test_rig_views_are_ordered_and_sized():
    rig = desk_rig(3)
    views = rig.views()
    assert len(views) == 24
    keys = [(v.pose_index, v.camera_id) for v in views]
    assert keys == sorted(keys)
    assert views[0].intrinsics.width == 640 and views[0].intrinsics.height == 480
    rig2 = full_rig(0)
    assert len(rig2.views()) == 56
    assert rig2.views()[0].intrinsics.width == 1900


def test_rig_looks_at_target():
    rig = desk_rig(1)
    for view in rig.views():
        cols, rows, in_front = project(view, rig.target[None, :])
        assert in_front[0]
        # jittered aim keeps the subject near the frame center
        assert abs(cols[0] - 319.5) < 80 and abs(rows[0] - 239.5) < 80


def test_synthesized_calibration_reproduces_rig_extrinsics():
    # the exported X/Z/B blocks must compose back to the true camera poses
    rig = desk_rig(2)
    calib = rig.calibration_set(seed=9)
    true_views = {(v.pose_index, v.camera_id): v for v in rig.views()}
    recon = calib.views()
    assert len(recon) == len(true_views)
    for v in recon:
        want = true_views[(v.pose_index, v.camera_id)]
        assert np.allclose(v.extrinsics.as_matrix(), want.extrinsics.as_matrix(), atol=1e-8)


def test_perturbation_validates_and_localizes():
    scene = scene_tree_a()
    rig = desk_rig(0)
    maps = render_scene(scene, rig)
    with pytest.raises(ValueError):
        perturb_silhouettes(maps, 0.3, seed=0)
    with pytest.raises(ValueError):
        perturb_silhouettes(maps, -0.1, seed=0)
    out = perturb_silhouettes(maps, 0.05, seed=0, view_fraction=0.2)
    changed = [i for i, (a, b) in enumerate(zip(maps, out))
               if not np.array_equal(a.probabilities, b.probabilities)]
    assert len(changed) == round(0.2 * len(maps))
    for m in out:
        assert m.probabilities.min() >= 0.0 and m.probabilities.max() <= 1.0
    # deterministic for a fixed seed
    again = perturb_silhouettes(maps, 0.05, seed=0, view_fraction=0.2)
    for a, b in zip(out, again):
        assert np.array_equal(a.probabilities, b.probabilities)


def test_scene_roundtrip(tmp_path):
    scene = scene_tree_a()
    save_scene(tmp_path / "s.json", scene)
    back = load_scene(tmp_path / "s.json")
    assert back.name == scene.name
    assert np.allclose(back.region_min, scene.region_min)
    assert np.allclose(back.region_max, scene.region_max)
    assert len(back.tree.branches) == len(scene.tree.branches)
    for a, b in zip(back.tree.branches, scene.tree.branches):
        assert np.allclose(a.start, b.start) and np.allclose(a.end, b.end)
        assert a.radius == b.radius and a.parent == b.parent


def test_preset_geometry_pins():
    gt = ground_truth(scene_tree_a().tree)
    assert sorted(round(b.diameter, 1) for b in gt.branches) == [14.1, 16.1, 17.5, 23.0, 34.5]
    fan = ground_truth(scene_angle_fan().tree)
    assert sorted(round(b.angle) for b in fan.branches if b.angle is not None) == [30, 45, 60, 75]
