"""Full trait measurement against analytic ground truth.

Runs the five-branch tree preset end to end in memory — render, carve,
distance transform, skeleton, graph, traits — then matches measured branches
to the analytic ground truth and prints a per-branch error table.
"""

import numpy as np

from treevox import synthetic as syn
from treevox.edt import distance_transform
from treevox.graph import build_graph
from treevox.pipeline import compare_traits
from treevox.reconstruction import CarveConfig, carve_hierarchical
from treevox.skeleton import SkeletonConfig, skeletonize
from treevox.traits import TraitConfig, measure_all

scene = syn.scene_tree_a()
truth = syn.ground_truth(scene.tree)
rig = syn.desk_rig(seed=0)
views = rig.views(syn.render_scene(scene, rig))

grid = carve_hierarchical(scene.region_min, scene.region_max, views, CarveConfig())
grid = distance_transform(grid)
graph = build_graph(skeletonize(grid, SkeletonConfig()), grid)
report = measure_all(graph, grid, TraitConfig())

summary = compare_traits(report, truth)
by_m = {b.branch_id: b for b in report.branches}
by_t = {b.branch_id: b for b in truth.branches}

print(f"{'branch':>10} {'true dia':>9} {'meas dia':>9} {'true len':>9} "
      f"{'meas len':>9} {'true ang':>9} {'meas ang':>9}")
for row in summary["matches"]:
    m, t = by_m[row["measured"]], by_t[row["ground_truth"]]
    ang_t = "-" if t.angle is None else f"{t.angle:9.1f}"
    ang_m = "-" if m.angle is None else f"{m.angle:9.1f}"
    print(f"{row['ground_truth']:>10} {t.diameter:9.1f} {m.diameter:9.1f} "
          f"{t.length:9.1f} {m.length:9.1f} {ang_t:>9} {ang_m:>9}")

print()
for key in ("diameter_mm", "length_mm", "angle_deg"):
    s = summary[key]
    print(f"{key:12s} rmse {s['rmse']:.2f}  mae {s['mae']:.2f}  "
          f"std {s['std']:.2f}  (n={s['n']})")
