"""From occupancy to a rooted branch graph.

Carves the five-branch tree preset, runs the exact distance transform, traces
the curve skeleton along ridge lines of the distance field, and assembles the
rooted graph.  Prints the topology as an indented tree.
"""

import numpy as np

from treevox import synthetic as syn
from treevox.edt import distance_transform
from treevox.graph import build_graph, graph_to_text
from treevox.reconstruction import CarveConfig, carve_hierarchical
from treevox.skeleton import SkeletonConfig, skeletonize

scene = syn.scene_tree_a()
rig = syn.desk_rig(seed=0)
views = rig.views(syn.render_scene(scene, rig))

grid = carve_hierarchical(scene.region_min, scene.region_max, views, CarveConfig())
print(f"carved {grid.n_occupied} voxels at {grid.voxel_size:.0f} mm")

grid = distance_transform(grid)
labels = grid.distance_labels[grid.occupancy] * grid.voxel_size
print(f"distance to nearest empty voxel: median {np.median(labels):.1f} mm, "
      f"max {labels.max():.1f} mm (about the trunk radius)")

segments = skeletonize(grid, SkeletonConfig())
total = sum(s.length_mm(grid.voxel_size) for s in segments)
print(f"skeleton: {len(segments)} segments, {total:.0f} mm of centerline")

graph = build_graph(segments, grid)
root = graph.vertices[graph.root]
print(f"graph: {len(graph.vertices)} vertices, {len(graph.edges)} edges, "
      f"{len(graph.tips())} tips, root voxel {root.voxel} "
      f"(lowest point of the trunk)")
print()
print(graph_to_text(graph))
