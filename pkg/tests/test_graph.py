import numpy as np
import pytest

from treevox.graph import TreeGraph, build_graph, graph_to_ply, graph_to_text, load_graph, save_graph, select_root
from treevox.reconstruction import VoxelGrid
from treevox.skeleton import SkeletonSegment


def chebyshev_path(a, b):
    """26-connected straight-ish walk from voxel a to voxel b."""
    path = [tuple(a)]
    cur = np.array(a)
    tgt = np.array(b)
    while not np.array_equal(cur, tgt):
        cur = cur + np.sign(tgt - cur)
        path.append(tuple(cur))
    return SkeletonSegment(np.array(path, dtype=np.int32))


def random_tree_segments(rng, n_vertices):
    """Random recursive tree over distinct lattice voxels; returns shuffled,
    randomly flipped segments plus the vertex array."""
    # coarse lattice keeps endpoints distinct and paths >= 2 voxels
    coords = rng.choice(20 ** 3, size=n_vertices, replace=False)
    verts = np.stack(np.unravel_index(coords, (20, 20, 20)), axis=1) * 4
    segs = []
    for i in range(1, n_vertices):
        p = int(rng.integers(0, i))
        seg = chebyshev_path(verts[p], verts[i])
        if rng.uniform() < 0.5:
            seg = SkeletonSegment(seg.path[::-1])
        segs.append(seg)
    order = rng.permutation(len(segs))
    return [segs[i] for i in order], verts


def grid_for(verts):
    dims = tuple(int(v) for v in np.max(verts, axis=0) + 2)
    return VoxelGrid((0.0, 0.0, 0.0), 3.0, dims, np.zeros(dims, dtype=bool))


def graph_invariants(g: TreeGraph, n_segments: int):
    assert len(g.edges) == len(g.vertices) - 1
    # exactly one in-edge everywhere but the root; start precedes end
    seen_end = set()
    for e in g.edges:
        assert e.end not in seen_end
        seen_end.add(e.end)
        assert e.end != g.root
        assert tuple(e.path[0]) == g.vertices[e.start].voxel
        assert tuple(e.path[-1]) == g.vertices[e.end].voxel
    # every vertex reachable from the root
    children = {}
    for e in g.edges:
        children.setdefault(e.start, []).append(e.end)
    reached = {g.root}
    stack = [g.root]
    while stack:
        for c in children.get(stack.pop(), []):
            reached.add(c)
            stack.append(c)
    assert reached == {v.id for v in g.vertices}
    # tips are exactly the out-degree-zero vertices
    assert set(g.tips()) == {v.id for v in g.vertices if v.id not in children}
    assert len(g.edges) + len(g.cycle_remainder) == n_segments


def test_random_acyclic_sets_uphold_invariants():
    rng = np.random.default_rng(30)
    for _ in range(30):
        n = int(rng.integers(2, 24))
        segs, verts = random_tree_segments(rng, n)
        g = build_graph(segs, grid_for(verts))
        assert len(g.vertices) == n
        assert len(g.cycle_remainder) == 0
        graph_invariants(g, len(segs))


def test_input_order_invariance():
    rng = np.random.default_rng(31)
    segs, verts = random_tree_segments(rng, 15)
    grid = grid_for(verts)
    a = build_graph(segs, grid)
    b = build_graph(list(reversed(segs)), grid)
    assert [v.voxel for v in a.vertices] == [v.voxel for v in b.vertices]
    assert [(e.start, e.end) for e in a.edges] == [(e.start, e.end) for e in b.edges]
    for ea, eb in zip(a.edges, b.edges):
        assert np.array_equal(ea.path, eb.path)


def test_cycle_input_yields_remainder_and_acyclic_graph():
    rng = np.random.default_rng(32)
    segs, verts = random_tree_segments(rng, 10)
    # close a cycle between two existing tree vertices
    extra = chebyshev_path(verts[2], verts[7])
    g = build_graph(segs + [extra], grid_for(verts))
    assert len(g.cycle_remainder) >= 1
    graph_invariants(g, len(segs) + 1)


def test_select_root_prefers_lowest_along_up_axis():
    grid = VoxelGrid((0, 0, 0), 3.0, (12, 12, 12), np.zeros((12, 12, 12), bool))
    segs = [chebyshev_path((5, 5, 9), (5, 5, 2)), chebyshev_path((5, 5, 9), (2, 8, 6))]
    assert select_root(segs, grid) == (5, 5, 2)
    assert select_root(segs, grid, up_axis="x") == (2, 8, 6)
    with pytest.raises(ValueError):
        select_root([], grid)
    with pytest.raises(ValueError):
        select_root(segs, grid, up_axis="w")


def test_root_is_vertex_zero_at_lowest_tip():
    rng = np.random.default_rng(33)
    segs, verts = random_tree_segments(rng, 12)
    grid = grid_for(verts)
    g = build_graph(segs, grid)
    assert g.root == 0
    zs = [grid.index_to_center(np.array(v.voxel))[2] for v in g.vertices]
    assert zs[0] == min(zs)


def test_self_loop_segment_rejected():
    grid = VoxelGrid((0, 0, 0), 3.0, (6, 6, 6), np.zeros((6, 6, 6), bool))
    loop = SkeletonSegment.__new__(SkeletonSegment)
    loop.path = np.array([[1, 1, 1], [1, 1, 2], [1, 1, 1]], dtype=np.int32)
    with pytest.raises(ValueError, match="self-loop"):
        build_graph([loop], grid)


def test_roundtrip_and_text(tmp_path):
    rng = np.random.default_rng(34)
    segs, verts = random_tree_segments(rng, 8)
    extra = chebyshev_path(verts[1], verts[5])
    grid = grid_for(verts)
    g = build_graph(segs + [extra], grid)
    save_graph(tmp_path / "g.json", g)
    back = load_graph(tmp_path / "g.json")
    assert back.root == g.root
    assert [(v.id, v.voxel) for v in back.vertices] == [(v.id, v.voxel) for v in g.vertices]
    assert [(e.start, e.end) for e in back.edges] == [(e.start, e.end) for e in g.edges]
    assert len(back.cycle_remainder) == len(g.cycle_remainder)
    text = graph_to_text(g)
    assert text.startswith("root v0\n")
    assert f"vertices {len(g.vertices)}" in text
    assert f"cycle_remainder_segments {len(g.cycle_remainder)}" in text
    graph_to_ply(tmp_path / "g.ply", g, grid)
    assert (tmp_path / "g.ply").read_bytes().startswith(b"ply")
    with pytest.raises(FileNotFoundError):
        load_graph(tmp_path / "missing.json")
