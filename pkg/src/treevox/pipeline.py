"""End-to-end trait pipeline driven by a JSON config.

Stages run in the fixed order segment -> carve -> edt -> skeletonize ->
graph -> traits.  Every stage reads its inputs from disk and writes its
outputs to disk, so any stage can be re-run from its predecessor's
artifacts; a full run is just all stages back to back.  Outputs land in the
configured output directory:

    silhouettes/sil_<pose>_<camera>.pgm   (segment)
    occupancy.vox, occupied.ply           (carve)
    labels.npy, labels.ply                (edt)
    skeleton.json, skeleton.ply           (skeletonize)
    graph.json, graph.txt, graph.ply      (graph)
    traits.json [, comparison.json]       (traits)
    timings.json                          (always, informational)

Timing lives in its own file so the trait report stays byte-identical
across runs of the same inputs.
"""

from __future__ import annotations

import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import load_calibration
from .edt import distance_transform
from .graph import build_graph, graph_to_ply, graph_to_text, load_graph, save_graph
from .ply import write_ply
from .reconstruction import (
    CarveConfig,
    carve_hierarchical,
    grid_to_ply,
    labels_to_grid,
    load_occupancy,
    save_occupancy,
)
from .segmentation import (
    DEFAULT_BACKGROUND_RGB,
    DEFAULT_SOFTNESS,
    DEFAULT_THRESHOLD,
    load_color_image,
    load_silhouette,
    save_silhouette,
    segment_chroma,
)
from .skeleton import SkeletonConfig, load_skeleton, save_skeleton, skeleton_to_ply, skeletonize
from .traits import TraitConfig, load_report, measure_all, save_report

STAGES = ("segment", "carve", "edt", "skeletonize", "graph", "traits")

# default search region: desk-scale 0.5 x 0.5 x 1.0 m box centered on the
# turntable axis
DEFAULT_REGION_MIN = (-250.0, -250.0, 0.0)
DEFAULT_REGION_MAX = (250.0, 250.0, 1000.0)


@dataclass
class SegmentationConfig:
    background_rgb: tuple = DEFAULT_BACKGROUND_RGB
    softness: float = DEFAULT_SOFTNESS
    threshold: float = DEFAULT_THRESHOLD


@dataclass
class PipelineConfig:
    calibration: str = "calibration.txt"
    images: str | None = None          # input frames for the segment stage
    silhouettes: str | None = None     # precomputed maps; replaces segment
    output: str = "out"
    region_min: tuple = DEFAULT_REGION_MIN
    region_max: tuple = DEFAULT_REGION_MAX
    up_axis: str = "z"
    stages: tuple = STAGES
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    carve: CarveConfig = field(default_factory=CarveConfig)
    skeleton: SkeletonConfig = field(default_factory=SkeletonConfig)
    traits: TraitConfig = field(default_factory=TraitConfig)
    ground_truth: str | None = None    # trait report to compare against
    match_radius: float = 30.0         # mm, junction matching for comparison
    workers: int = 1                   # accepted for CLI symmetry; no effect
    base_dir: str = "."                # resolution root for relative paths

    def __post_init__(self):
        lo = np.asarray(self.region_min, dtype=float)
        hi = np.asarray(self.region_max, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("region_min/region_max must be 3-vectors")
        if not np.all(hi > lo):
            raise ValueError("search region must have positive volume")
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ValueError(f"unknown stages {bad}; valid: {list(STAGES)}")
        # canonical execution order regardless of how stages were listed
        self.stages = tuple(s for s in STAGES if s in self.stages)
        if not self.stages:
            raise ValueError("no stages selected")
        if self.up_axis not in ("x", "y", "z"):
            raise ValueError(f"up_axis must be x, y or z, not {self.up_axis!r}")

    def resolve(self, p: str | Path) -> Path:
        return (Path(self.base_dir) / p).expanduser()


def config_to_dict(cfg: PipelineConfig) -> dict:
    doc = {
        "calibration": cfg.calibration,
        "images": cfg.images,
        "silhouettes": cfg.silhouettes,
        "output": cfg.output,
        "region_min": list(np.asarray(cfg.region_min, dtype=float)),
        "region_max": list(np.asarray(cfg.region_max, dtype=float)),
        "up_axis": cfg.up_axis,
        "stages": list(cfg.stages),
        "segmentation": {
            "background_rgb": list(cfg.segmentation.background_rgb),
            "softness": cfg.segmentation.softness,
            "threshold": cfg.segmentation.threshold,
        },
        "carve": dataclasses.asdict(cfg.carve),
        "skeleton": dataclasses.asdict(cfg.skeleton),
        "traits": dataclasses.asdict(cfg.traits),
        "ground_truth": cfg.ground_truth,
        "match_radius": cfg.match_radius,
        "workers": cfg.workers,
    }
    return doc


def config_from_doc(doc: dict, base_dir: str = ".") -> PipelineConfig:
    known = {
        "calibration", "images", "silhouettes", "output", "region_min",
        "region_max", "up_axis", "stages", "segmentation", "carve",
        "skeleton", "traits", "ground_truth", "match_radius", "workers",
    }
    extra = set(doc) - known
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")
    kw = {k: doc[k] for k in known & set(doc)}
    if "segmentation" in kw:
        seg = dict(kw["segmentation"])
        if "background_rgb" in seg:
            seg["background_rgb"] = tuple(seg["background_rgb"])
        kw["segmentation"] = SegmentationConfig(**seg)
    if "carve" in kw:
        kw["carve"] = CarveConfig(**kw["carve"])
    if "skeleton" in kw:
        kw["skeleton"] = SkeletonConfig(**kw["skeleton"])
    if "traits" in kw:
        kw["traits"] = TraitConfig(**kw["traits"])
    if "stages" in kw:
        kw["stages"] = tuple(kw["stages"])
    if "region_min" in kw:
        kw["region_min"] = tuple(kw["region_min"])
    if "region_max" in kw:
        kw["region_max"] = tuple(kw["region_max"])
    return PipelineConfig(base_dir=base_dir, **kw)


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"pipeline config not found: {path}")
    doc = json.loads(path.read_text())
    return config_from_doc(doc, base_dir=str(path.parent))


def save_pipeline_config(path: str | Path, cfg: PipelineConfig) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Stages. Each reads from disk and writes to disk; `out` is the resolved
# output directory.
# ---------------------------------------------------------------------------


def _parse_tag(stem: str, prefix: str):
    """'img_3_1' -> (3, 1); None when the name does not follow the scheme."""
    parts = stem.split("_")
    if len(parts) != 3 or parts[0] != prefix:
        return None
    try:
        return int(parts[1]), int(parts[2])
    except ValueError:
        return None


def _stage_segment(cfg: PipelineConfig, out: Path) -> None:
    if cfg.images is None:
        raise ValueError("segment stage needs an images directory in the config")
    img_dir = cfg.resolve(cfg.images)
    if not img_dir.is_dir():
        raise FileNotFoundError(f"image directory not found: {img_dir}")
    frames = sorted(
        p for p in img_dir.iterdir()
        if p.suffix.lower() in (".ppm", ".pgm", ".png") and _parse_tag(p.stem, "img")
    )
    if not frames:
        raise ValueError(f"no img_<pose>_<camera> frames in {img_dir}")
    sil_dir = out / "silhouettes"
    sil_dir.mkdir(parents=True, exist_ok=True)
    s = cfg.segmentation
    for p in frames:
        j, c = _parse_tag(p.stem, "img")
        silmap = segment_chroma(
            load_color_image(p),
            background_rgb=s.background_rgb,
            softness=s.softness,
            threshold=s.threshold,
        )
        save_silhouette(sil_dir / f"sil_{j}_{c}.pgm", silmap)


def _load_views(cfg: PipelineConfig, out: Path):
    """Calibrated views with silhouettes attached from the map directory."""
    calib_path = cfg.resolve(cfg.calibration)
    if not calib_path.exists():
        raise FileNotFoundError(f"calibration file not found: {calib_path}")
    calib = load_calibration(calib_path)
    sil_dir = cfg.resolve(cfg.silhouettes) if cfg.silhouettes else out / "silhouettes"
    views = []
    for v in calib.views():
        sp = sil_dir / f"sil_{v.pose_index}_{v.camera_id}.pgm"
        if not sp.exists():
            raise FileNotFoundError(f"silhouette map not found: {sp}")
        views.append(dataclasses.replace(v, silhouette=load_silhouette(sp)))
    return views


def _stage_carve(cfg: PipelineConfig, out: Path) -> None:
    views = _load_views(cfg, out)
    grid = carve_hierarchical(cfg.region_min, cfg.region_max, views, cfg.carve)
    save_occupancy(out / "occupancy.vox", grid)
    grid_to_ply(out / "occupied.ply", grid)


def _stage_edt(cfg: PipelineConfig, out: Path) -> None:
    grid = load_occupancy(out / "occupancy.vox")
    grid = distance_transform(grid)
    np.save(out / "labels.npy", grid.distance_labels)
    write_ply(
        out / "labels.ply",
        grid.occupied_centers(),
        scalars={"label": grid.distance_labels[grid.occupancy]},
    )


def _labeled_grid(out: Path):
    grid = load_occupancy(out / "occupancy.vox")
    labels_path = out / "labels.npy"
    if not labels_path.exists():
        raise FileNotFoundError(f"distance labels not found: {labels_path}")
    return labels_to_grid(grid, np.load(labels_path))


def _stage_skeletonize(cfg: PipelineConfig, out: Path) -> None:
    grid = _labeled_grid(out)
    segments = skeletonize(grid, cfg.skeleton)
    save_skeleton(out / "skeleton.json", segments)
    skeleton_to_ply(out / "skeleton.ply", segments, grid)


def _stage_graph(cfg: PipelineConfig, out: Path) -> None:
    grid = load_occupancy(out / "occupancy.vox")
    segments = load_skeleton(out / "skeleton.json")
    g = build_graph(segments, grid, up_axis=cfg.up_axis)
    save_graph(out / "graph.json", g)
    (out / "graph.txt").write_text(graph_to_text(g))
    graph_to_ply(out / "graph.ply", g, grid)


def _stage_traits(cfg: PipelineConfig, out: Path) -> None:
    grid = _labeled_grid(out)
    g = load_graph(out / "graph.json")
    report = measure_all(g, grid, cfg.traits, up_axis=cfg.up_axis)
    save_report(out / "traits.json", report)
    if cfg.ground_truth:
        gt_path = cfg.resolve(cfg.ground_truth)
        if not gt_path.exists():
            raise FileNotFoundError(f"ground-truth report not found: {gt_path}")
        summary = compare_traits(report, load_report(gt_path), cfg.match_radius)
        (out / "comparison.json").write_text(json.dumps(summary, indent=2) + "\n")


_STAGE_FN = {
    "segment": _stage_segment,
    "carve": _stage_carve,
    "edt": _stage_edt,
    "skeletonize": _stage_skeletonize,
    "graph": _stage_graph,
    "traits": _stage_traits,
}


def run_pipeline(cfg: PipelineConfig) -> int:
    """Run the configured stages; 0 on success, 1 stage failure, 2 bad input."""
    out = cfg.resolve(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    t_all = time.perf_counter()
    for stage in cfg.stages:
        t0 = time.perf_counter()
        try:
            _STAGE_FN[stage](cfg, out)
        except FileNotFoundError as e:
            print(f"treevox pipeline: stage {stage}: {e}", file=sys.stderr)
            return 2
        except Exception as e:
            print(f"treevox pipeline: stage {stage} failed: {e}", file=sys.stderr)
            return 1
        timings[stage] = time.perf_counter() - t0
        print(f"[{stage}] {timings[stage]:.2f}s")
    # informational breakdown grouped the way turntable-rig reports usually
    # split it: segmentation / reconstruction / everything after
    grouped = {
        "segmentation_s": timings.get("segment", 0.0),
        "reconstruction_s": timings.get("carve", 0.0),
        "traits_extraction_s": sum(
            timings.get(s, 0.0) for s in ("edt", "skeletonize", "graph", "traits")
        ),
    }
    doc = {
        "stages_s": timings,
        "grouped": grouped,
        "total_s": time.perf_counter() - t_all,
    }
    (out / "timings.json").write_text(json.dumps(doc, indent=2) + "\n")
    return 0


# ---------------------------------------------------------------------------
# Report comparison
# ---------------------------------------------------------------------------


def _match_branches(measured: list, truth: list, radius: float) -> list:
    """Greedy nearest-junction pairs within `radius` mm.

    Whorls put several branches at one junction, so ranking adds a direction
    penalty (25 mm per unit of lost cosine alignment) that separates
    same-junction candidates while leaving distinct junctions ordered by
    distance alone.  Each branch on either side matches at most once.
    """
    pairs = []
    for i, m in enumerate(measured):
        for k, t in enumerate(truth):
            d = float(np.linalg.norm(np.asarray(m.junction) - np.asarray(t.junction)))
            if d > radius:
                continue
            score = d
            if m.direction is not None and t.direction is not None:
                score += 25.0 * (1.0 - float(np.dot(m.direction, t.direction)))
            pairs.append((score, d, i, k))
    pairs.sort()
    used_m, used_t, out = set(), set(), []
    for _, d, i, k in pairs:
        if i in used_m or k in used_t:
            continue
        used_m.add(i)
        used_t.add(k)
        out.append((i, k, d))
    return out


def _error_stats(errors: list) -> dict:
    if not errors:
        return {"n": 0}
    e = np.asarray(errors, dtype=float)
    return {
        "n": int(e.size),
        "mse": float(np.mean(e ** 2)),
        "rmse": float(np.sqrt(np.mean(e ** 2))),
        "mae": float(np.mean(np.abs(e))),
        "std": float(np.std(e)),
    }


def compare_traits(report, ground_truth, match_radius: float = 30.0) -> dict:
    """Error summary of a measured report against a ground-truth report.

    Emits MSE, RMSE and MAE per trait (all labeled — "mean squared error" in
    linear units is ambiguous) plus the standard deviation of the signed
    errors, over greedily matched branches.
    """
    matches = _match_branches(report.branches, ground_truth.branches, match_radius)
    errors = {"diameter_mm": [], "length_mm": [], "angle_deg": []}
    rows = []
    for i, k, d in matches:
        m, t = report.branches[i], ground_truth.branches[k]
        rows.append({
            "measured": m.branch_id,
            "ground_truth": t.branch_id,
            "junction_distance_mm": d,
        })
        for key, attr in (("diameter_mm", "diameter"), ("length_mm", "length"),
                          ("angle_deg", "angle")):
            mv, tv = getattr(m, attr), getattr(t, attr)
            if mv is not None and tv is not None:
                errors[key].append(mv - tv)
    matched_m = {i for i, _, _ in matches}
    matched_t = {k for _, k, _ in matches}
    summary = {
        "n_measured": len(report.branches),
        "n_ground_truth": len(ground_truth.branches),
        "match_radius_mm": match_radius,
        "matches": rows,
        "unmatched_measured": [
            b.branch_id for i, b in enumerate(report.branches) if i not in matched_m
        ],
        "unmatched_ground_truth": [
            b.branch_id for k, b in enumerate(ground_truth.branches) if k not in matched_t
        ],
    }
    if not matches:
        summary["zero-matches"] = True
    for key in errors:
        summary[key] = _error_stats(errors[key])
    return summary
