"""Command-line front end.

One subcommand per pipeline stage (segment, carve, edt, skeletonize, graph,
traits) plus `pipeline` for an end-to-end run from a JSON config, `synth`
for generating test scenes, and `compare` for scoring a trait report
against ground truth.  Stage subcommands operate on an artifact directory
(--out) so each stage can be re-run from its predecessor's files.

Exit codes: 0 success, 1 stage failure, 2 bad config or missing input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import synthetic
from .calibration import CalibrationError
from .reconstruction import CarveConfig
from .pipeline import (
    STAGES,
    PipelineConfig,
    compare_traits,
    config_from_doc,
    config_to_dict,
    run_pipeline,
    save_pipeline_config,
)
from .traits import load_report


def _vec3(text: str):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"need three comma-separated numbers, got {text!r}")
    return tuple(parts)


def _rgb(text: str):
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"need R,G,B, got {text!r}")
    return tuple(parts)


def _csv(text: str):
    return tuple(s.strip() for s in text.split(",") if s.strip())


# flag -> dotted config location; shared between `pipeline` and the
# single-stage subcommands so every config field has a flag spelling
_OVERRIDES = {
    "calibration": "calibration",
    "images": "images",
    "silhouettes": "silhouettes",
    "output": "output",
    "region_min": "region_min",
    "region_max": "region_max",
    "up_axis": "up_axis",
    "stages": "stages",
    "ground_truth": "ground_truth",
    "match_radius": "match_radius",
    "workers": "workers",
    "background_rgb": "segmentation.background_rgb",
    "softness": "segmentation.softness",
    "threshold": "segmentation.threshold",
    "initial_voxel_size": "carve.initial_voxel_size",
    "final_voxel_size": "carve.final_voxel_size",
    "silhouette_threshold": "carve.silhouette_threshold",
    "consistency_fraction": "carve.consistency_fraction",
    "dilation_radius": "carve.dilation_radius",
    "coverage_radius_scale": "skeleton.coverage_radius_scale",
    "min_branch_length": "skeleton.min_branch_length",
    "centering_exponent": "skeleton.centering_exponent",
    "n_d": "traits.n_d",
    "d_angle": "traits.d_angle",
}


def _add_segmentation_flags(p):
    p.add_argument("--background-rgb", type=_rgb, metavar="R,G,B",
                   help="reference background color")
    p.add_argument("--softness", type=float, help="logistic width of the chroma cut")
    p.add_argument("--threshold", type=float, help="chroma distance at probability 0.5")


def _add_carve_flags(p):
    p.add_argument("--region-min", type=_vec3, metavar="X,Y,Z", help="search box corner (mm)")
    p.add_argument("--region-max", type=_vec3, metavar="X,Y,Z", help="search box corner (mm)")
    p.add_argument("--initial-voxel-size", type=float, help="coarsest level (mm)")
    p.add_argument("--final-voxel-size", type=float, help="finest level (mm)")
    p.add_argument("--silhouette-threshold", type=float,
                   help="probability counting as silhouette")
    p.add_argument("--consistency-fraction", type=float,
                   help="fraction of valid views that must agree")
    p.add_argument("--dilation-radius", type=int, help="survivor dilation between levels")


def _add_skeleton_flags(p):
    p.add_argument("--coverage-radius-scale", type=float,
                   help="coverage ball radius as a multiple of the distance label")
    p.add_argument("--min-branch-length", type=float, help="prune threshold (mm)")
    p.add_argument("--centering-exponent", type=float,
                   help="exponent of the centering penalty")


def _add_trait_flags(p):
    p.add_argument("--n-d", type=int, help="vertices averaged for the diameter")
    p.add_argument("--d-angle", type=float,
                   help="distance from the junction where directions are sampled (mm)")


def _add_up_axis_flag(p):
    p.add_argument("--up-axis", choices=("x", "y", "z"), help="vertical axis of the scene")


def _collect_overrides(args) -> dict:
    """Nested {section: {key: value}} of the flags the user actually set."""
    doc: dict = {}
    for dest, target in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        node = doc
        *heads, leaf = target.split(".")
        for h in heads:
            node = node.setdefault(h, {})
        node[leaf] = value
    return doc


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _stage_config(args, stages: tuple) -> PipelineConfig:
    doc = _collect_overrides(args)
    doc["stages"] = list(stages)
    if getattr(args, "out", None) is not None:
        doc["output"] = args.out
    return config_from_doc(doc)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treevox",
                                 description="Tree-trait measurement from silhouettes")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="color frames to silhouette probability maps")
    p.add_argument("--images", required=True, help="directory of img_<pose>_<camera> frames")
    p.add_argument("--out", required=True, help="artifact directory (maps go to silhouettes/)")
    _add_segmentation_flags(p)

    p = sub.add_parser("carve", help="silhouettes to an occupancy grid")
    p.add_argument("--calibration", required=True)
    p.add_argument("--silhouettes", required=True,
                   help="directory of sil_<pose>_<camera>.pgm maps")
    p.add_argument("--out", required=True, help="artifact directory")
    _add_carve_flags(p)

    p = sub.add_parser("edt", help="distance labels for an occupancy grid")
    p.add_argument("--out", required=True, help="artifact directory holding occupancy.vox")

    p = sub.add_parser("skeletonize", help="curve skeleton from labeled occupancy")
    p.add_argument("--out", required=True,
                   help="artifact directory holding occupancy.vox + labels.npy")
    _add_skeleton_flags(p)

    p = sub.add_parser("graph", help="skeleton segments to a rooted tree graph")
    p.add_argument("--out", required=True, help="artifact directory holding skeleton.json")
    _add_up_axis_flag(p)

    p = sub.add_parser("traits", help="per-branch diameter, length and angle")
    p.add_argument("--out", required=True, help="artifact directory holding graph.json")
    p.add_argument("--ground-truth", help="trait report to compare against")
    p.add_argument("--match-radius", type=float, help="junction matching radius (mm)")
    _add_trait_flags(p)
    _add_up_axis_flag(p)

    p = sub.add_parser("pipeline", help="run all stages from a JSON config")
    p.add_argument("--config", help="pipeline config file; flags override its fields")
    p.add_argument("--calibration")
    p.add_argument("--images")
    p.add_argument("--silhouettes")
    p.add_argument("--output")
    p.add_argument("--stages", type=_csv, metavar="A,B,...",
                   help=f"subset of {','.join(STAGES)}")
    p.add_argument("--ground-truth")
    p.add_argument("--match-radius", type=float)
    p.add_argument("--workers", type=int, help="accepted for symmetry; does not change output")
    _add_segmentation_flags(p)
    _add_carve_flags(p)
    _add_skeleton_flags(p)
    _add_trait_flags(p)
    _add_up_axis_flag(p)

    p = sub.add_parser("synth", help="render a synthetic scene bundle")
    p.add_argument("--preset", choices=sorted(synthetic.PRESETS), help="scene to render")
    p.add_argument("--list-presets", action="store_true")
    p.add_argument("--out", help="bundle directory")
    p.add_argument("--rig-seed", type=int, default=0, help="camera placement jitter seed")
    p.add_argument("--calib-seed", type=int, default=0,
                   help="seed of the synthesized hand-eye calibration")
    p.add_argument("--noise-std", type=float, default=0.0, help="color image noise")
    p.add_argument("--flip-fraction", type=float, default=0.0,
                   help="silhouette boundary perturbation (0..0.2)")
    p.add_argument("--perturb-seed", type=int, default=0)
    p.add_argument("--perturb-view-fraction", type=float, default=0.2,
                   help="fraction of views receiving perturbation")
    p.add_argument("--no-images", action="store_true", help="skip color frames")

    p = sub.add_parser("compare", help="score a trait report against ground truth")
    p.add_argument("--report", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--out", help="write the summary here instead of stdout only")
    p.add_argument("--match-radius", type=float, default=30.0)

    return ap


def _cmd_pipeline(args) -> int:
    if args.config:
        path = Path(args.config)
        if not path.exists():
            print(f"treevox: pipeline config not found: {path}", file=sys.stderr)
            return 2
        doc = json.loads(path.read_text())
        base = str(path.parent)
    else:
        doc, base = {}, "."
    doc = _merge(doc, _collect_overrides(args))
    if getattr(args, "output", None) is not None:
        doc["output"] = args.output
    cfg = config_from_doc(doc, base_dir=base)
    return run_pipeline(cfg)


def _cmd_synth(args) -> int:
    if args.list_presets:
        for name in sorted(synthetic.PRESETS):
            print(name)
        return 0
    if not args.preset or not args.out:
        print("treevox synth: --preset and --out are required", file=sys.stderr)
        return 2
    scene = synthetic.PRESETS[args.preset]()
    settings = synthetic.preset_settings(args.preset)
    rig = synthetic.desk_rig(args.rig_seed, **settings["rig"])
    paths = synthetic.write_scene_bundle(
        args.out,
        scene,
        rig,
        calib_seed=args.calib_seed,
        color_images=not args.no_images,
        noise_std=args.noise_std,
        flip_fraction=args.flip_fraction,
        perturb_seed=args.perturb_seed,
        perturb_view_fraction=args.perturb_view_fraction,
    )
    # ready-to-run config next to the bundle; silhouettes are already exact,
    # so the segment stage is left out (add it back to re-derive them from
    # the color frames)
    cfg = PipelineConfig(
        calibration="calibration.txt",
        images=None if args.no_images else "images",
        silhouettes="silhouettes",
        output="out",
        region_min=tuple(scene.region_min),
        region_max=tuple(scene.region_max),
        stages=tuple(s for s in STAGES if s != "segment"),
        carve=CarveConfig(
            initial_voxel_size=settings["initial_voxel_size"],
            final_voxel_size=settings["final_voxel_size"],
        ),
        ground_truth="ground_truth.json" if "ground_truth" in paths else None,
        base_dir=args.out,
    )
    save_pipeline_config(Path(args.out) / "config.json", cfg)
    print(f"bundle written to {args.out}")
    return 0


def _cmd_compare(args) -> int:
    report = load_report(args.report)
    truth = load_report(args.ground_truth)
    summary = compare_traits(report, truth, args.match_radius)
    text = json.dumps(summary, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


_STAGE_COMMANDS = {
    "segment": ("segment",),
    "carve": ("carve",),
    "edt": ("edt",),
    "skeletonize": ("skeletonize",),
    "graph": ("graph",),
    "traits": ("traits",),
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in _STAGE_COMMANDS:
            return run_pipeline(_stage_config(args, _STAGE_COMMANDS[args.command]))
        if args.command == "pipeline":
            return _cmd_pipeline(args)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "compare":
            return _cmd_compare(args)
    except FileNotFoundError as e:
        print(f"treevox: {e}", file=sys.stderr)
        return 2
    except (ValueError, CalibrationError) as e:
        print(f"treevox: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # stage-level failure
        print(f"treevox: {e}", file=sys.stderr)
        return 1
    raise AssertionError(f"unhandled command {args.command}")


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
