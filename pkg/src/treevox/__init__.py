"""Branching-structure estimation for leafless trees from calibrated
silhouette images.

The pipeline: segment color frames into silhouette probability maps, carve
a voxel occupancy grid tolerant of inconsistent silhouettes, label it with
an exact Euclidean distance transform, extract a curve skeleton, convert
the skeleton into a rooted tree graph, and measure per-branch diameter,
length and junction angle.  `treevox.synthetic` renders ground-truthed
test scenes; the `treevox` console script drives everything from the
command line.
"""

from .calibration import (
    CalibrationError,
    CalibrationSet,
    CameraIntrinsics,
    CameraView,
    HomogeneousTransform,
    compose,
    compute_extrinsics,
    invert,
    load_calibration,
    pixel_rays,
    project,
    save_calibration,
)
from .edt import distance_transform, squared_edt
from .graph import GraphEdge, GraphVertex, TreeGraph, build_graph, load_graph, save_graph
from .pipeline import PipelineConfig, compare_traits, load_pipeline_config, run_pipeline
from .reconstruction import (
    CarveConfig,
    VoxelGrid,
    carve_hierarchical,
    carve_level,
    load_occupancy,
    save_occupancy,
)
from .segmentation import ColorImage, SilhouetteMap, load_silhouette, save_silhouette, segment_chroma
from .skeleton import SkeletonConfig, SkeletonSegment, skeletonize
from .traits import BranchTraitReport, BranchTraits, TraitConfig, load_report, measure_all, save_report

__version__ = "0.1.0"

__all__ = [
    "BranchTraitReport",
    "BranchTraits",
    "CalibrationError",
    "CalibrationSet",
    "CameraIntrinsics",
    "CameraView",
    "CarveConfig",
    "ColorImage",
    "GraphEdge",
    "GraphVertex",
    "HomogeneousTransform",
    "PipelineConfig",
    "SilhouetteMap",
    "SkeletonConfig",
    "SkeletonSegment",
    "TraitConfig",
    "TreeGraph",
    "VoxelGrid",
    "build_graph",
    "carve_hierarchical",
    "carve_level",
    "compare_traits",
    "compose",
    "compute_extrinsics",
    "distance_transform",
    "invert",
    "load_calibration",
    "load_graph",
    "load_occupancy",
    "load_pipeline_config",
    "load_report",
    "load_silhouette",
    "measure_all",
    "pixel_rays",
    "project",
    "run_pipeline",
    "save_calibration",
    "save_graph",
    "save_occupancy",
    "save_report",
    "save_silhouette",
    "segment_chroma",
    "skeletonize",
    "squared_edt",
    "__version__",
]
