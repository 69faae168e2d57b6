"""The disk-to-disk pipeline, driven exactly like the command line.

Generates a synthetic capture bundle (calibration file, blue-screen photos,
config), segments the photos, runs the remaining stages from the artifacts on
disk, and compares the measured traits to the bundled ground truth.  Every
step is a `treevox <subcommand>` invocation.
"""

import json
import tempfile
from pathlib import Path

from treevox.cli import main

root = Path(tempfile.mkdtemp())
bundle = root / "bundle"

steps = [
    ["synth", "--preset", "cylinder", "--out", str(bundle)],
    # start from the color photos: segment first, then the geometry stages
    ["segment", "--images", str(bundle / "images"), "--out", str(bundle / "run")],
    ["carve", "--calibration", str(bundle / "calibration.txt"),
     "--silhouettes", str(bundle / "run" / "silhouettes"),
     "--out", str(bundle / "run"),
     "--region-min=-61.5,-61.5,0", "--region-max", "61.5,61.5,450"],
    ["edt", "--out", str(bundle / "run")],
    ["skeletonize", "--out", str(bundle / "run")],
    ["graph", "--out", str(bundle / "run")],
    ["traits", "--out", str(bundle / "run")],
    ["compare", "--report", str(bundle / "run" / "traits.json"),
     "--ground-truth", str(bundle / "ground_truth.json"),
     "--out", str(bundle / "run" / "comparison.json")],
]

for argv in steps:
    print(f"$ treevox {' '.join(argv)}")
    rc = main(argv)
    assert rc == 0, f"exit code {rc}"

print()
print("artifacts:")
for p in sorted((bundle / "run").rglob("*")):
    if p.is_file():
        print(f"  {p.relative_to(bundle)}  {p.stat().st_size} bytes")

doc = json.loads((bundle / "run" / "comparison.json").read_text())
print()
print(f"matched {len(doc['matches'])} of {doc['n_ground_truth']} branches; "
      f"diameter rmse {doc['diameter_mm']['rmse']:.2f} mm, "
      f"length rmse {doc['length_mm']['rmse']:.2f} mm")

# the same stages run in one shot from the bundled config
rc = main(["pipeline", "--config", str(bundle / "config.json")])
print(f"\n$ treevox pipeline --config {bundle / 'config.json'}  -> exit {rc}")
