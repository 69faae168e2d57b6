"""Walk through the calibration model: rig geometry on disk, projection, and
per-pixel viewing rays.

Builds the default 24-view turntable rig, factors it into the robot-world /
hand-eye file format, reads it back, and checks that projecting a world point
and casting the ray back through that pixel lands on the point.
"""

import tempfile
from pathlib import Path

import numpy as np

from treevox import synthetic as syn
from treevox.calibration import load_calibration, pixel_rays, project, save_calibration

rig = syn.desk_rig(seed=0)
calib = rig.calibration_set(seed=1)
views = calib.views()
print(f"rig: {len(views)} views, image {views[0].intrinsics.width}x"
      f"{views[0].intrinsics.height}")

out = Path(tempfile.mkdtemp()) / "calibration.txt"
save_calibration(out, calib)
calib2 = load_calibration(out)
print(f"wrote + reloaded {out.name}: {len(calib2.views())} views")

# project a point near the turntable centre into every view, then cast the
# ray back out through that pixel and measure the miss distance
point = np.array([[40.0, -25.0, 330.0]])
worst = 0.0
for v in calib2.views():
    cols, rows, in_front = project(v, point)
    if not in_front[0]:
        continue
    c, r = round(float(cols[0])), round(float(rows[0]))
    origin, dirs = pixel_rays(v, np.array([c]), np.array([r]))
    d = dirs[0] / np.linalg.norm(dirs[0])
    # closest approach of the ray to the original point
    t = (point[0] - origin) @ d
    miss = np.linalg.norm(origin + t * d - point[0])
    worst = max(worst, float(miss))
print(f"round-trip pixel->ray miss over all views: {worst:.2f} mm "
      f"(pixel quantisation only)")
