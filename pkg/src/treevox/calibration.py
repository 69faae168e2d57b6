"""Rigid transforms, camera models, and per-view extrinsics composition.

The acquisition rig is described by three kinds of rigid transforms:

* ``X``   : robot base -> world
* ``Z_c`` : end-effector -> camera ``c``
* ``B_jc``: robot base -> end-effector, at pose ``j`` when camera ``c`` fired

The world-to-camera extrinsics for one image are then ``A = Z @ B @ inv(X)``.
Note the direction of ``X`` and ``Z`` here is the opposite of the common
hand-eye calibration convention; calibration files state which direction
their blocks use (see :func:`load_calibration`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROTATION_TOL = 1e-9


class CalibrationError(ValueError):
    """Raised for invalid transforms or unreadable calibration files."""


@dataclass(frozen=True)
class HomogeneousTransform:
    """4x4 rigid transform stored as rotation (3x3) + translation (mm)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if r.shape != (3, 3):
            raise CalibrationError(f"rotation must be 3x3, got {r.shape}")
        if np.max(np.abs(r.T @ r - np.eye(3))) > ROTATION_TOL:
            raise CalibrationError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
            raise CalibrationError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        self.rotation.setflags(write=False)
        self.translation.setflags(write=False)

    @classmethod
    def identity(cls) -> "HomogeneousTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "HomogeneousTransform":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise CalibrationError(f"expected 4x4 matrix, got {m.shape}")
        if np.max(np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > ROTATION_TOL:
            raise CalibrationError("bottom row must be (0,0,0,1)")
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or many points (n, 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation


def compose(t1: HomogeneousTransform, t2: HomogeneousTransform) -> HomogeneousTransform:
    """Return t1 * t2 (apply t2 first, then t1)."""
    return HomogeneousTransform(
        t1.rotation @ t2.rotation,
        t1.rotation @ t2.translation + t1.translation,
    )


def invert(t: HomogeneousTransform) -> HomogeneousTransform:
    """Exact rigid inverse (R^T, -R^T t)."""
    rt = t.rotation.T
    return HomogeneousTransform(rt, -rt @ t.translation)


def compute_extrinsics(
    z: HomogeneousTransform, b: HomogeneousTransform, x: HomogeneousTransform
) -> HomogeneousTransform:
    """World-to-camera transform for one image: Z @ B @ inv(X)."""
    return compose(compose(z, b), invert(x))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model with two radial distortion terms."""

    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise CalibrationError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise CalibrationError("principal point must lie inside the image")


@dataclass
class CameraView:
    """One calibrated image: camera id, robot pose index, intrinsics, extrinsics.

    ``extrinsics`` maps world coordinates into the camera frame. The
    silhouette map is attached once segmentation has run; geometry-only
    uses may leave it as None.
    """

    camera_id: int
    pose_index: int
    intrinsics: CameraIntrinsics
    extrinsics: HomogeneousTransform
    silhouette: "object | None" = None

    def __post_init__(self):
        if self.silhouette is not None:
            if (self.silhouette.width, self.silhouette.height) != (
                self.intrinsics.width,
                self.intrinsics.height,
            ):
                raise CalibrationError(
                    f"silhouette {self.silhouette.width}x{self.silhouette.height} does not "
                    f"match intrinsics {self.intrinsics.width}x{self.intrinsics.height}"
                )

    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates (mm)."""
        return invert(self.extrinsics).translation


def project(view: CameraView, world_points: np.ndarray):
    """Project world points (mm) to pixel coordinates.

    Returns (u, v, in_front). Points behind the camera get in_front=False
    and their (u, v) are meaningless. Accepts a single (3,) point or an
    (n, 3) array; output shapes follow the input.
    """
    p = np.asarray(world_points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    cam = view.extrinsics.apply(p)
    z = cam[:, 2]
    in_front = z > 0
    # avoid div-by-zero for behind/degenerate points; results there are unused
    safe_z = np.where(z != 0, z, 1.0)
    xn = cam[:, 0] / safe_z
    yn = cam[:, 1] / safe_z
    r2 = xn * xn + yn * yn
    k = view.intrinsics
    scale = 1.0 + k.k1 * r2 + k.k2 * r2 * r2
    u = k.fx * xn * scale + k.cx
    v = k.fy * yn * scale + k.cy
    if single:
        return float(u[0]), float(v[0]), bool(in_front[0])
    return u, v, in_front


def pixel_rays(view: CameraView, cols: np.ndarray, rows: np.ndarray):
    """World-space rays through the given pixel centers (distortion ignored).

    Returns (origin (3,), directions (n, 3)); directions are not normalized.
    Inverse of :func:`project` for k1 = k2 = 0.
    """
    k = view.intrinsics
    xn = (np.asarray(cols, dtype=float) - k.cx) / k.fx
    yn = (np.asarray(rows, dtype=float) - k.cy) / k.fy
    d_cam = np.stack([xn, yn, np.ones_like(xn)], axis=-1)
    inv_t = invert(view.extrinsics)
    directions = d_cam @ inv_t.rotation.T
    return inv_t.translation.copy(), directions


# ---------------------------------------------------------------------------
# Calibration file format
#
# Plain text, '#' comments, blank-line tolerant. Blocks:
#
#   convention direct|inverted      (optional; default direct)
#   X                               followed by 4 rows of 4 numbers
#   Z<c>                            end-effector -> camera c
#   B_<j>_<c>                       robot base -> end-effector at pose j
#   intrinsics <c>                  one row: fx fy cx cy k1 k2 width height
#
# With "convention inverted" the stored X and Z blocks run in the opposite
# direction (world -> robot base, camera -> end-effector) and are inverted
# on load, so either convention yields the same in-memory transforms.
# ---------------------------------------------------------------------------


@dataclass
class CalibrationSet:
    """Parsed calibration file: X, per-camera Z/intrinsics, per-(pose, camera) B."""

    x: HomogeneousTransform
    z: dict = field(default_factory=dict)            # camera_id -> transform
    b: dict = field(default_factory=dict)            # (pose, camera_id) -> transform
    intrinsics: dict = field(default_factory=dict)   # camera_id -> CameraIntrinsics

    def views(self) -> list[CameraView]:
        """One CameraView per B block, extrinsics composed as Z B X^-1."""
        out = []
        for (j, c) in sorted(self.b):
            if c not in self.z:
                raise CalibrationError(f"no Z block for camera {c}")
            if c not in self.intrinsics:
                raise CalibrationError(f"no intrinsics block for camera {c}")
            a = compute_extrinsics(self.z[c], self.b[(j, c)], self.x)
            out.append(CameraView(c, j, self.intrinsics[c], a))
        return out


def _read_matrix(lines: list[str], i: int) -> tuple[np.ndarray, int]:
    rows = []
    while len(rows) < 4:
        if i >= len(lines):
            raise CalibrationError("unexpected end of file inside matrix block")
        vals = lines[i].split()
        i += 1
        if not vals:
            continue
        if len(vals) != 4:
            raise CalibrationError(f"matrix row needs 4 numbers, got: {lines[i-1]!r}")
        rows.append([float(v) for v in vals])
    return np.array(rows), i


def load_calibration(path: str | Path) -> CalibrationSet:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"calibration file not found: {path}")
    raw = path.read_text().splitlines()
    lines = [ln.split("#", 1)[0].rstrip() for ln in raw]

    inverted = False
    x = None
    z, b, intr = {}, {}, {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        tokens = line.split()
        head = tokens[0]
        if head == "convention":
            if len(tokens) != 2 or tokens[1] not in ("direct", "inverted"):
                raise CalibrationError(f"bad convention line: {line!r}")
            inverted = tokens[1] == "inverted"
        elif head == "X":
            m, i = _read_matrix(lines, i)
            x = HomogeneousTransform.from_matrix(m)
        elif head.startswith("Z"):
            c = int(head[1:])
            m, i = _read_matrix(lines, i)
            z[c] = HomogeneousTransform.from_matrix(m)
        elif head.startswith("B_"):
            _, j, c = head.split("_")
            m, i = _read_matrix(lines, i)
            b[(int(j), int(c))] = HomogeneousTransform.from_matrix(m)
        elif head == "intrinsics":
            c = int(tokens[1])
            vals = lines[i].split()
            i += 1
            if len(vals) != 8:
                raise CalibrationError("intrinsics row needs: fx fy cx cy k1 k2 width height")
            fx, fy, cx, cy, k1, k2 = (float(v) for v in vals[:6])
            w, h = int(vals[6]), int(vals[7])
            intr[c] = CameraIntrinsics(fx, fy, cx, cy, k1, k2, w, h)
        else:
            raise CalibrationError(f"unrecognized block header: {line!r}")

    if x is None:
        raise CalibrationError(f"calibration file {path} has no X block")
    if inverted:
        x = invert(x)
        z = {c: invert(t) for c, t in z.items()}
    return CalibrationSet(x=x, z=z, b=b, intrinsics=intr)


def save_calibration(path: str | Path, calib: CalibrationSet) -> None:
    """Write a CalibrationSet in the direct convention."""

    def fmt(t: HomogeneousTransform) -> str:
        return "\n".join(" ".join(f"{v:.12g}" for v in row) for row in t.as_matrix())

    out = ["convention direct", "X", fmt(calib.x)]
    for c in sorted(calib.z):
        out += [f"Z{c}", fmt(calib.z[c])]
    for (j, c) in sorted(calib.b):
        out += [f"B_{j}_{c}", fmt(calib.b[(j, c)])]
    for c in sorted(calib.intrinsics):
        k = calib.intrinsics[c]
        out += [
            f"intrinsics {c}",
            f"{k.fx:.12g} {k.fy:.12g} {k.cx:.12g} {k.cy:.12g} "
            f"{k.k1:.12g} {k.k2:.12g} {k.width} {k.height}",
        ]
    Path(path).write_text("\n".join(out) + "\n")
