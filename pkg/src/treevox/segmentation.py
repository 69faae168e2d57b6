"""Silhouette probability maps: tree-vs-blue-background separation.

Probability 1 means "tree". The classifier is a fixed chroma-distance
model: each pixel's RGB is normalized by its L1 norm (removing overall
intensity, which varies strongly outdoors), and the Euclidean distance of
that chromaticity to the background reference is pushed through a
logistic. Anything downstream only needs a probability map, so better
segmenters can be swapped in by writing maps to disk.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_BACKGROUND_RGB = (0, 0, 255)
DEFAULT_THRESHOLD = 0.3
DEFAULT_SOFTNESS = 0.1


@dataclass
class SilhouetteMap:
    """Per-pixel probability of tree/foreground, values in [0, 1]."""

    probabilities: np.ndarray  # (height, width) float

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"probability map must be 2-D and non-empty, got {p.shape}")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        self.probabilities = p

    @property
    def width(self) -> int:
        return self.probabilities.shape[1]

    @property
    def height(self) -> int:
        return self.probabilities.shape[0]


@dataclass
class ColorImage:
    """8-bit RGB image, shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) pixels, got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        self.pixels = px.astype(np.uint8)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _chromaticity(rgb: np.ndarray) -> np.ndarray:
    """RGB divided by its L1 norm; black maps to neutral gray."""
    rgb = np.asarray(rgb, dtype=float)
    s = rgb.sum(axis=-1, keepdims=True)
    out = np.divide(rgb, s, out=np.full_like(rgb, 1.0 / 3.0), where=s > 0)
    return out


def segment_chroma(
    image: ColorImage,
    background_rgb=DEFAULT_BACKGROUND_RGB,
    softness: float = DEFAULT_SOFTNESS,
    threshold: float = DEFAULT_THRESHOLD,
) -> SilhouetteMap:
    """Probability map from chroma distance to the background reference.

    probability = logistic((||chroma(px) - chroma(bg)|| - threshold) / softness)
    """
    if softness <= 0:
        raise ValueError("softness must be positive")
    chroma = _chromaticity(image.pixels)
    bg = _chromaticity(np.asarray(background_rgb, dtype=float))
    dist = np.sqrt(np.sum((chroma - bg) ** 2, axis=-1))
    prob = 1.0 / (1.0 + np.exp(-(dist - threshold) / softness))
    return SilhouetteMap(np.clip(prob, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Image I/O. PGM/PPM are read and written natively (binary P5/P6); other
# formats (PNG, ...) go through Pillow when available.
# ---------------------------------------------------------------------------


def _read_pnm(path: Path):
    data = path.read_bytes()
    # header tokens: magic, width, height, maxval — whitespace/comment separated
    tokens = []
    i = 0
    while len(tokens) < 4:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    i += 1  # single whitespace after maxval
    magic = tokens[0]
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    channels = 3 if magic == b"P6" else 1
    count = w * h * channels
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=i)
    if magic == b"P6":
        return arr.reshape(h, w, 3).astype(np.uint8), maxval, "ppm"
    if magic == b"P5":
        return arr.reshape(h, w), maxval, "pgm"
    raise ValueError(f"unsupported PNM magic {magic!r} in {path}")


def load_silhouette(path: str | Path) -> SilhouetteMap:
    """Load a grayscale image (8- or 16-bit) as probabilities value/maxval."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"silhouette image not found: {path}")
    if path.suffix.lower() in (".pgm", ".pnm"):
        arr, maxval, kind = _read_pnm(path)
        if kind != "pgm":
            raise ValueError(f"{path} is not single-channel")
    else:
        from PIL import Image

        img = Image.open(path)
        if img.mode == "I;16":
            arr, maxval = np.asarray(img, dtype=np.uint16), 65535
        elif img.mode in ("L", "1"):
            arr, maxval = np.asarray(img.convert("L")), 255
        else:
            raise ValueError(f"{path} is not a single-channel grayscale image (mode {img.mode})")
    return SilhouetteMap(arr.astype(float) / maxval)


def save_silhouette(path: str | Path, silmap: SilhouetteMap) -> None:
    """Write as 8-bit binary PGM (probability * 255, rounded)."""
    arr = np.rint(silmap.probabilities * 255).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(arr.tobytes())


def load_color_image(path: str | Path) -> ColorImage:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    if path.suffix.lower() in (".ppm", ".pnm"):
        arr, _, kind = _read_pnm(path)
        if kind != "ppm":
            raise ValueError(f"{path} is not a 3-channel PPM")
        return ColorImage(arr)
    from PIL import Image

    return ColorImage(np.asarray(Image.open(path).convert("RGB")))


def save_color_image(path: str | Path, image: ColorImage) -> None:
    """Write as binary PPM."""
    h, w, _ = image.pixels.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(image.pixels.tobytes())
