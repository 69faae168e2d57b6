"""Chroma-key segmentation from a synthetic blue-screen photo.

Renders one view of the cylinder scene, composes a noisy color frame over a
blue background, runs the chroma probability model on it, and saves the image
pair so the soft silhouette can be inspected next to its source.
"""

import tempfile
from pathlib import Path

import numpy as np

from treevox import synthetic as syn
from treevox.segmentation import (
    ColorImage,
    save_color_image,
    save_silhouette,
    segment_chroma,
)

scene = syn.scene_cylinder()
rig = syn.desk_rig(seed=0)
true_sil = syn.render_scene(scene, rig)[0]

image = syn.compose_color_image(true_sil, fg_rgb=(96, 72, 48), noise_std=6.0, seed=0)
silmap = segment_chroma(image)

prob = silmap.probabilities
fg = prob > 0.5
true_fg = true_sil.probabilities > 0.5
print(f"image {image.width}x{image.height}, foreground pixels {fg.sum()} "
      f"({100 * fg.mean():.1f}%)")
print(f"probability range [{prob.min():.2f}, {prob.max():.2f}]")
print(f"mask disagrees with the rendered truth on {(fg ^ true_fg).sum()} pixels")

out = Path(tempfile.mkdtemp())
save_color_image(out / "view.ppm", image)
save_silhouette(out / "view_sil.pgm", silmap)
print(f"wrote {out}/view.ppm and view_sil.pgm")

# chromaticity, not brightness, drives the model: darken the photo and redo
dark = ColorImage(np.clip(image.pixels * 0.5, 0, 255).astype(np.uint8))
fg_dark = segment_chroma(dark).probabilities > 0.5
print(f"after 50% darkening the mask changes on {(fg ^ fg_dark).sum()} pixels")
