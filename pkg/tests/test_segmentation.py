import numpy as np
import pytest

from treevox.segmentation import (
    ColorImage,
    SilhouetteMap,
    load_color_image,
    load_silhouette,
    save_color_image,
    save_silhouette,
    segment_chroma,
)

BG = (0, 0, 255)


def flat(rgb, w=8, h=6):
    return ColorImage(np.full((h, w, 3), rgb, dtype=np.uint8))


def test_background_pixels_score_low():
    prob = segment_chroma(flat(BG), background_rgb=BG).probabilities
    assert prob.max() < 0.1


def test_distinct_foreground_scores_high():
    prob = segment_chroma(flat((140, 90, 40)), background_rgb=BG).probabilities
    assert prob.min() > 0.9


def test_brightness_changes_do_not_flip_background():
    # chromaticity normalizes intensity: a darker copy of the background hue
    # still reads as background
    dark_bg = tuple(v // 3 for v in BG)
    prob = segment_chroma(flat(dark_bg), background_rgb=BG).probabilities
    assert prob.max() < 0.1


def test_probability_monotonic_in_chroma_distance():
    # pixels sweeping from the background color toward gray: probability
    # never decreases as the chroma distance grows
    ts = np.linspace(0.0, 1.0, 32)
    px = np.stack([(1 - t) * np.array(BG) + t * np.array([128, 128, 128]) for t in ts])
    img = ColorImage(px.reshape(1, -1, 3).astype(np.uint8))
    prob = segment_chroma(img, background_rgb=BG).probabilities[0]
    assert (np.diff(prob) >= -1e-12).all()


def test_threshold_sets_half_probability_point():
    img = flat(BG)
    # at chroma distance exactly `threshold` the logistic sits at 0.5; the
    # background itself is distance 0, so probability = logistic(-t/s)
    p_tight = segment_chroma(img, background_rgb=BG, threshold=0.05, softness=0.01)
    p_loose = segment_chroma(img, background_rgb=BG, threshold=0.4, softness=0.01)
    assert p_tight.probabilities.max() < 0.01
    assert p_loose.probabilities.max() < 0.01


def test_softness_must_be_positive():
    with pytest.raises(ValueError):
        segment_chroma(flat(BG), softness=0.0)


def test_silhouette_map_validates_range():
    with pytest.raises(ValueError):
        SilhouetteMap(np.full((4, 4), 1.5))
    with pytest.raises(ValueError):
        SilhouetteMap(np.zeros((4, 4, 2)))


def test_pgm_roundtrip_quantizes_to_8bit(tmp_path):
    rng = np.random.default_rng(3)
    prob = rng.uniform(0, 1, size=(20, 30))
    save_silhouette(tmp_path / "m.pgm", SilhouetteMap(prob))
    back = load_silhouette(tmp_path / "m.pgm")
    assert back.probabilities.shape == (20, 30)
    assert np.abs(back.probabilities - prob).max() <= 0.5 / 255 + 1e-9


def test_ppm_color_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    px = rng.integers(0, 256, size=(12, 10, 3), dtype=np.uint8)
    save_color_image(tmp_path / "img.ppm", ColorImage(px))
    back = load_color_image(tmp_path / "img.ppm")
    assert np.array_equal(back.pixels, px)


def test_silhouette_loader_rejects_color_files(tmp_path):
    save_color_image(tmp_path / "img.ppm", flat((10, 20, 30)))
    with pytest.raises(ValueError, match="grayscale"):
        load_silhouette(tmp_path / "img.ppm")


def test_loader_rejects_garbage(tmp_path):
    (tmp_path / "junk.pgm").write_bytes(b"JUNK\n")
    with pytest.raises(ValueError):
        load_silhouette(tmp_path / "junk.pgm")
    with pytest.raises(FileNotFoundError):
        load_silhouette(tmp_path / "missing.pgm")


def test_segmentation_of_rendered_frame_recovers_silhouette(tmp_path):
    # synthetic color frame composed from a known mask segments back to the
    # same mask at the 0.5 cut
    from treevox.synthetic import compose_color_image

    rng = np.random.default_rng(5)
    mask = rng.uniform(size=(24, 32)) < 0.3
    img = compose_color_image(SilhouetteMap(mask.astype(float)), noise_std=4.0, seed=1)
    prob = segment_chroma(img, background_rgb=BG).probabilities
    assert np.array_equal(prob >= 0.5, mask)
