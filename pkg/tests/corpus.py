"""Synthetic Lab image corpus used by the training, retrieval, and
acceptance tests: small colorful images with structure that dense
matching can latch onto."""

import numpy as np

from chromatix.imagecolor import LabImage, lab_to_rgb, rgb_to_lab


def blob_image(rng, size=32, blobs=3):
    """Smooth luminance field with colored gaussian blobs; returns a
    gamut-safe LabImage (round-tripped through sRGB)."""
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size),
                         indexing="ij")
    L = 40.0 + 25.0 * np.sin(2 * np.pi * (xx * rng.uniform(0.5, 1.5)
                                          + rng.uniform(0, 1)))
    a = np.zeros((size, size))
    b = np.zeros((size, size))
    for _ in range(blobs):
        cy, cx = rng.uniform(0.15, 0.85, 2)
        s = rng.uniform(0.08, 0.25)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
        a += rng.uniform(-55, 55) * bump
        b += rng.uniform(-55, 55) * bump
        L += rng.uniform(-10, 20) * bump
    lab = LabImage(np.clip(L, 5, 95).astype(np.float32),
                   np.clip(a, -80, 80).astype(np.float32),
                   np.clip(b, -80, 80).astype(np.float32))
    # round-trip so every test image is exactly representable in sRGB
    return rgb_to_lab(lab_to_rgb(lab))


def shifted_variant(lab, rng, max_shift=3):
    """Reference-style variant: the same content translated a little."""
    dy = int(rng.integers(-max_shift, max_shift + 1))
    dx = int(rng.integers(-max_shift, max_shift + 1))
    return LabImage(np.roll(lab.L, (dy, dx), (0, 1)),
                    np.roll(lab.a, (dy, dx), (0, 1)),
                    np.roll(lab.b, (dy, dx), (0, 1)))


def toy_pairs(n=8, size=32, seed=0):
    """(target, reference) pairs where the reference shares the target's
    palette and layout up to a small translation."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        img = blob_image(rng, size=size)
        pairs.append((img, shifted_variant(img, rng)))
    return pairs


def class_image(rng, class_id, size=32):
    """Corpus images with a per-class palette and stripe direction, so
    classes are separable from luminance alone."""
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    angle = [yy, xx, yy + xx, yy - xx][class_id % 4]
    period = 6 + 2 * (class_id % 4)
    stripes = ((angle % period) < period // 2).astype(np.float64)
    L = 25.0 + 18.0 * class_id % 50 + 28.0 * stripes \
        + rng.uniform(0, 4, (size, size))
    palettes = [(45, 10), (-40, 35), (15, -50), (-25, -30)]
    pa, pb = palettes[class_id % 4]
    a = pa * stripes + rng.uniform(-4, 4, (size, size))
    b = pb * stripes + rng.uniform(-4, 4, (size, size))
    lab = LabImage(np.clip(L, 0, 100).astype(np.float32),
                   np.clip(a, -80, 80).astype(np.float32),
                   np.clip(b, -80, 80).astype(np.float32))
    return rgb_to_lab(lab_to_rgb(lab))


def class_corpus(classes=4, per_class=4, size=32, seed=0):
    """List of (LabImage, class id)."""
    rng = np.random.default_rng(seed)
    out = []
    for cls in range(classes):
        for _ in range(per_class):
            out.append((class_image(rng, cls, size=size), cls))
    return out
