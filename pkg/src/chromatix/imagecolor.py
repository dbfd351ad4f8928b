"""CIE Lab pipelines: sRGB conversion, luminance histograms, and the
histogram correlation used by the local ranking term.

Conventions: L in [0, 100], chrominance a/b in [-110, 110], D65 white.
Planes are float32 (H, W); RGB buffers are uint8 (H, W, 3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .numerics import ContractError

AB_RANGE = 110.0

_D65 = (0.95047, 1.0, 1.08883)
_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
_DELTA = 6.0 / 29.0


@dataclass
class LabImage:
    """Planar Lab image; all three planes share one (H, W) extent."""

    L: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if not (self.L.shape == self.a.shape == self.b.shape):
            raise ContractError(
                f"plane extents differ: {self.L.shape}/{self.a.shape}/{self.b.shape}")
        if self.L.size == 0:
            raise ContractError("zero-sized image")

    @property
    def height(self) -> int:
        return self.L.shape[0]

    @property
    def width(self) -> int:
        return self.L.shape[1]

    @property
    def ab(self) -> np.ndarray:
        """Chrominance stacked as (2, H, W)."""
        return np.stack([self.a, self.b])

    @classmethod
    def from_gray(cls, L: np.ndarray) -> "LabImage":
        zero = np.zeros_like(L, dtype=np.float32)
        return cls(np.asarray(L, dtype=np.float32), zero, zero.copy())

    def with_ab(self, ab: np.ndarray) -> "LabImage":
        """Same luminance, replacement chrominance (2, H, W)."""
        return LabImage(self.L,
                        np.asarray(ab[0], dtype=np.float32),
                        np.asarray(ab[1], dtype=np.float32))


@dataclass
class LumaHistogram:
    """Counts of L values over 32 equal bins spanning [0, 100]."""

    bins: np.ndarray
    total: int

    BIN_COUNT = 32


def _srgb_to_linear(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c):
    c = np.clip(c, 0.0, 1.0)
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * c ** (1 / 2.4) - 0.055)


def _f(t):
    return np.where(t > _DELTA ** 3, np.cbrt(t), t / (3 * _DELTA ** 2) + 4.0 / 29.0)


def _f_inv(t):
    return np.where(t > _DELTA, t ** 3, 3 * _DELTA ** 2 * (t - 4.0 / 29.0))


def rgb_to_lab(rgb: np.ndarray) -> LabImage:
    """Convert an 8-bit sRGB image (H, W, 3) to Lab, clamped to the
    documented ranges."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ContractError(f"expected (H, W, 3) sRGB input, got {rgb.shape}")
    if rgb.shape[0] == 0 or rgb.shape[1] == 0:
        raise ContractError("zero-sized image")
    lin = _srgb_to_linear(rgb.astype(np.float64) / 255.0)
    xyz = lin @ _RGB_TO_XYZ.T
    fx = _f(xyz[..., 0] / _D65[0])
    fy = _f(xyz[..., 1] / _D65[1])
    fz = _f(xyz[..., 2] / _D65[2])
    L = np.clip(116.0 * fy - 16.0, 0.0, 100.0)
    a = np.clip(500.0 * (fx - fy), -AB_RANGE, AB_RANGE)
    b = np.clip(200.0 * (fy - fz), -AB_RANGE, AB_RANGE)
    return LabImage(L.astype(np.float32), a.astype(np.float32), b.astype(np.float32))


def lab_to_rgb(lab: LabImage) -> np.ndarray:
    """Inverse transform with a gamut clamp to 8-bit sRGB."""
    L = lab.L.astype(np.float64)
    fy = (L + 16.0) / 116.0
    fx = fy + lab.a.astype(np.float64) / 500.0
    fz = fy - lab.b.astype(np.float64) / 200.0
    xyz = np.stack([_f_inv(fx) * _D65[0], _f_inv(fy) * _D65[1],
                    _f_inv(fz) * _D65[2]], axis=-1)
    srgb = _linear_to_srgb(xyz @ _XYZ_TO_RGB.T)
    return np.clip(np.rint(srgb * 255.0), 0, 255).astype(np.uint8)


def luma_histogram(image, window=None) -> LumaHistogram:
    """Histogram of the L plane over a (y, x, h, w) window.

    Uses 32 equal-width bins over [0, 100]; L == 100 lands in the last bin.
    """
    L = image.L if isinstance(image, LabImage) else np.asarray(image)
    if window is None:
        window = (0, 0, L.shape[0], L.shape[1])
    y, x, h, w = window
    if h <= 0 or w <= 0:
        raise ContractError(f"empty window {window}")
    if y < 0 or x < 0 or y + h > L.shape[0] or x + w > L.shape[1]:
        raise ContractError(f"window {window} outside image {L.shape}")
    patch = L[y:y + h, x:x + w]
    idx = np.minimum((patch * (LumaHistogram.BIN_COUNT / 100.0)).astype(np.int64),
                     LumaHistogram.BIN_COUNT - 1)
    bins = np.bincount(idx.reshape(-1), minlength=LumaHistogram.BIN_COUNT)
    return LumaHistogram(bins.astype(np.int64), int(patch.size))


def histogram_correlation(h1, h2) -> float:
    """Pearson correlation of two bin-count vectors.

    When either vector has zero variance the formula is undefined; the
    convention here is 1.0 for identical vectors, else 0.0.
    """
    a = np.asarray(h1.bins if isinstance(h1, LumaHistogram) else h1, dtype=np.float64)
    b = np.asarray(h2.bins if isinstance(h2, LumaHistogram) else h2, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"bin counts differ: {a.shape} vs {b.shape}")
    da = a - a.mean()
    db = b - b.mean()
    na, nb = np.sqrt((da * da).sum()), np.sqrt((db * db).sum())
    if na == 0.0 or nb == 0.0:
        return 1.0 if np.array_equal(a, b) else 0.0
    return float((da * db).sum() / (na * nb))


def histogram_correlation_matrix(h1: np.ndarray, h2: np.ndarray) -> np.ndarray:
    """Pairwise Pearson correlations between rows of h1 (n, bins) and rows
    of h2 (m, bins), with the same zero-variance convention as above."""
    a = np.asarray(h1, dtype=np.float64)
    b = np.asarray(h2, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise ContractError(f"bin counts differ: {a.shape[1]} vs {b.shape[1]}")
    da = a - a.mean(axis=1, keepdims=True)
    db = b - b.mean(axis=1, keepdims=True)
    na = np.linalg.norm(da, axis=1)
    nb = np.linalg.norm(db, axis=1)
    denom = np.outer(na, nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (da @ db.T) / denom
    flat_a, flat_b = na == 0.0, nb == 0.0
    if flat_a.any() or flat_b.any():
        degenerate = np.outer(flat_a, np.ones(len(nb), bool)) | \
            np.outer(np.ones(len(na), bool), flat_b)
        eq = (a[:, None, :] == b[None, :, :]).all(axis=2)
        corr = np.where(degenerate, np.where(eq, 1.0, 0.0), corr)
    return corr


# ---------------------------------------------------------------------------
# file I/O

def load_rgb(path) -> np.ndarray:
    """Read a PNG (or any Pillow-readable file) as (H, W, 3) uint8."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def load_gray_luminance(path) -> np.ndarray:
    """Read an image and return its Lab L plane (H, W) float32."""
    return rgb_to_lab(load_rgb(path)).L


def save_rgb(path, rgb: np.ndarray) -> None:
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(path)


def save_gray(path, plane: np.ndarray) -> None:
    """Write a single plane scaled from [0, 100] to 8-bit grayscale."""
    arr = np.clip(np.rint(np.asarray(plane) * 2.55), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def write_ascii_image(path, rgb: np.ndarray) -> None:
    """Golden-file dump: first line "W H", then one row of r g b triples
    per scanline. No magic header."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{rgb.shape[1]} {rgb.shape[0]}\n")
        for row in rgb:
            fh.write(" ".join(str(int(v)) for v in row.reshape(-1)))
            fh.write("\n")


def read_ascii_image(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().split()
        if len(first) != 2:
            raise ContractError(f"{path}: bad dimension line")
        w, h = int(first[0]), int(first[1])
        vals = np.loadtxt(fh, dtype=np.int64, ndmin=2)
    if vals.shape != (h, w * 3):
        raise ContractError(
            f"{path}: payload shape {vals.shape} != ({h}, {w * 3})")
    return vals.reshape(h, w, 3).astype(np.uint8)
