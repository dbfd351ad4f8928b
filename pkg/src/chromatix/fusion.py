"""Between matching and the network: pyramid upsampling, bidirectional
similarity maps, chrominance warping, and the fake-reference
construction used by the chrominance training branch.

All warps are integer gathers (nearest pixel), matching the discrete
correspondence fields. Similarity plane order is fixed as
[target->ref levels 1..5, ref->target levels 1..5] and consumed in that
order by the network input assembly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correspondence import MappingField
from .numerics import ContractError
from .numerics.ops import upsample_bilinear_forward


@dataclass
class SimilarityMaps:
    """Ten single-channel planes at target resolution, values in [-1, 1]."""

    planes: np.ndarray  # (10, H, W) float32

    def __post_init__(self):
        if self.planes.shape[0] != 10:
            raise ContractError(
                f"expected 10 similarity planes, got {self.planes.shape[0]}")

    @property
    def t_to_r(self) -> np.ndarray:
        return self.planes[:5]

    @property
    def r_to_t(self) -> np.ndarray:
        return self.planes[5:]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]


def cosine(x, y) -> float:
    """Cosine similarity of two vectors; 0 when either norm is 0."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ContractError(f"vector lengths differ: {x.size} vs {y.size}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(x @ y / (nx * ny))


def cosine_planes(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel cosine between two (C, H, W) maps; 0 where a norm is 0."""
    dot = np.einsum("chw,chw->hw", a, b)
    na = np.sqrt(np.einsum("chw,chw->hw", a, a))
    nb = np.sqrt(np.einsum("chw,chw->hw", b, b))
    denom = na * nb
    return np.divide(dot, denom, out=np.zeros_like(dot), where=denom > 0)


def upsample_plane_stack(stack: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a (C, H, W) stack."""
    out, _ = upsample_bilinear_forward([stack[None]], {"out_h": out_h,
                                                       "out_w": out_w})
    return out[0]


def upsample_pyramid(levels, out_h: int, out_w: int):
    """Bilinear-upsample every level to one spatial resolution."""
    return [upsample_plane_stack(np.asarray(lv, dtype=np.float32), out_h, out_w)
            for lv in levels]


def _check_field(field: MappingField, h: int, w: int, what: str):
    if (field.height, field.width) != (h, w):
        raise ContractError(
            f"{what}: field extents {(field.height, field.width)} != {(h, w)}")


def similarity_maps(ft_levels, fr_levels, phi_tr: MappingField,
                    phi_rt: MappingField) -> SimilarityMaps:
    """Bidirectional similarity planes from upsampled pyramids.

    ft_levels / fr_levels must already be at the full resolutions of the
    target and reference images; phi_tr maps target pixels into the
    reference and phi_rt the reverse. For each target pixel p with
    q = phi_tr(p) and the round trip r = phi_rt(q):

        forward plane i  = cos(F_T^i(p), F_R^i(q))
        backward plane i = cos(F_T^i(r), F_R^i(q))
    """
    if len(ft_levels) != len(fr_levels):
        raise ContractError(
            f"level counts differ: {len(ft_levels)} vs {len(fr_levels)}")
    ht, wt = ft_levels[0].shape[1:]
    hr, wr = fr_levels[0].shape[1:]
    for i, lv in enumerate(ft_levels):
        if lv.shape[1:] != (ht, wt):
            raise ContractError(f"target level {i + 1} not upsampled: {lv.shape}")
    for i, lv in enumerate(fr_levels):
        if lv.shape[1:] != (hr, wr):
            raise ContractError(f"reference level {i + 1} not upsampled: {lv.shape}")
    _check_field(phi_tr, ht, wt, "phi target->ref")
    _check_field(phi_rt, hr, wr, "phi ref->target")
    if phi_tr.target_shape != (hr, wr) or phi_rt.target_shape != (ht, wt):
        raise ContractError("field target extents do not match the pyramids")

    qx, qy = phi_tr.map[..., 0], phi_tr.map[..., 1]
    back = phi_rt.map[qy, qx]
    rx, ry = back[..., 0], back[..., 1]

    planes = np.empty((10, ht, wt), dtype=np.float32)
    for i, (ft, fr) in enumerate(zip(ft_levels, fr_levels)):
        fr_at_q = fr[:, qy, qx]
        planes[i] = cosine_planes(ft, fr_at_q)
        planes[5 + i] = cosine_planes(ft[:, ry, rx], fr_at_q)
    np.clip(planes, -1.0, 1.0, out=planes)
    return SimilarityMaps(planes)


def warp_chrominance(r_ab: np.ndarray, phi_tr: MappingField) -> np.ndarray:
    """Aligned reference chrominance: output pixel p takes the reference
    chrominance at phi_tr(p). r_ab is (2, Hr, Wr)."""
    if r_ab.shape[1:] != phi_tr.target_shape:
        raise ContractError(
            f"chrominance extents {r_ab.shape[1:]} != field target "
            f"{phi_tr.target_shape}")
    phi_tr.validate()
    qx, qy = phi_tr.map[..., 0], phi_tr.map[..., 1]
    return np.ascontiguousarray(r_ab[:, qy, qx])


def fake_reference(t_ab: np.ndarray, phi_tr: MappingField,
                   phi_rt: MappingField) -> np.ndarray:
    """Ground-truth chrominance warped through the round trip
    phi_rt(phi_tr(p)); stands in for the reference during chrominance-
    branch training without handing the network the answer."""
    if t_ab.shape[1:] != (phi_tr.height, phi_tr.width):
        raise ContractError(
            f"chrominance extents {t_ab.shape[1:]} != field source "
            f"{(phi_tr.height, phi_tr.width)}")
    if phi_rt.target_shape != (phi_tr.height, phi_tr.width):
        raise ContractError("round trip does not land back in the target frame")
    phi_tr.validate()
    phi_rt.validate()
    qx, qy = phi_tr.map[..., 0], phi_tr.map[..., 1]
    back = phi_rt.map[qy, qx]
    return np.ascontiguousarray(t_ab[:, back[..., 1], back[..., 0]])


# ---------------------------------------------------------------------------
# hand-crafted sample-selection baselines (kept for comparison tests; the
# network replaces both)

def select_samples_threshold(sims: SimilarityMaps, fraction: float = 0.10) -> np.ndarray:
    """Boolean mask of the pixels with the highest mean bidirectional
    similarity; picks round(fraction * N) pixels, at least one, ties
    resolved by scan order."""
    if not 0.0 < fraction <= 1.0:
        raise ContractError(f"fraction must be in (0, 1], got {fraction}")
    avg = sims.planes.mean(axis=0)
    n = avg.size
    k = max(1, int(round(fraction * n)))
    order = np.argsort(-avg.reshape(-1), kind="stable")
    mask = np.zeros(n, dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(avg.shape)


def select_samples_cross_check(phi_tr: MappingField,
                               phi_rt: MappingField) -> np.ndarray:
    """Boolean mask of target pixels whose mapping survives the round
    trip exactly: phi_rt(phi_tr(p)) == p."""
    qx, qy = phi_tr.map[..., 0], phi_tr.map[..., 1]
    back = phi_rt.map[qy, qx]
    xx, yy = np.meshgrid(np.arange(phi_tr.width), np.arange(phi_tr.height))
    return (back[..., 0] == xx) & (back[..., 1] == yy)


def matching_error_planes(sims: SimilarityMaps) -> np.ndarray:
    """1 - sim, the per-level matching error used by the debug dumps."""
    return 1.0 - sims.planes


def dump_similarity_pngs(sims: SimilarityMaps, directory) -> list:
    """Write each plane's matching error as a grayscale PNG; returns the
    paths written."""
    import os

    from .imagecolor import save_gray

    names = [f"err_t2r_level{i}.png" for i in range(1, 6)] + \
            [f"err_r2t_level{i}.png" for i in range(1, 6)]
    os.makedirs(directory, exist_ok=True)
    paths = []
    for name, plane in zip(names, matching_error_planes(sims)):
        path = os.path.join(directory, name)
        save_gray(path, plane * 50.0)  # error in [0, 2] -> [0, 100] scale
        paths.append(path)
    return paths
