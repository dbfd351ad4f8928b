"""Dense correspondence between feature pyramids via coarse-to-fine
PatchMatch.

Patch cost is 1 minus the mean per-pixel cosine between L2-normalized
feature vectors over a (2r+1)^2 window, with edge-clamped sampling at
borders. Each accepted move strictly lowers a pixel's cost, so the total
field cost is non-increasing per iteration. Propagation runs in scan
order (alternating direction per iteration) and the random search uses a
seeded generator, so runs are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .encoder import FeaturePyramid
from .numerics import ContractError


@dataclass
class MappingField:
    """Per-pixel integer coordinates into a target image.

    map has extents (H, W, 2) with [..., 0] = x and [..., 1] = y; every
    coordinate lies inside target_shape (h, w).
    """

    map: np.ndarray
    target_shape: tuple

    @property
    def height(self) -> int:
        return self.map.shape[0]

    @property
    def width(self) -> int:
        return self.map.shape[1]

    def validate(self) -> None:
        th, tw = self.target_shape
        x, y = self.map[..., 0], self.map[..., 1]
        if x.min() < 0 or y.min() < 0 or x.max() >= tw or y.max() >= th:
            raise ContractError("mapping field has out-of-bounds coordinates")

    @classmethod
    def identity(cls, h: int, w: int) -> "MappingField":
        xx, yy = np.meshgrid(np.arange(w), np.arange(h))
        return cls(np.stack([xx, yy], axis=-1).astype(np.int32), (h, w))


@dataclass(frozen=True)
class MatchConfig:
    patch_radius: int = 1
    iterations: int = 5
    levels: int = 5
    search_decay: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.patch_radius < 0:
            raise ContractError(f"patch radius must be >= 0, got {self.patch_radius}")
        if self.iterations < 1:
            raise ContractError(f"iterations must be >= 1, got {self.iterations}")
        if not 0.0 < self.search_decay < 1.0:
            raise ContractError(f"search decay must be in (0, 1), got "
                                f"{self.search_decay}")


def _level_list(pyramid):
    if isinstance(pyramid, FeaturePyramid):
        return pyramid.levels
    return list(pyramid)


def unit_features(level: np.ndarray) -> np.ndarray:
    """(C, H, W) features to (H, W, C) unit vectors; zero vectors stay
    zero so their cosine against anything is 0."""
    f = np.asarray(level, dtype=np.float32).transpose(1, 2, 0)
    norm = np.linalg.norm(f, axis=-1, keepdims=True)
    return np.divide(f, norm, out=np.zeros_like(f), where=norm > 0)


def patch_stack(unit: np.ndarray, radius: int) -> np.ndarray:
    """Flattened edge-clamped patches: (H, W, C*(2r+1)^2) float32."""
    if radius == 0:
        h, w, c = unit.shape
        return np.ascontiguousarray(unit.reshape(h, w, c))
    padded = np.pad(unit, ((radius, radius), (radius, radius), (0, 0)),
                    mode="edge")
    k = 2 * radius + 1
    wins = sliding_window_view(padded, (k, k), axis=(0, 1))
    h, w, c = unit.shape
    return np.ascontiguousarray(wins.reshape(h, w, c * k * k))


def field_costs(src_patches, tgt_patches, field_map, patch_elems) -> np.ndarray:
    """Vectorized cost of every pixel's current match."""
    gathered = tgt_patches[field_map[..., 1], field_map[..., 0]]
    return 1.0 - np.einsum("hwc,hwc->hw", src_patches, gathered) / patch_elems


def _solve_level(src_patches, tgt_patches, n_offsets, field_map,
                 cfg: MatchConfig, rng, cost_trace=None):
    """Run PatchMatch iterations in place on field_map; returns costs."""
    hs, ws = src_patches.shape[:2]
    ht, wt = tgt_patches.shape[:2]
    offs = float(n_offsets)
    costs = field_costs(src_patches, tgt_patches, field_map, offs)

    max_radius = max(ht, wt)
    for it in range(cfg.iterations):
        total_before = costs.sum()
        reverse = it % 2 == 1
        ys = range(hs - 1, -1, -1) if reverse else range(hs)
        xs_order = list(range(ws - 1, -1, -1) if reverse else range(ws))
        step = -1 if reverse else 1
        for y in ys:
            for x in xs_order:
                bx, by = int(field_map[y, x, 0]), int(field_map[y, x, 1])
                bc = costs[y, x]
                # propagate from the two already-visited neighbors
                for ny, nx in ((y - step, x), (y, x - step)):
                    if not (0 <= ny < hs and 0 <= nx < ws):
                        continue
                    cx = int(field_map[ny, nx, 0]) + (x - nx)
                    cy = int(field_map[ny, nx, 1]) + (y - ny)
                    cx = 0 if cx < 0 else (wt - 1 if cx >= wt else cx)
                    cy = 0 if cy < 0 else (ht - 1 if cy >= ht else cy)
                    if cx == bx and cy == by:
                        continue
                    c = 1.0 - float(src_patches[y, x] @ tgt_patches[cy, cx]) / offs
                    if c < bc:
                        bx, by, bc = cx, cy, c
                # shrinking random search around the current best
                r = max_radius
                while r >= 1:
                    cx = bx + int(rng.integers(-r, r + 1))
                    cy = by + int(rng.integers(-r, r + 1))
                    cx = 0 if cx < 0 else (wt - 1 if cx >= wt else cx)
                    cy = 0 if cy < 0 else (ht - 1 if cy >= ht else cy)
                    if (cx, cy) != (bx, by):
                        c = 1.0 - float(src_patches[y, x] @ tgt_patches[cy, cx]) / offs
                        if c < bc:
                            bx, by, bc = cx, cy, c
                    r = int(r * cfg.search_decay)
                field_map[y, x, 0] = bx
                field_map[y, x, 1] = by
                costs[y, x] = bc
        total_after = costs.sum()
        assert total_after <= total_before + 1e-9, "iteration increased cost"
        if cost_trace is not None:
            cost_trace.append(float(total_after))
    return costs


def _upscale_field(field_map, new_shape, tgt_shape):
    """Pixel-doubling upscale; parity offsets keep identity fields
    identity."""
    nh, nw = new_shape
    th, tw = tgt_shape
    ys = np.arange(nh)
    xs = np.arange(nw)
    src = field_map[np.minimum(ys[:, None] // 2, field_map.shape[0] - 1),
                    np.minimum(xs[None, :] // 2, field_map.shape[1] - 1)]
    out = np.empty((nh, nw, 2), dtype=np.int32)
    out[..., 0] = np.minimum(src[..., 0] * 2 + (xs[None, :] & 1), tw - 1)
    out[..., 1] = np.minimum(src[..., 1] * 2 + (ys[:, None] & 1), th - 1)
    return out


def nnf(source_pyramid, target_pyramid, config: MatchConfig = MatchConfig(),
        cost_trace=None) -> MappingField:
    """Nearest-neighbor field mapping each source pixel to a target
    coordinate, solved coarsest level first and refined to level 1.

    The returned field's mean patch cost never exceeds the cost of the
    field it started from at each level. When cost_trace is a list, one
    sub-list of per-iteration total costs is appended per level.
    """
    src_levels = _level_list(source_pyramid)
    tgt_levels = _level_list(target_pyramid)
    if len(src_levels) != len(tgt_levels):
        raise ContractError(
            f"pyramid level counts differ: {len(src_levels)} vs {len(tgt_levels)}")
    for i, (a, b) in enumerate(zip(src_levels, tgt_levels)):
        if a.shape[0] != b.shape[0]:
            raise ContractError(
                f"level {i + 1} channel counts differ: {a.shape[0]} vs {b.shape[0]}")
    n_levels = min(config.levels, len(src_levels))
    rng = np.random.default_rng(config.seed)
    n_offsets = (2 * config.patch_radius + 1) ** 2

    field_map = None
    for idx in range(n_levels - 1, -1, -1):
        src_p = patch_stack(unit_features(src_levels[idx]), config.patch_radius)
        tgt_p = patch_stack(unit_features(tgt_levels[idx]), config.patch_radius)
        hs, ws = src_p.shape[:2]
        ht, wt = tgt_p.shape[:2]
        if field_map is None:
            field_map = np.stack([rng.integers(0, wt, (hs, ws)),
                                  rng.integers(0, ht, (hs, ws))],
                                 axis=-1).astype(np.int32)
        else:
            field_map = _upscale_field(field_map, (hs, ws), (ht, wt))
        level_trace = None
        if cost_trace is not None:
            level_trace = []
            cost_trace.append(level_trace)
        _solve_level(src_p, tgt_p, n_offsets, field_map, config, rng, level_trace)

    h1, w1 = src_levels[0].shape[1:]
    field = MappingField(field_map, (tgt_levels[0].shape[1], tgt_levels[0].shape[2]))
    field.validate()
    assert (field.height, field.width) == (h1, w1)
    return field


def bidirectional(target_pyramid, ref_pyramid,
                  config: MatchConfig = MatchConfig()):
    """Two independent nnf runs with directions swapped: returns
    (phi target->ref, phi ref->target)."""
    forward = nnf(target_pyramid, ref_pyramid, config)
    backward = nnf(ref_pyramid, target_pyramid, config)
    return forward, backward


def mean_field_cost(source_pyramid, target_pyramid, field: MappingField,
                    config: MatchConfig = MatchConfig()) -> float:
    """Mean patch cost of a field evaluated on the finest level."""
    src_p = patch_stack(unit_features(_level_list(source_pyramid)[0]),
                        config.patch_radius)
    tgt_p = patch_stack(unit_features(_level_list(target_pyramid)[0]),
                        config.patch_radius)
    n_offsets = (2 * config.patch_radius + 1) ** 2
    return float(field_costs(src_p, tgt_p, field.map, n_offsets).mean())


def cross_check_ratio(phi_ab: MappingField, phi_ba: MappingField) -> float:
    """Fraction of a-domain pixels whose match maps straight back."""
    q = phi_ab.map
    back = phi_ba.map[q[..., 1], q[..., 0]]
    xx, yy = np.meshgrid(np.arange(phi_ab.width), np.arange(phi_ab.height))
    hits = (back[..., 0] == xx) & (back[..., 1] == yy)
    return float(hits.mean())


def brute_force_nnf(source_level, target_level, radius: int = 1) -> MappingField:
    """Exhaustive per-pixel optimum under the same patch cost; the oracle
    PatchMatch is measured against."""
    src_p = patch_stack(unit_features(source_level), radius)
    tgt_p = patch_stack(unit_features(target_level), radius)
    hs, ws = src_p.shape[:2]
    ht, wt = tgt_p.shape[:2]
    sims = src_p.reshape(hs * ws, -1) @ tgt_p.reshape(ht * wt, -1).T
    best = np.argmax(sims, axis=1)
    out = np.empty((hs, ws, 2), dtype=np.int32)
    out[..., 0] = (best % wt).reshape(hs, ws)
    out[..., 1] = (best // wt).reshape(hs, ws)
    return MappingField(out, (ht, wt))
