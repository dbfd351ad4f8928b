"""Reference recommendation: PCA-compressed descriptor index, global
ranking within the predicted class, and local ranking that mixes
per-cell semantic similarity with luminance-histogram correlation.

Both ranking stages use the compressed (centered, projected) descriptors
throughout; with k equal to the source dimension the projection is a
rigid map of the centered space, so compressed cosines equal centered
cosines exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .encoder import GrayEncoder
from .imagecolor import (
    LumaHistogram,
    histogram_correlation_matrix,
    load_gray_luminance,
    luma_histogram,
    rgb_to_lab,
)
from .numerics import ContractError

GLOBAL_TOP_N = 200
DEFAULT_BETA = 0.25
CLASS_FALLBACK_MIN = 5
INDEX_MAGIC = b"CIDX"
INDEX_VERSION = 1


@dataclass
class PcaModel:
    """Centered top-k projection with a deterministic sign convention."""

    mean: np.ndarray         # (D,)
    components: np.ndarray   # (k, D), orthonormal rows

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def source_dim(self) -> int:
        return self.components.shape[1]

    def project(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float32) - self.mean) @ self.components.T

    def back_project(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=np.float32) @ self.components + self.mean


def pca_fit(vectors: np.ndarray, k: int) -> PcaModel:
    """Top-k principal directions by variance.

    Requires k <= rank of the centered data. Each component's
    largest-magnitude entry is flipped positive so fits are unique.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ContractError(f"expected (N, D) matrix, got {x.shape}")
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    tol = max(x.shape) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    rank = int((s > tol).sum())
    if k > rank:
        raise ContractError(f"k={k} exceeds data rank {rank}")
    comps = vt[:k]
    flip = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    comps = comps * flip[:, None]
    return PcaModel(mean.astype(np.float32), comps.astype(np.float32))


@dataclass
class IndexEntry:
    id: str
    locator: str
    class_id: int
    width: int
    height: int
    cells_h: int
    cells_w: int
    global_vec: np.ndarray   # (k_global,) compressed
    local_vecs: np.ndarray   # (cells, k_local) compressed
    hists: np.ndarray        # (cells, 32) uint32 counts


@dataclass
class ReferenceIndex:
    grid: int
    pca_global: PcaModel
    pca_local: PcaModel
    entries: list
    encoder_digest: str = ""

    def __post_init__(self):
        self.by_id = {e.id: e for e in self.entries}

    def __len__(self):
        return len(self.entries)


@dataclass
class BuildReport:
    indexed: list = dc_field(default_factory=list)
    skipped: list = dc_field(default_factory=list)


def grid_histograms(l_plane: np.ndarray, grid: int):
    """Per-cell luminance histograms over the grid-aligned windows; the
    cell layout matches the coarsest feature map (ceil division)."""
    h, w = l_plane.shape
    cells_h = -(-h // grid)
    cells_w = -(-w // grid)
    hists = np.empty((cells_h * cells_w, LumaHistogram.BIN_COUNT), dtype=np.uint32)
    i = 0
    for cy in range(cells_h):
        for cx in range(cells_w):
            y, x = cy * grid, cx * grid
            win = (y, x, min(grid, h - y), min(grid, w - x))
            hists[i] = luma_histogram(l_plane, win).bins
            i += 1
    return hists, cells_h, cells_w


def image_descriptors(encoder: GrayEncoder, l_plane: np.ndarray, grid: int = 16):
    """(raw global vector, raw per-cell local matrix, histograms, cells_h,
    cells_w, class id) for one luminance plane."""
    pyr = encoder.extract(l_plane)
    local = pyr.local  # (C, ch, cw) at the grid resolution
    cells_h, cells_w = local.shape[1], local.shape[2]
    hists, gh, gw = grid_histograms(l_plane, grid)
    if (gh, gw) != (cells_h, cells_w):
        raise ContractError(
            f"histogram grid {(gh, gw)} does not match feature cells "
            f"{(cells_h, cells_w)}")
    cells = local.reshape(local.shape[0], -1).T  # (cells, C)
    class_id, _ = encoder.classify(l_plane)
    return pyr.global_vec, cells, hists, cells_h, cells_w, class_id


def _load_source(source):
    """source is a path or a (locator, array) pair; returns
    (id, locator, L plane)."""
    if isinstance(source, tuple):
        locator, arr = source
        arr = np.asarray(arr)
        digest = hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()
        l_plane = rgb_to_lab(arr).L if arr.ndim == 3 else arr.astype(np.float32)
        return digest, str(locator), l_plane
    path = str(source)
    with open(path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    return digest, path, load_gray_luminance(path)


def build_index(sources: Sequence, encoder: GrayEncoder, grid: int = 16,
                k_global: int = 128, k_local: int = 64):
    """Index a corpus; returns (ReferenceIndex, BuildReport).

    Unreadable sources are recorded in the report and skipped. PCA target
    dims are clamped to the achievable rank of the corpus (small corpora
    cannot support the full 128/64)."""
    raws = []
    report = BuildReport()
    for source in sources:
        try:
            digest, locator, l_plane = _load_source(source)
            desc = image_descriptors(encoder, l_plane, grid)
        except (OSError, ValueError, ContractError) as e:
            report.skipped.append((str(source), f"{type(e).__name__}: {e}"))
            continue
        raws.append((digest, locator, l_plane.shape, desc))
        report.indexed.append(digest)
    if not raws:
        raise ContractError("no readable images to index")

    g_mat = np.stack([d[3][0] for d in raws])
    l_mat = np.concatenate([d[3][1] for d in raws], axis=0)

    def fit_clamped(mat, k):
        x = np.asarray(mat, dtype=np.float64)
        s = np.linalg.svd(x - x.mean(axis=0), compute_uv=False)
        tol = max(x.shape) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
        rank = int((s > tol).sum())
        return pca_fit(mat, min(k, rank))

    pca_g = fit_clamped(g_mat, k_global)
    pca_l = fit_clamped(l_mat, k_local)

    entries = []
    for digest, locator, shape, desc in raws:
        gvec, cells, hists, ch, cw, class_id = desc
        entries.append(IndexEntry(
            id=digest, locator=locator, class_id=class_id,
            width=int(shape[1]), height=int(shape[0]),
            cells_h=ch, cells_w=cw,
            global_vec=pca_g.project(gvec).astype(np.float32),
            local_vecs=pca_l.project(cells).astype(np.float32),
            hists=hists,
        ))
    index = ReferenceIndex(grid=grid, pca_global=pca_g, pca_local=pca_l,
                           entries=entries, encoder_digest=encoder.digest())
    return index, report


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=-1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


def _cos(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def global_rank(query_l: np.ndarray, index: ReferenceIndex,
                encoder: GrayEncoder, n: int = GLOBAL_TOP_N):
    """Rank the predicted class's entries by compressed-descriptor cosine,
    descending, ties by ascending id; top n. Falls back to the whole
    index when the class has too few entries."""
    if not index.entries:
        raise ContractError("empty index")
    gvec, _, _, _, _, class_id = image_descriptors(encoder, query_l, index.grid)
    q = index.pca_global.project(gvec)
    pool = [e for e in index.entries if e.class_id == class_id]
    if len(pool) < CLASS_FALLBACK_MIN:
        pool = index.entries
    scored = sorted(((e.id, _cos(q, e.global_vec)) for e in pool),
                    key=lambda t: (-t[1], t[0]))
    return scored[:n]


def local_score(query_cells: np.ndarray, query_hists: np.ndarray,
                cand_cells: np.ndarray, cand_hists: np.ndarray,
                beta: float = DEFAULT_BETA) -> float:
    """Sum over query cells of best-cell cosine plus beta times the
    luminance-histogram correlation at that best cell. The nearest cell
    is chosen by the semantic term alone; ties go to the lowest index.
    Scoring runs in float64 regardless of descriptor storage."""
    q = _unit_rows(np.asarray(query_cells, dtype=np.float64))
    c = _unit_rows(np.asarray(cand_cells, dtype=np.float64))
    sims = q @ c.T                                      # (q_cells, c_cells)
    nn = np.argmax(sims, axis=1)
    semantic = sims[np.arange(sims.shape[0]), nn].astype(np.float64)
    corr = histogram_correlation_matrix(query_hists, cand_hists[nn])
    luminance = np.diagonal(corr)                       # cell i with its nn
    return float((semantic + beta * luminance).sum())


def local_rank(query_l: np.ndarray, candidates: Sequence[str],
               index: ReferenceIndex, encoder: GrayEncoder,
               beta: float = DEFAULT_BETA):
    """Rank candidates by local_score, descending, ties by ascending id.
    Returns (ranking, warnings); unknown or descriptor-less candidates
    are skipped with a warning record."""
    _, cells, hists, _, _, _ = image_descriptors(encoder, query_l, index.grid)
    q_cells = index.pca_local.project(cells)
    scored = []
    warnings = []
    for cid in candidates:
        entry = index.by_id.get(cid)
        if entry is None:
            warnings.append(f"candidate {cid!r} not in index; skipped")
            continue
        if entry.local_vecs.size == 0:
            warnings.append(f"candidate {cid!r} has no local descriptors; skipped")
            continue
        scored.append((cid, local_score(q_cells, hists, entry.local_vecs,
                                        entry.hists, beta)))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored, warnings


def recommend(query_l: np.ndarray, index: ReferenceIndex, encoder: GrayEncoder,
              k: int, beta: float = DEFAULT_BETA, n: int = GLOBAL_TOP_N):
    """Global ranking narrows to n candidates, local ranking orders them;
    returns the top k (fewer when the pool is smaller, no padding)."""
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    shortlist = [cid for cid, _ in global_rank(query_l, index, encoder, n)]
    ranking, _ = local_rank(query_l, shortlist, index, encoder, beta)
    return ranking[:k]


# ---------------------------------------------------------------------------
# index container format (same primitive conventions as the weight files:
# little-endian integers, length-prefixed records, no padding)

def _pack_pca(model: PcaModel) -> bytes:
    mean = np.ascontiguousarray(model.mean, dtype="<f4")
    comps = np.ascontiguousarray(model.components, dtype="<f4")
    return struct.pack("<II", model.source_dim, model.k) + mean.tobytes() + \
        comps.tobytes()


def _unpack_pca(buf: memoryview, off: int):
    dim, k = struct.unpack_from("<II", buf, off)
    off += 8
    mean = np.frombuffer(buf, dtype="<f4", count=dim, offset=off).copy()
    off += 4 * dim
    comps = np.frombuffer(buf, dtype="<f4", count=k * dim, offset=off) \
        .reshape(k, dim).copy()
    off += 4 * k * dim
    return PcaModel(mean, comps), off


def _pack_entry(e: IndexEntry) -> bytes:
    id_b = e.id.encode("utf-8")
    loc_b = e.locator.encode("utf-8")
    parts = [struct.pack("<H", len(id_b)), id_b,
             struct.pack("<H", len(loc_b)), loc_b,
             struct.pack("<IIIII", e.class_id, e.width, e.height,
                         e.cells_h, e.cells_w),
             struct.pack("<I", e.global_vec.shape[0]),
             np.ascontiguousarray(e.global_vec, dtype="<f4").tobytes(),
             struct.pack("<I", e.local_vecs.shape[1] if e.local_vecs.size else 0),
             np.ascontiguousarray(e.local_vecs, dtype="<f4").tobytes(),
             struct.pack("<I", e.hists.shape[1]),
             np.ascontiguousarray(e.hists, dtype="<u4").tobytes()]
    payload = b"".join(parts)
    return struct.pack("<I", len(payload)) + payload


def _unpack_entry(payload: bytes) -> IndexEntry:
    buf = memoryview(payload)
    off = 0
    (id_len,) = struct.unpack_from("<H", buf, off)
    off += 2
    eid = bytes(buf[off:off + id_len]).decode("utf-8")
    off += id_len
    (loc_len,) = struct.unpack_from("<H", buf, off)
    off += 2
    loc = bytes(buf[off:off + loc_len]).decode("utf-8")
    off += loc_len
    class_id, width, height, cells_h, cells_w = struct.unpack_from("<IIIII",
                                                                   buf, off)
    off += 20
    (gdim,) = struct.unpack_from("<I", buf, off)
    off += 4
    gvec = np.frombuffer(buf, dtype="<f4", count=gdim, offset=off).copy()
    off += 4 * gdim
    (ldim,) = struct.unpack_from("<I", buf, off)
    off += 4
    cells = cells_h * cells_w
    local = np.frombuffer(buf, dtype="<f4", count=cells * ldim, offset=off) \
        .reshape(cells, ldim).copy()
    off += 4 * cells * ldim
    (bins,) = struct.unpack_from("<I", buf, off)
    off += 4
    hists = np.frombuffer(buf, dtype="<u4", count=cells * bins, offset=off) \
        .reshape(cells, bins).copy()
    return IndexEntry(eid, loc, int(class_id), int(width), int(height),
                      int(cells_h), int(cells_w), gvec, local, hists)


def save_index(index: ReferenceIndex, path) -> None:
    meta = json.dumps({"grid": index.grid,
                       "encoder_digest": index.encoder_digest},
                      sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<I", INDEX_VERSION))
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(_pack_pca(index.pca_global))
        fh.write(_pack_pca(index.pca_local))
        fh.write(struct.pack("<I", len(index.entries)))
        for e in index.entries:
            fh.write(_pack_entry(e))


def load_index(path) -> ReferenceIndex:
    with open(path, "rb") as fh:
        data = fh.read()
    buf = memoryview(data)
    if bytes(buf[:4]) != INDEX_MAGIC:
        raise ContractError("bad magic, not an index file")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != INDEX_VERSION:
        raise ContractError(f"unsupported index version {version}")
    (meta_len,) = struct.unpack_from("<I", buf, 8)
    off = 12
    meta = json.loads(bytes(buf[off:off + meta_len]).decode("utf-8"))
    off += meta_len
    pca_g, off = _unpack_pca(buf, off)
    pca_l, off = _unpack_pca(buf, off)
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    entries = []
    for _ in range(count):
        (plen,) = struct.unpack_from("<I", buf, off)
        off += 4
        entries.append(_unpack_entry(bytes(buf[off:off + plen])))
        off += plen
    if off != len(data):
        raise ContractError("trailing bytes after last entry")
    return ReferenceIndex(grid=int(meta["grid"]), pca_global=pca_g,
                          pca_local=pca_l, entries=entries,
                          encoder_digest=meta.get("encoder_digest", ""))
