"""Two-branch multi-task training for the colorization network.

Each batch is split exactly in half. The first half runs the chrominance
branch: the network sees the fake reference (ground-truth chrominance
warped out to the reference frame and back) and is penalized with a
smooth-L1 distance to the true chrominance. The second half runs the
perceptual branch: the network sees the actual warped reference and is
penalized by the squared distance between frozen-encoder features of its
output and of the ground truth, weighted by alpha. Both halves share
weights; their gradients are summed into a single Adam step per batch.

Losses operate in normalized chrominance units (ab / 110), which puts
the smooth-L1 knee at a meaningful scale.

Matching is the dominant cost, so correspondence fields, similarity
maps, warps and frozen target features are computed once per pair (both
role orientations) and cached, optionally on disk keyed by content.
"""

from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .colornet import ColorNet, assemble
from .correspondence import MatchConfig, bidirectional
from .encoder import CapabilityError, GrayEncoder, normalize_luminance
from .fusion import SimilarityMaps, fake_reference, similarity_maps, \
    upsample_pyramid, warp_chrominance
from .imagecolor import AB_RANGE, LabImage
from .numerics import AdamState, ContractError, Graph, adam_step


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.005
    batch_size: int = 8
    branch_split: float = 0.5
    lr: float = 1e-4
    lr_decay: float = 0.1
    decay_epochs: int = 3
    epochs: int = 10
    seed: int = 0
    role_switch_prob: float = 0.5

    def __post_init__(self):
        if self.alpha < 0:
            raise ContractError(f"alpha must be >= 0, got {self.alpha}")
        if self.batch_size % 2:
            raise ContractError(
                f"batch size must be even for the 50/50 branch split, got "
                f"{self.batch_size}")
        if self.branch_split != 0.5:
            raise ContractError("branch split is fixed at 0.5")


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """lr(epoch) = lr * decay^floor(epoch / decay_epochs)."""
    return cfg.lr * cfg.lr_decay ** (epoch // cfg.decay_epochs)


# ---------------------------------------------------------------------------
# losses

def smooth_l1_elements(diff: np.ndarray) -> np.ndarray:
    a = np.abs(diff)
    return np.where(a < 1.0, 0.5 * diff * diff, a - 0.5)


def chrominance_loss(p_ab: np.ndarray, t_ab: np.ndarray) -> float:
    """Sum of per-pixel, per-channel smooth-L1 distances. Inputs are in
    normalized units (ab / 110)."""
    p_ab = np.asarray(p_ab, dtype=np.float64)
    t_ab = np.asarray(t_ab, dtype=np.float64)
    if p_ab.shape != t_ab.shape:
        raise ContractError(f"extents differ: {p_ab.shape} vs {t_ab.shape}")
    return float(smooth_l1_elements(p_ab - t_ab).sum())


def _lab_feature_stack(lab: LabImage) -> np.ndarray:
    return np.stack([normalize_luminance(lab.L),
                     np.asarray(lab.a, np.float32) / AB_RANGE,
                     np.asarray(lab.b, np.float32) / AB_RANGE])


def _top_tap(encoder: GrayEncoder, stack: np.ndarray) -> np.ndarray:
    g = Graph()
    taps = encoder.features(g, g.leaf(stack[None]), stop_after_taps=True)["taps"]
    return np.asarray(taps[-1].value[0])


def perceptual_loss(p_lab: LabImage, t_lab: LabImage,
                    perceptual_encoder: Optional[GrayEncoder]) -> float:
    """Sum over positions of squared L2 distance between the frozen
    encoder's top-tap features of the two images."""
    if perceptual_encoder is None:
        raise CapabilityError("no perceptual encoder provided")
    if perceptual_encoder.config.in_channels != 3:
        raise ContractError("perceptual encoder must take 3-channel input")
    if p_lab.L.shape != t_lab.L.shape:
        raise ContractError(
            f"image extents differ: {p_lab.L.shape} vs {t_lab.L.shape}")
    fp = _top_tap(perceptual_encoder, _lab_feature_stack(p_lab))
    ft = _top_tap(perceptual_encoder, _lab_feature_stack(t_lab))
    d = fp.astype(np.float64) - ft.astype(np.float64)
    return float((d * d).sum())


def perceptual_loss_grad(p_lab: LabImage, t_lab: LabImage,
                         perceptual_encoder: GrayEncoder):
    """(loss, d loss / d p_ab) differentiating through the frozen
    encoder; the gradient is w.r.t. the un-normalized chrominance."""
    if perceptual_encoder is None:
        raise CapabilityError("no perceptual encoder provided")
    ft = _top_tap(perceptual_encoder, _lab_feature_stack(t_lab))
    g = Graph()
    ab = g.leaf(p_lab.ab[None], trainable=True)
    l_norm = g.leaf(normalize_luminance(p_lab.L)[None, None])
    stack = g.concat([l_norm, g.scale(ab, 1.0 / AB_RANGE)], axis=1)
    tap = perceptual_encoder.features(g, stack, stop_after_taps=True)["taps"][-1]
    diff = g.sub(tap, g.leaf(ft[None]))
    loss = g.sum(g.mul(diff, diff))
    g.backward(loss)
    grad = ab.grad[0] if ab.grad is not None else np.zeros_like(p_lab.ab)
    return float(loss.value), grad


# ---------------------------------------------------------------------------
# per-pair preparation

@dataclass
class PreparedOrientation:
    """Everything one training orientation needs, fully precomputed."""

    t_l: np.ndarray            # (H, W) luminance
    t_ab_norm: np.ndarray      # (2, H, W) ground truth, normalized
    chrom_stack: np.ndarray    # (13, H, W) input with the fake reference
    perc_stack: np.ndarray     # (13, H, W) input with the warped reference
    target_features: np.ndarray  # frozen top-tap features of the ground truth


def _digest_pair(a: LabImage, b: LabImage, encoder: GrayEncoder,
                 match_config: MatchConfig) -> str:
    h = hashlib.sha256()
    for img in (a, b):
        for plane in (img.L, img.a, img.b):
            h.update(np.ascontiguousarray(plane, dtype=np.float32).tobytes())
    h.update(encoder.digest().encode())
    h.update(repr(match_config).encode())
    return h.hexdigest()


def prepare_pair(target: LabImage, reference: LabImage, encoder: GrayEncoder,
                 perceptual_encoder: GrayEncoder,
                 match_config: MatchConfig) -> dict:
    """Compute both orientations for one unordered image pair."""
    pyr_t = encoder.extract(target.L)
    pyr_r = encoder.extract(reference.L)
    phi_tr, phi_rt = bidirectional(pyr_t, pyr_r, match_config)
    up_t = upsample_pyramid(pyr_t.levels, *target.L.shape)
    up_r = upsample_pyramid(pyr_r.levels, *reference.L.shape)

    def orientation(t, r, up_a, up_b, phi_ab, phi_ba):
        sims = similarity_maps(up_a, up_b, phi_ab, phi_ba)
        warped = warp_chrominance(r.ab, phi_ab)
        fake = fake_reference(t.ab, phi_ab, phi_ba)
        return PreparedOrientation(
            t_l=np.asarray(t.L, np.float32),
            t_ab_norm=t.ab.astype(np.float32) / AB_RANGE,
            chrom_stack=assemble(t.L, fake, sims).planes,
            perc_stack=assemble(t.L, warped, sims).planes,
            target_features=_top_tap(perceptual_encoder, _lab_feature_stack(t)),
        )

    return {
        "forward": orientation(target, reference, up_t, up_r, phi_tr, phi_rt),
        "swapped": orientation(reference, target, up_r, up_t, phi_rt, phi_tr),
    }


class PairCache:
    """Disk-backed cache of prepared orientations keyed by content."""

    def __init__(self, directory: Optional[str]):
        self.directory = directory
        if directory:
            os.makedirs(directory, exist_ok=True)

    def path(self, key: str) -> Optional[str]:
        return os.path.join(self.directory, key + ".npz") if self.directory else None

    def load(self, key: str) -> Optional[dict]:
        path = self.path(key)
        if not path or not os.path.exists(path):
            return None
        data = np.load(path)
        out = {}
        for tag in ("forward", "swapped"):
            out[tag] = PreparedOrientation(
                t_l=data[f"{tag}_t_l"],
                t_ab_norm=data[f"{tag}_t_ab_norm"],
                chrom_stack=data[f"{tag}_chrom_stack"],
                perc_stack=data[f"{tag}_perc_stack"],
                target_features=data[f"{tag}_target_features"],
            )
        return out

    def store(self, key: str, prepared: dict) -> None:
        path = self.path(key)
        if not path:
            return
        arrays = {}
        for tag, o in prepared.items():
            arrays[f"{tag}_t_l"] = o.t_l
            arrays[f"{tag}_t_ab_norm"] = o.t_ab_norm
            arrays[f"{tag}_chrom_stack"] = o.chrom_stack
            arrays[f"{tag}_perc_stack"] = o.perc_stack
            arrays[f"{tag}_target_features"] = o.target_features
        np.savez(path, **arrays)


# ---------------------------------------------------------------------------
# trainer

class TwoBranchTrainer:
    """Owns the network tensors and optimizer state for one run."""

    def __init__(self, pairs: Sequence, encoder: GrayEncoder,
                 perceptual_encoder: GrayEncoder, config: TrainConfig,
                 match_config: MatchConfig = MatchConfig(),
                 net: Optional[ColorNet] = None, cache_dir: Optional[str] = None):
        if not pairs:
            raise ContractError("empty pair list")
        shape = pairs[0][0].L.shape
        for t, r in pairs:
            if t.L.shape != shape or r.L.shape != shape:
                raise ContractError("all training images must share one extent")
        if shape[0] % 8 or shape[1] % 8:
            raise ContractError(
                f"training extents must be divisible by 8, got {shape}")
        self.config = config
        self.encoder = encoder
        self.perceptual_encoder = perceptual_encoder
        self.net = net or ColorNet.random_init(seed=config.seed)
        self.state = AdamState(lr=config.lr)
        cache = PairCache(cache_dir)
        self.prepared = []
        for t, r in pairs:
            key = _digest_pair(t, r, encoder, match_config)
            data = cache.load(key)
            if data is None:
                data = prepare_pair(t, r, encoder, perceptual_encoder,
                                    match_config)
                cache.store(key, data)
            self.prepared.append(data)

    # -- branch gradients ----------------------------------------------------

    def _leaves(self, g: Graph) -> dict:
        return {k: g.leaf(self.net.tensors[k], trainable=True)
                for k in self.net.trainable_names()}

    def _collect(self, g: Graph, leaves: dict, loss) -> dict:
        g.backward(loss)
        return {k: (n.grad if n.grad is not None
                    else np.zeros_like(n.value)) for k, n in leaves.items()}

    def _orientations(self, items):
        return [self.prepared[i]["swapped" if swap else "forward"]
                for i, swap in items]

    def chrominance_gradients(self, items):
        """items: (pair index, swapped flag) list. Returns (grads, loss);
        the loss and its gradients never see alpha."""
        data = self._orientations(items)
        x = np.stack([d.chrom_stack for d in data])
        t_ab = np.stack([d.t_ab_norm for d in data])
        g = Graph()
        leaves = self._leaves(g)
        out = self.net.forward_graph(g, g.leaf(x), leaves=leaves, training=True)
        loss = g.smooth_l1(g.scale(out, 1.0 / AB_RANGE), g.leaf(t_ab))
        grads = self._collect(g, leaves, loss)
        return grads, float(loss.value)

    def perceptual_gradients(self, items):
        """Returns (grads, raw loss). Gradients carry the alpha weight, so
        alpha = 0 yields exactly zero gradients."""
        data = self._orientations(items)
        x = np.stack([d.perc_stack for d in data])
        l_norm = np.stack([normalize_luminance(d.t_l)[None] for d in data])
        f_t = np.stack([d.target_features for d in data])
        g = Graph()
        leaves = self._leaves(g)
        out = self.net.forward_graph(g, g.leaf(x), leaves=leaves, training=True)
        lab_stack = g.concat([g.leaf(l_norm), g.scale(out, 1.0 / AB_RANGE)],
                             axis=1)
        tap = self.perceptual_encoder.features(
            g, lab_stack, stop_after_taps=True)["taps"][-1]
        diff = g.sub(tap, g.leaf(f_t))
        raw = g.sum(g.mul(diff, diff))
        loss = g.scale(raw, self.config.alpha)
        grads = self._collect(g, leaves, loss)
        return grads, float(raw.value)

    # -- steps ----------------------------------------------------------------

    def step(self, chrom_items, perc_items):
        """One optimizer step from a half/half batch; returns the two
        branch losses."""
        grads_c, loss_c = self.chrominance_gradients(chrom_items)
        grads_p, loss_p = self.perceptual_gradients(perc_items)
        total = {k: grads_c[k] + grads_p[k] for k in grads_c}
        params = {k: self.net.tensors[k] for k in total}
        adam_step(params, total, self.state)
        return loss_c, loss_p

    def train(self):
        """Run the configured schedule; returns the loss history as rows
        of (step, chrominance loss, perceptual loss, lr)."""
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        n = len(self.prepared)
        history = []
        step_no = 0
        for epoch in range(cfg.epochs):
            self.state.lr = learning_rate(cfg, epoch)
            order = [int(i) for i in rng.permutation(n)]
            while len(order) >= cfg.batch_size:
                batch = [order.pop(0) for _ in range(cfg.batch_size)]
                swaps = rng.random(cfg.batch_size) < cfg.role_switch_prob
                half = cfg.batch_size // 2
                items = list(zip(batch, swaps))
                loss_c, loss_p = self.step(items[:half], items[half:])
                step_no += 1
                history.append((step_no, loss_c, loss_p, self.state.lr))
        return self.net, history


def train(pairs, encoder, perceptual_encoder, config: TrainConfig,
          match_config: MatchConfig = MatchConfig(), net=None, cache_dir=None):
    """Convenience wrapper: build a trainer and run it."""
    trainer = TwoBranchTrainer(pairs, encoder, perceptual_encoder, config,
                               match_config, net=net, cache_dir=cache_dir)
    return trainer.train()


def combined_loss(loss_c: float, loss_p: float, alpha: float) -> float:
    return loss_c + alpha * loss_p


# ---------------------------------------------------------------------------
# loss history and config files

def write_history_csv(path, history) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "l_chrom", "l_perc", "lr"])
        writer.writerows(history)


def read_train_config(path) -> TrainConfig:
    """Parse a plain "key = value" file with # comments into a config."""
    fields = {}
    casts = {"alpha": float, "batch_size": int, "branch_split": float,
             "lr": float, "lr_decay": float, "decay_epochs": int,
             "epochs": int, "seed": int, "role_switch_prob": float}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ContractError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in casts:
                raise ContractError(f"{path}:{lineno}: unknown key {key!r}")
            fields[key] = casts[key](value)
    return TrainConfig(**fields)


# ---------------------------------------------------------------------------
# pair sampling

@dataclass(frozen=True)
class ImageRecord:
    id: str
    class_id: int
    top5: tuple = ()


@dataclass(frozen=True)
class PairSamplerConfig:
    proportions: tuple = (0.45, 0.45, 0.10)
    category_map: dict = field(default_factory=dict)

    def __post_init__(self):
        if abs(sum(self.proportions) - 1.0) > 1e-9:
            raise ContractError(
                f"proportions must sum to 1, got {self.proportions}")

    def category(self, class_id: int):
        return self.category_map.get(class_id, class_id)


STRATA = ("top5", "same_class", "cross_class_same_category")


@dataclass
class SampleReport:
    pairs: list
    counts: dict
    warnings: list


def _quota(proportions, count):
    base = [int(np.floor(p * count)) for p in proportions]
    remainder = count - sum(base)
    fractions = sorted(range(len(proportions)),
                       key=lambda i: (-(proportions[i] * count - base[i]), i))
    for i in fractions[:remainder]:
        base[i] += 1
    return base


def sample_pairs(table: Sequence[ImageRecord], config: PairSamplerConfig,
                 count: int, seed: int = 0) -> SampleReport:
    """Draw (target, reference) id pairs in the configured stratum
    proportions; quota allocation by largest remainder, so counts match
    the proportions exactly up to rounding."""
    if count < 1:
        raise ContractError(f"count must be >= 1, got {count}")
    records = list(table)
    by_class = {}
    for rec in records:
        by_class.setdefault(rec.class_id, []).append(rec)
    by_category = {}
    for rec in records:
        by_category.setdefault(config.category(rec.class_id), []).append(rec)

    top5_pool = [r for r in records
                 if any(t != r.id for t in r.top5)]
    same_class_pool = [r for r in records if len(by_class[r.class_id]) >= 2]
    cross_pool = [r for r in records
                  if any(o.class_id != r.class_id
                         for o in by_category[config.category(r.class_id)])]

    quotas = dict(zip(STRATA, _quota(config.proportions, count)))
    warnings = []
    pools = {"top5": top5_pool, "same_class": same_class_pool,
             "cross_class_same_category": cross_pool}
    for stratum in ("top5", "cross_class_same_category"):
        if quotas[stratum] > 0 and not pools[stratum]:
            warnings.append(
                f"stratum {stratum!r} impossible for this table; "
                f"{quotas[stratum]} pairs redistributed to same_class")
            quotas["same_class"] += quotas[stratum]
            quotas[stratum] = 0
    if quotas["same_class"] > 0 and not same_class_pool:
        raise ContractError("no class has two or more images")

    rng = np.random.default_rng(seed)
    pairs = []
    counts = {s: 0 for s in STRATA}

    def pick(pool):
        return pool[int(rng.integers(0, len(pool)))]

    for stratum in STRATA:
        for _ in range(quotas[stratum]):
            if stratum == "top5":
                rec = pick(top5_pool)
                options = [t for t in rec.top5 if t != rec.id]
                ref = options[int(rng.integers(0, len(options)))]
            elif stratum == "same_class":
                rec = pick(same_class_pool)
                options = [o for o in by_class[rec.class_id] if o.id != rec.id]
                ref = pick(options).id
            else:
                rec = pick(cross_pool)
                options = [o for o in by_category[config.category(rec.class_id)]
                           if o.class_id != rec.class_id]
                ref = pick(options).id
            pairs.append((rec.id, ref, stratum))
            counts[stratum] += 1
    return SampleReport(pairs=pairs, counts=counts, warnings=warnings)
