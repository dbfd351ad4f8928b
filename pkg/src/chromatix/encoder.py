"""Multi-level luminance feature extractor with five similarity taps, a
local/global descriptor pair for retrieval, and an optional classifier
head.

Block i (1..5) is two conv-relu pairs; the first conv of blocks 2..5 has
stride 2, so tap i sits at ceil(input / 2^(i-1)). The first relu of each
block is the similarity tap for that level; the block-5 output is the
local descriptor map, and the global descriptor is a fully-connected
layer over its spatial mean.

Presets: "toy" (8/16/32/64/64 channels, trainable in minutes on a CPU)
and "vgg19-shape" (64/128/256/512/512, fc width 4096) for importing
externally converted weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .numerics import AdamState, ContractError, Graph, adam_step
from .weights import WeightsError, load_weights, save_weights, validate_names, weights_digest

MIN_SIDE = 32


class CapabilityError(RuntimeError):
    """The loaded weights lack a head required for the requested call."""


@dataclass(frozen=True)
class EncoderConfig:
    channels: tuple = (8, 16, 32, 64, 64)
    in_channels: int = 1
    descriptor_dim: int = 64
    class_count: int = 16

    def __post_init__(self):
        if len(self.channels) != 5:
            raise ContractError(
                f"need exactly 5 blocks (one similarity tap each), got "
                f"{len(self.channels)}")

    @classmethod
    def toy(cls, class_count=16, in_channels=1):
        return cls((8, 16, 32, 64, 64), in_channels, 64, class_count)

    @classmethod
    def vgg19_shape(cls, class_count=1000, in_channels=1):
        return cls((64, 128, 256, 512, 512), in_channels, 4096, class_count)

    def meta_vector(self) -> np.ndarray:
        return np.array([self.in_channels, *self.channels,
                         self.descriptor_dim, self.class_count], dtype=np.float32)

    @classmethod
    def from_meta_vector(cls, v) -> "EncoderConfig":
        v = [int(round(float(x))) for x in np.asarray(v).reshape(-1)]
        if len(v) != 8:
            raise WeightsError(f"meta.config has {len(v)} entries, expected 8")
        return cls(tuple(v[1:6]), v[0], v[6], v[7])


@dataclass
class FeaturePyramid:
    """Per-level feature maps at native resolutions plus the two
    retrieval descriptors. levels[i] has extents (C_i, ceil(H/2^i),
    ceil(W/2^i)) with i counted from 0."""

    levels: list
    local: np.ndarray
    global_vec: np.ndarray

    @property
    def level_count(self) -> int:
        return len(self.levels)


def expected_shapes(cfg: EncoderConfig) -> dict:
    shapes = {"meta.config": (8,)}
    prev = cfg.in_channels
    for i, c in enumerate(cfg.channels, start=1):
        shapes[f"block{i}.conv1.w"] = (c, prev, 3, 3)
        shapes[f"block{i}.conv1.b"] = (c,)
        shapes[f"block{i}.conv2.w"] = (c, c, 3, 3)
        shapes[f"block{i}.conv2.b"] = (c,)
        prev = c
    shapes["fc.w"] = (cfg.descriptor_dim, cfg.channels[-1], 1, 1)
    shapes["fc.b"] = (cfg.descriptor_dim,)
    if cfg.class_count > 0:
        shapes["head.w"] = (cfg.class_count, cfg.descriptor_dim, 1, 1)
        shapes["head.b"] = (cfg.class_count,)
    return shapes


def _kaiming_uniform(rng, shape):
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def init_tensors(cfg: EncoderConfig, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    tensors = {"meta.config": cfg.meta_vector()}
    for name, shape in expected_shapes(cfg).items():
        if name == "meta.config":
            continue
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        else:
            tensors[name] = _kaiming_uniform(rng, shape)
    return tensors


def normalize_luminance(L: np.ndarray) -> np.ndarray:
    """Map L in [0, 100] to the symmetric range [-1, 1]."""
    return (np.asarray(L, dtype=np.float32) / 50.0) - 1.0


def normalize_lab_stack(lab) -> np.ndarray:
    """3-channel normalized stack for the color-input variant."""
    return np.stack([normalize_luminance(lab.L),
                     np.asarray(lab.a, np.float32) / 110.0,
                     np.asarray(lab.b, np.float32) / 110.0])


class GrayEncoder:
    """Immutable feature extractor; safe for concurrent extract/classify."""

    def __init__(self, config: EncoderConfig, tensors: dict):
        validate_names(tensors, expected_shapes(config), "encoder")
        self.config = config
        self.tensors = tensors

    # -- construction --------------------------------------------------------

    @classmethod
    def random_init(cls, config: EncoderConfig, seed: int = 0) -> "GrayEncoder":
        return cls(config, init_tensors(config, seed))

    @classmethod
    def load(cls, path) -> "GrayEncoder":
        tensors = load_weights(path)
        if "meta.config" not in tensors:
            raise WeightsError("encoder: missing tensor 'meta.config'")
        return cls(EncoderConfig.from_meta_vector(tensors["meta.config"]), tensors)

    def save(self, path) -> None:
        save_weights(path, self.tensors)

    def digest(self) -> str:
        return weights_digest(self.tensors)

    # -- graph construction ---------------------------------------------------

    def features(self, g: Graph, x, leaves: Optional[dict] = None,
                 stop_after_taps: bool = False) -> dict:
        """Build the forward graph from input node x (B, C_in, H, W).

        Returns nodes: taps (5 similarity taps), local, pooled, global_vec
        and logits (None without a head, or when stop_after_taps is set).
        Pass leaves to reuse caller-created weight nodes, e.g. to collect
        per-tensor gradients during training.
        """
        w = leaves if leaves is not None else {
            name: g.leaf(t, name=name) for name, t in self.tensors.items()
            if name != "meta.config"}
        taps = []
        h = x
        for i in range(1, 6):
            stride = 1 if i == 1 else 2
            h = g.relu(g.conv2d(h, w[f"block{i}.conv1.w"], w[f"block{i}.conv1.b"],
                                stride=stride, padding=1))
            taps.append(h)
            h = g.relu(g.conv2d(h, w[f"block{i}.conv2.w"], w[f"block{i}.conv2.b"],
                                padding=1))
        out = {"taps": taps, "local": h, "pooled": None, "global_vec": None,
               "logits": None}
        if stop_after_taps:
            return out
        pooled = g.mean_spatial(h)
        gvec = g.relu(g.conv2d(pooled, w["fc.w"], w["fc.b"]))
        out["pooled"] = pooled
        out["global_vec"] = gvec
        if self.config.class_count > 0:
            out["logits"] = g.conv2d(gvec, w["head.w"], w["head.b"])
        return out

    def _prepare(self, L: np.ndarray) -> np.ndarray:
        L = np.asarray(L, dtype=np.float32)
        if L.ndim == 2:
            x = normalize_luminance(L)[None, None]
        elif L.ndim == 3 and L.shape[0] == self.config.in_channels:
            x = L[None]
        else:
            raise ContractError(
                f"expected (H, W) plane or ({self.config.in_channels}, H, W) "
                f"stack, got {L.shape}")
        if min(x.shape[2], x.shape[3]) < MIN_SIDE:
            raise ContractError(
                f"min side {min(x.shape[2], x.shape[3])} < {MIN_SIDE}")
        return x

    # -- inference ------------------------------------------------------------

    def extract(self, L: np.ndarray) -> FeaturePyramid:
        """Feature pyramid for one luminance plane (values in [0, 100]),
        or a pre-normalized (C_in, H, W) stack for color variants."""
        x = self._prepare(L)
        g = Graph()
        nodes = self.features(g, g.leaf(x))
        levels = [np.asarray(t.value[0]) for t in nodes["taps"]]
        return FeaturePyramid(
            levels=levels,
            local=np.asarray(nodes["local"].value[0]),
            global_vec=np.asarray(nodes["global_vec"].value[0, :, 0, 0]),
        )

    def classify(self, L: np.ndarray):
        """(class id, probability vector); argmax ties break to the lowest
        index."""
        if self.config.class_count == 0:
            raise CapabilityError("encoder has no classifier head")
        x = self._prepare(L)
        g = Graph()
        logits = self.features(g, g.leaf(x))["logits"].value[0, :, 0, 0]
        z = logits - logits.max()
        p = np.exp(z)
        p /= p.sum()
        return int(np.argmax(p)), p


def train_classifier(samples: Sequence, config: EncoderConfig, *,
                     steps: int = 200, lr: float = 1e-3, batch_size: int = 8,
                     seed: int = 0):
    """Train an encoder end-to-end on (plane-or-stack, class id) samples
    with cross-entropy and Adam. Returns (encoder, loss history).

    Deterministic for a fixed seed: init, shuffling, and batching all
    derive from it.
    """
    samples = list(samples)
    if not samples:
        raise ContractError("empty dataset")
    labels = sorted({int(c) for _, c in samples})
    if len(labels) < 2:
        raise ContractError("need at least 2 classes")
    if max(labels) >= config.class_count:
        raise ContractError(
            f"label {max(labels)} out of range for {config.class_count} classes")

    enc = GrayEncoder.random_init(config, seed=seed)
    tensors = {k: v.copy() for k, v in enc.tensors.items()}
    enc = GrayEncoder(config, tensors)
    trainable = [k for k in tensors if k != "meta.config"]

    stacks = []
    for plane, cls in samples:
        plane = np.asarray(plane, dtype=np.float32)
        stack = normalize_luminance(plane)[None] if plane.ndim == 2 else plane
        if min(stack.shape[1], stack.shape[2]) < MIN_SIDE:
            raise ContractError(f"sample smaller than {MIN_SIDE} px min side")
        stacks.append((stack, int(cls)))

    rng = np.random.default_rng(seed)
    state = AdamState(lr=lr)
    history = []
    order = []
    for _ in range(steps):
        if len(order) < batch_size:
            perm = rng.permutation(len(stacks))
            order.extend(int(i) for i in perm)
        batch = [order.pop(0) for _ in range(min(batch_size, len(order)))]
        x = np.stack([stacks[i][0] for i in batch])
        y = np.array([stacks[i][1] for i in batch], dtype=np.int64)
        g = Graph()
        leaves = {k: g.leaf(tensors[k], trainable=True) for k in trainable}
        nodes = enc.features(g, g.leaf(x), leaves=leaves)
        loss = g.softmax_xent(nodes["logits"], y)
        g.backward(loss)
        grads = {k: leaves[k].grad if leaves[k].grad is not None
                 else np.zeros_like(tensors[k]) for k in trainable}
        adam_step({k: tensors[k] for k in trainable}, grads, state)
        history.append(float(loss.value))
    return enc, history
