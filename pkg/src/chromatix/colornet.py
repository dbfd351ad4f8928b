"""The chrominance-prediction network: 13-channel input assembly and a
10-block U-net.

Blocks 2-4 downsample at entry (stride-2 conv), blocks 5-6 run dilated
convolutions at the bottleneck resolution, blocks 8-10 upsample at entry
(stride-2 transposed conv). Skip connections concatenate the outputs of
blocks 3, 2 and 1 onto the outputs of blocks 8, 9 and 10 respectively,
which pair equal spatial resolutions. Every block is two conv-relu
pairs followed by batch normalization, except block 10 which has no
normalization. A final 1x1 convolution and scaled tanh produce the two
chrominance channels.

Channel plan (base width c): c, 2c, 4c, 8c, 8c, 8c, 4c, 2c, c, c.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .correspondence import MatchConfig, bidirectional
from .encoder import GrayEncoder, normalize_luminance
from .fusion import SimilarityMaps, similarity_maps, upsample_pyramid, warp_chrominance
from .imagecolor import AB_RANGE, LabImage, rgb_to_lab
from .numerics import ContractError, Graph
from .weights import WeightsError, load_weights, save_weights, validate_names, weights_digest

INPUT_CHANNELS = 13
DOWN_BLOCKS = (2, 3, 4)
UP_BLOCKS = (8, 9, 10)
DILATED_BLOCKS = (5, 6)
SKIP_PAIRS = ((1, 10), (2, 9), (3, 8))


class PipelineError(RuntimeError):
    """A stage of the colorization pipeline failed; stage names which."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class NetConfig:
    base: int = 16
    dilation: int = 2
    tanh_scale: float = float(AB_RANGE)

    @property
    def channels(self) -> tuple:
        c = self.base
        return (c, 2 * c, 4 * c, 8 * c, 8 * c, 8 * c, 4 * c, 2 * c, c, c)

    @classmethod
    def toy(cls):
        return cls(base=16)

    @classmethod
    def paper_shape(cls):
        return cls(base=64)

    def meta_vector(self) -> np.ndarray:
        return np.array([self.base, self.dilation, self.tanh_scale],
                        dtype=np.float32)

    @classmethod
    def from_meta_vector(cls, v) -> "NetConfig":
        v = np.asarray(v).reshape(-1)
        if v.size != 3:
            raise WeightsError(f"meta.config has {v.size} entries, expected 3")
        return cls(base=int(round(float(v[0]))), dilation=int(round(float(v[1]))),
                   tanh_scale=float(v[2]))


def _block_io_channels(cfg: NetConfig):
    """(in, out) channel pair per block, accounting for skip concats."""
    ch = cfg.channels
    skip_into = {dst: ch[src - 1] for src, dst in SKIP_PAIRS}
    pairs = []
    prev = INPUT_CHANNELS
    for b in range(1, 11):
        pairs.append((prev, ch[b - 1]))
        prev = ch[b - 1] + skip_into.get(b, 0)
    head_in = prev  # block 10 output + skip from block 1
    return pairs, head_in


def expected_shapes(cfg: NetConfig) -> dict:
    shapes = {"meta.config": (3,)}
    pairs, head_in = _block_io_channels(cfg)
    for b, (cin, cout) in enumerate(pairs, start=1):
        if b in UP_BLOCKS:
            shapes[f"b{b}.c1.w"] = (cin, cout, 4, 4)  # transposed conv
        else:
            shapes[f"b{b}.c1.w"] = (cout, cin, 3, 3)
        shapes[f"b{b}.c1.b"] = (cout,)
        shapes[f"b{b}.c2.w"] = (cout, cout, 3, 3)
        shapes[f"b{b}.c2.b"] = (cout,)
        if b != 10:
            shapes[f"b{b}.bn.g"] = (cout,)
            shapes[f"b{b}.bn.b"] = (cout,)
            shapes[f"b{b}.bn.rm"] = (cout,)
            shapes[f"b{b}.bn.rv"] = (cout,)
    shapes["head.w"] = (2, head_in, 1, 1)
    shapes["head.b"] = (2,)
    return shapes


def init_tensors(cfg: NetConfig, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    tensors = {"meta.config": cfg.meta_vector()}
    for name, shape in expected_shapes(cfg).items():
        if name == "meta.config":
            continue
        if name.endswith(".w"):
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            tensors[name] = rng.uniform(-bound, bound, shape).astype(np.float32)
        elif name.endswith("bn.g"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        elif name.endswith("bn.rv"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        else:
            tensors[name] = np.zeros(shape, dtype=np.float32)
    return tensors


@dataclass
class InputStack:
    """The 13 network input planes in fixed order: normalized luminance,
    normalized chrominance pair, then the ten similarity planes."""

    planes: np.ndarray  # (13, H, W) float32

    def __post_init__(self):
        if self.planes.shape[0] != INPUT_CHANNELS:
            raise ContractError(
                f"input stack must have {INPUT_CHANNELS} channels, got "
                f"{self.planes.shape[0]}")


def assemble(t_l: np.ndarray, ab_ref: np.ndarray,
             sims: SimilarityMaps) -> InputStack:
    """Stack [L/50-1, a/110, b/110, sims 1..10] at target resolution."""
    t_l = np.asarray(t_l, dtype=np.float32)
    ab_ref = np.asarray(ab_ref, dtype=np.float32)
    if ab_ref.shape != (2,) + t_l.shape:
        raise ContractError(
            f"chrominance extents {ab_ref.shape} != (2, {t_l.shape[0]}, "
            f"{t_l.shape[1]})")
    if sims.planes.shape[1:] != t_l.shape:
        raise ContractError(
            f"similarity extents {sims.planes.shape[1:]} != {t_l.shape}")
    planes = np.concatenate([
        normalize_luminance(t_l)[None],
        ab_ref / float(AB_RANGE),
        sims.planes.astype(np.float32),
    ])
    return InputStack(np.ascontiguousarray(planes))


class ColorNet:
    """Weights plus forward passes; inference is pure and reentrant."""

    def __init__(self, config: NetConfig, tensors: dict):
        validate_names(tensors, expected_shapes(config), "colornet")
        self.config = config
        self.tensors = tensors

    @classmethod
    def random_init(cls, config: NetConfig = NetConfig(), seed: int = 0):
        return cls(config, init_tensors(config, seed))

    @classmethod
    def load(cls, path) -> "ColorNet":
        tensors = load_weights(path)
        if "meta.config" not in tensors:
            raise WeightsError("colornet: missing tensor 'meta.config'")
        return cls(NetConfig.from_meta_vector(tensors["meta.config"]), tensors)

    def save(self, path) -> None:
        save_weights(path, self.tensors)

    def digest(self) -> str:
        return weights_digest(self.tensors)

    def trainable_names(self):
        return [k for k in self.tensors
                if k != "meta.config" and not k.endswith((".rm", ".rv"))]

    def forward_graph(self, g: Graph, x, leaves: Optional[dict] = None,
                      training: bool = False, disable_skips=()):
        """Build the network graph from input node x (B, 13, H, W) with
        H and W divisible by 8. Returns the chrominance output node.

        disable_skips lists destination blocks whose skip input is
        replaced by zeros (wiring checks and ablations)."""
        b_, c_, h_, w_ = x.value.shape
        if c_ != INPUT_CHANNELS:
            raise ContractError(f"input has {c_} channels, expected "
                                f"{INPUT_CHANNELS}")
        if h_ % 8 or w_ % 8:
            raise ContractError(
                f"spatial extents must be divisible by 8, got {h_}x{w_}")
        w = leaves if leaves is not None else {
            name: g.leaf(t, name=name) for name, t in self.tensors.items()
            if name != "meta.config"}
        dil = self.config.dilation

        outputs = {}
        h = x
        for b in range(1, 11):
            if b in UP_BLOCKS:
                h = g.relu(g.conv2d_transpose(h, w[f"b{b}.c1.w"], w[f"b{b}.c1.b"],
                                              stride=2, padding=1))
            elif b in DOWN_BLOCKS:
                h = g.relu(g.conv2d(h, w[f"b{b}.c1.w"], w[f"b{b}.c1.b"],
                                    stride=2, padding=1))
            elif b in DILATED_BLOCKS:
                h = g.relu(g.conv2d(h, w[f"b{b}.c1.w"], w[f"b{b}.c1.b"],
                                    padding=dil, dilation=dil))
            else:
                h = g.relu(g.conv2d(h, w[f"b{b}.c1.w"], w[f"b{b}.c1.b"],
                                    padding=1))
            pad2, dil2 = (dil, dil) if b in DILATED_BLOCKS else (1, 1)
            h = g.relu(g.conv2d(h, w[f"b{b}.c2.w"], w[f"b{b}.c2.b"],
                                padding=pad2, dilation=dil2))
            if b != 10:
                state = {"mean": self.tensors[f"b{b}.bn.rm"],
                         "var": self.tensors[f"b{b}.bn.rv"]}
                h = g.batch_norm(h, w[f"b{b}.bn.g"], w[f"b{b}.bn.b"],
                                 state=state, training=training)
            outputs[b] = h
            for src, dst in SKIP_PAIRS:
                if dst == b:
                    skip = outputs[src]
                    if b in disable_skips:
                        skip = g.leaf(np.zeros_like(skip.value))
                    h = g.concat([h, skip], axis=1)
        head = g.conv2d(h, w["head.w"], w["head.b"])
        return g.scale(g.tanh(head), self.config.tanh_scale)

    def predict(self, stack: InputStack) -> np.ndarray:
        """Inference on one input stack; returns chrominance (2, H, W) in
        ab units. Pads to a multiple of 8 internally and crops back."""
        planes = stack.planes
        h, w = planes.shape[1:]
        ph, pw = (-h) % 8, (-w) % 8
        padded = np.pad(planes, ((0, 0), (0, ph), (0, pw)), mode="edge")
        g = Graph()
        out = self.forward_graph(g, g.leaf(padded[None]), training=False)
        return np.asarray(out.value[0, :, :h, :w])


def colorize(t_l: np.ndarray, reference: LabImage, encoder: GrayEncoder,
             net: ColorNet, match_config: MatchConfig = MatchConfig(),
             collect=None) -> LabImage:
    """Full pipeline: feature extraction, bidirectional matching,
    similarity maps, chrominance warp, network forward. The result keeps
    the input luminance untouched and replaces only the chrominance.

    collect, when given, is a dict that receives the intermediates
    (pyramids, fields, sims, warped reference, input stack).
    """
    t_l = np.asarray(t_l, dtype=np.float32)

    def stage(name, fn):
        try:
            return fn()
        except Exception as e:  # tag the failing stage for the caller
            raise PipelineError(name, e) from e

    pyr_t = stage("encode-target", lambda: encoder.extract(t_l))
    pyr_r = stage("encode-reference", lambda: encoder.extract(reference.L))
    phi_tr, phi_rt = stage(
        "correspondence", lambda: bidirectional(pyr_t, pyr_r, match_config))
    ht, wt = t_l.shape
    hr, wr = reference.L.shape
    sims = stage("similarity", lambda: similarity_maps(
        upsample_pyramid(pyr_t.levels, ht, wt),
        upsample_pyramid(pyr_r.levels, hr, wr), phi_tr, phi_rt))
    r_ab = stage("warp", lambda: warp_chrominance(reference.ab, phi_tr))
    stack = stage("assemble", lambda: assemble(t_l, r_ab, sims))
    p_ab = stage("network", lambda: net.predict(stack))
    if collect is not None:
        collect.update(dict(pyr_t=pyr_t, pyr_r=pyr_r, phi_tr=phi_tr,
                            phi_rt=phi_rt, sims=sims, r_ab=r_ab, stack=stack,
                            p_ab=p_ab))
    return LabImage.from_gray(t_l).with_ab(p_ab)


def colorize_rgb(t_l: np.ndarray, reference_rgb: np.ndarray,
                 encoder: GrayEncoder, net: ColorNet,
                 match_config: MatchConfig = MatchConfig()) -> np.ndarray:
    """Convenience wrapper returning an sRGB array."""
    from .imagecolor import lab_to_rgb

    return lab_to_rgb(colorize(t_l, rgb_to_lab(reference_rgb), encoder, net,
                               match_config))
