"""One-file model bundle: the feature encoder and the colorization
network in a single CWTS container, namespaced by tensor-name prefix."""

from __future__ import annotations

from .colornet import ColorNet, NetConfig
from .encoder import EncoderConfig, GrayEncoder
from .weights import WeightsError, load_weights, save_weights, weights_digest

ENCODER_PREFIX = "encoder."
COLORNET_PREFIX = "colornet."


def save_bundle(path, encoder: GrayEncoder, net: ColorNet) -> None:
    tensors = {}
    for name, t in encoder.tensors.items():
        tensors[ENCODER_PREFIX + name] = t
    for name, t in net.tensors.items():
        tensors[COLORNET_PREFIX + name] = t
    save_weights(path, tensors)


def split_bundle(tensors: dict):
    enc = {k[len(ENCODER_PREFIX):]: v for k, v in tensors.items()
           if k.startswith(ENCODER_PREFIX)}
    col = {k[len(COLORNET_PREFIX):]: v for k, v in tensors.items()
           if k.startswith(COLORNET_PREFIX)}
    return enc, col


def load_bundle(path):
    """Returns (GrayEncoder, ColorNet) from a bundle file."""
    tensors = load_weights(path)
    enc, col = split_bundle(tensors)
    if not enc or not col:
        raise WeightsError(
            "not a model bundle: need encoder.* and colornet.* tensors")
    encoder = GrayEncoder(EncoderConfig.from_meta_vector(enc["meta.config"]), enc)
    net = ColorNet(NetConfig.from_meta_vector(col["meta.config"]), col)
    return encoder, net


def load_encoder_flexible(path) -> GrayEncoder:
    """Accepts either a bare encoder file or a bundle."""
    tensors = load_weights(path)
    if any(k.startswith(ENCODER_PREFIX) for k in tensors):
        enc, _ = split_bundle(tensors)
        tensors = enc
    if "meta.config" not in tensors:
        raise WeightsError("encoder: missing tensor 'meta.config'")
    return GrayEncoder(EncoderConfig.from_meta_vector(tensors["meta.config"]),
                       tensors)


def bundle_digest(encoder: GrayEncoder, net: ColorNet) -> str:
    tensors = {}
    for name, t in encoder.tensors.items():
        tensors[ENCODER_PREFIX + name] = t
    for name, t in net.tensors.items():
        tensors[COLORNET_PREFIX + name] = t
    return weights_digest(tensors)
