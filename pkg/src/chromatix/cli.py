"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 data error (missing or malformed
inputs), 4 internal error.
"""

from __future__ import annotations

import functools
import os
import sys
import traceback

import click
import numpy as np

from .app import AppState, CorruptionError, ImageStore, NotFoundError, make_app
from .bundle import load_bundle, load_encoder_flexible, save_bundle
from .colornet import ColorNet, NetConfig, PipelineError, colorize
from .correspondence import MatchConfig
from .encoder import CapabilityError, EncoderConfig, GrayEncoder
from .imagecolor import lab_to_rgb, load_gray_luminance, load_rgb, rgb_to_lab, \
    save_gray, save_rgb
from .numerics import ContractError
from .retrieval import build_index, load_index, recommend, save_index
from .training import TrainConfig, TwoBranchTrainer, read_train_config, \
    write_history_csv
from .weights import WeightsError

EXIT_DATA = 3
EXIT_INTERNAL = 4

_DATA_ERRORS = (ContractError, WeightsError, NotFoundError, CorruptionError,
                CapabilityError, PipelineError, FileNotFoundError, OSError)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except _DATA_ERRORS as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_DATA)
        except Exception as e:
            click.echo(f"internal error: {e}", err=True)
            traceback.print_exc()
            sys.exit(EXIT_INTERNAL)

    return wrapper


@click.group()
def main():
    """Exemplar-based colorization tools."""


@main.group()
def index():
    """Reference index maintenance."""


def _sidecar(index_path: str) -> str:
    return index_path + ".enc.cwts"


@index.command("build")
@click.option("--images", required=True, type=click.Path(exists=True,
                                                         file_okay=False))
@click.option("--encoder", "encoder_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--grid", default=16, show_default=True)
@_guarded
def index_build(images, encoder_path, out, grid):
    """Index every image under --images for reference recommendation."""
    encoder = load_encoder_flexible(encoder_path)
    sources = sorted(
        os.path.join(images, name) for name in os.listdir(images)
        if name.lower().endswith((".png", ".jpg", ".jpeg")))
    if not sources:
        raise ContractError(f"no images found under {images}")
    idx, report = build_index(sources, encoder, grid=grid)
    save_index(idx, out)
    encoder.save(_sidecar(out))
    click.echo(f"indexed {len(report.indexed)} images -> {out}")
    for source, reason in report.skipped:
        click.echo(f"skipped {source}: {reason}", err=True)


@main.command("recommend")
@click.option("--target", required=True, type=click.Path(exists=True,
                                                         dir_okay=False))
@click.option("--index", "index_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--top", default=5, show_default=True)
@click.option("--encoder", "encoder_path", type=click.Path(exists=True,
                                                           dir_okay=False),
              help="Defaults to the sidecar written by 'index build'.")
@_guarded
def recommend_cmd(target, index_path, top, encoder_path):
    """Rank the indexed references for a grayscale target."""
    idx = load_index(index_path)
    encoder = load_encoder_flexible(encoder_path or _sidecar(index_path))
    t_l = load_gray_luminance(target)
    ranked = recommend(t_l, idx, encoder, k=top)
    for rank, (rid, score) in enumerate(ranked, start=1):
        locator = idx.by_id[rid].locator
        click.echo(f"{rank}\t{score:.6f}\t{rid[:12]}\t{locator}")


def _dump_intermediates(collect: dict, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    stack = collect["stack"].planes
    names = ["luma"] + ["ref_a", "ref_b"] + \
        [f"sim_t2r_{i}" for i in range(1, 6)] + \
        [f"sim_r2t_{i}" for i in range(1, 6)]
    for name, plane in zip(names, stack):
        save_gray(os.path.join(directory, f"stack_{name}.png"),
                  (plane + 1.0) * 50.0)
    for name, plane in zip(("pred_a", "pred_b"), collect["p_ab"]):
        save_gray(os.path.join(directory, f"{name}.png"),
                  (plane / 110.0 + 1.0) * 50.0)
    for tag in ("phi_tr", "phi_rt"):
        field = collect[tag]
        th, tw = field.target_shape
        vis = np.zeros(field.map.shape[:2] + (3,), dtype=np.uint8)
        vis[..., 0] = (255.0 * field.map[..., 0] / max(tw - 1, 1)).astype(np.uint8)
        vis[..., 1] = (255.0 * field.map[..., 1] / max(th - 1, 1)).astype(np.uint8)
        save_rgb(os.path.join(directory, f"{tag}.png"), vis)


@main.command("colorize")
@click.option("--target", required=True, type=click.Path(exists=True,
                                                         dir_okay=False))
@click.option("--reference", required=True, type=click.Path(exists=True,
                                                            dir_okay=False))
@click.option("--weights", required=True, type=click.Path(exists=True,
                                                          dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--dump-intermediates", "dump_dir",
              type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True,
              help="Seed for the correspondence search.")
@_guarded
def colorize_cmd(target, reference, weights, out, dump_dir, seed):
    """Colorize --target guided by --reference."""
    encoder, net = load_bundle(weights)
    t_l = load_gray_luminance(target)
    ref = rgb_to_lab(load_rgb(reference))
    collect = {}
    result = colorize(t_l, ref, encoder, net, MatchConfig(seed=seed),
                      collect=collect)
    save_rgb(out, lab_to_rgb(result))
    if dump_dir:
        _dump_intermediates(collect, dump_dir)
    click.echo(f"wrote {out}")


def _load_pairs(directory: str):
    targets = {}
    refs = {}
    for name in sorted(os.listdir(directory)):
        path = os.path.join(directory, name)
        if name.endswith(".target.png"):
            targets[name[: -len(".target.png")]] = path
        elif name.endswith(".reference.png"):
            refs[name[: -len(".reference.png")]] = path
    stems = sorted(set(targets) & set(refs))
    if not stems:
        raise ContractError(
            f"no <name>.target.png / <name>.reference.png pairs in {directory}")
    return [(rgb_to_lab(load_rgb(targets[s])), rgb_to_lab(load_rgb(refs[s])))
            for s in stems]


@main.command("train")
@click.option("--pairs", required=True, type=click.Path(exists=True,
                                                        file_okay=False))
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--encoder", "encoder_path", type=click.Path(exists=True,
                                                           dir_okay=False),
              help="Feature encoder; defaults to a seeded toy instance.")
@click.option("--perceptual", "perceptual_path",
              type=click.Path(exists=True, dir_okay=False),
              help="Frozen color-input encoder for the perceptual branch.")
@click.option("--cache", "cache_dir", type=click.Path(file_okay=False),
              help="Directory for cached correspondence data.")
@_guarded
def train_cmd(pairs, config_path, out, encoder_path, perceptual_path,
              cache_dir):
    """Train the colorization network on a directory of image pairs."""
    cfg = read_train_config(config_path)
    pair_list = _load_pairs(pairs)
    encoder = load_encoder_flexible(encoder_path) if encoder_path else \
        GrayEncoder.random_init(EncoderConfig.toy(), seed=cfg.seed)
    perceptual = load_encoder_flexible(perceptual_path) if perceptual_path \
        else GrayEncoder.random_init(
            EncoderConfig((8, 16, 32, 64, 64), in_channels=3,
                          descriptor_dim=64, class_count=0), seed=cfg.seed + 1)
    trainer = TwoBranchTrainer(pair_list, encoder, perceptual, cfg,
                               MatchConfig(seed=cfg.seed), cache_dir=cache_dir)
    net, history = trainer.train()
    save_bundle(out, encoder, net)
    csv_path = os.path.splitext(out)[0] + ".losses.csv"
    write_history_csv(csv_path, history)
    first = history[0][1] + cfg.alpha * history[0][2]
    last = history[-1][1] + cfg.alpha * history[-1][2]
    click.echo(f"trained {len(history)} steps; combined loss "
               f"{first:.4f} -> {last:.4f}; wrote {out} and {csv_path}")


@main.command("serve")
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--index", "index_path", type=click.Path(exists=True,
                                                       dir_okay=False))
@click.option("--weights", "weights_path", type=click.Path(exists=True,
                                                           dir_okay=False))
@click.option("--state", "state_dir", required=True,
              type=click.Path(file_okay=False))
@click.option("--ui", "ui_dir", type=click.Path(file_okay=False),
              help="Directory of built frontend assets.")
@click.option("--workers", default=2, show_default=True)
@_guarded
def serve_cmd(port, host, index_path, weights_path, state_dir, ui_dir, workers):
    """Run the HTTP service."""
    import uvicorn

    encoder = net = None
    if weights_path:
        encoder, net = load_bundle(weights_path)
    idx = load_index(index_path) if index_path else None
    if idx is not None and encoder is None:
        sidecar = _sidecar(index_path)
        if os.path.exists(sidecar):
            encoder = load_encoder_flexible(sidecar)
    os.makedirs(state_dir, exist_ok=True)
    state = AppState(store=ImageStore(state_dir), index=idx, encoder=encoder,
                     net=net, worker_count=workers, state_dir=state_dir)
    state.restore()
    state.ingest_index_images()
    state.persist()
    app = make_app(state, ui_dir=ui_dir)
    click.echo(f"serving on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
