"""Command-line front end.

Exit codes: 0 success, 2 usage (bad flags or values, handled by click),
3 I/O (missing or unreadable files), 4 contract violation. Failures
print one machine-parseable JSON line to stderr.
"""
from __future__ import annotations

import functools
import json
import socket
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from .degrade import DegradationSpec, degrade
from .errors import (
    ContractError,
    DecodeError,
    SrkitError,
    TrainingDiverged,
    UnsupportedFormatError,
)
from .formats import save_basis, save_kernel, save_model
from .image import Image, load_png, mod_crop, rgb_to_y, save_png
from .kernels import anisotropic_gaussian, isotropic_gaussian, sample_training_kernels
from .metrics import psnr, ssim
from .pca import fit_pca
from .pipeline import (
    DEFAULT_SIGMA_RANGE,
    DEFAULT_WIDTH_RANGE,
    lattice,
    load_pair,
    super_resolve,
)
from .resize import upsample_bicubic
from .train import desk_config, train as run_training

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CONTRACT = 4


def _fail(code: int, message: str):
    line = json.dumps({"error": {"code": code, "message": message}})
    click.echo(line, err=True)
    sys.exit(code)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TrainingDiverged as exc:
            _fail(EXIT_CONTRACT, str(exc))
        except ContractError as exc:
            _fail(EXIT_CONTRACT, str(exc))
        except (DecodeError, UnsupportedFormatError) as exc:
            _fail(EXIT_IO, str(exc))
        except OSError as exc:
            _fail(EXIT_IO, str(exc))

    return wrapper


def _need_file(path: str, flag: str) -> str:
    if not Path(path).is_file():
        _fail(EXIT_IO, f"{flag} file not found: {path}")
    return path


def _parse_range(text: str, flag: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        _fail(EXIT_USAGE, f"{flag} must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        _fail(EXIT_USAGE, f"{flag} must be numeric start:stop:step, got {text!r}")
    try:
        return lattice(start, stop, step)
    except ContractError as exc:
        _fail(EXIT_USAGE, f"{flag}: {exc}")


@click.group()
def main():
    """Degradation-aware single-image super-resolution toolkit."""


# ---------------------------------------------------------------------------
# sr


@main.command("sr")
@click.argument("input_path", metavar="INPUT")
@click.option("-m", "--model", "model_path", required=True, help="weight container")
@click.option("-b", "--basis", "basis_path", required=True, help="projection basis file")
@click.option("--width", default=0.2, show_default=True, help="isotropic kernel width")
@click.option("--sigma", default=0.0, show_default=True, help="noise level, 0-255 scale")
@click.option("-o", "--output", required=True, help="output PNG path")
@_guarded
def cmd_sr(input_path, model_path, basis_path, width, sigma, output):
    """Super-resolve one image under the given degradation parameters."""
    _need_file(input_path, "INPUT")
    _need_file(model_path, "--model")
    _need_file(basis_path, "--basis")
    model, basis = load_pair(model_path, basis_path)
    lr = _load_input(input_path, model.color_channels)
    out = super_resolve(model, basis, lr, width, sigma)
    save_png(out, output)
    click.echo(json.dumps({
        "output": output,
        "scale": model.scale,
        "size": [out.width, out.height],
    }))


def _load_input(path: str, channels: int) -> Image:
    image = load_png(path)
    if image.channels == 3 and channels == 1:
        image = rgb_to_y(image)
    if image.channels != channels:
        raise ContractError(
            f"model expects {channels}-channel input, image has {image.channels}"
        )
    return image


# ---------------------------------------------------------------------------
# grid


@main.command("grid")
@click.argument("input_path", metavar="INPUT")
@click.option("-m", "--model", "model_path", required=True)
@click.option("-b", "--basis", "basis_path", required=True)
@click.option("-o", "--out-dir", required=True, help="directory for outputs + index.json")
@click.option("--width-range", default="0.1:2.4:0.1", show_default=True,
              help="start:stop:step")
@click.option("--sigma-range", default="0:75:5", show_default=True,
              help="start:stop:step")
@click.option("--reference", default=None, help="ground-truth HR image for PSNR ranking")
@_guarded
def cmd_grid(input_path, model_path, basis_path, out_dir, width_range,
             sigma_range, reference):
    """Sweep (width, sigma) over a lattice, writing one output per point
    plus index.json. With a reference image, ranks points by PSNR."""
    _need_file(input_path, "INPUT")
    _need_file(model_path, "--model")
    _need_file(basis_path, "--basis")
    widths = _parse_range(width_range, "--width-range")
    sigmas = _parse_range(sigma_range, "--sigma-range")
    model, basis = load_pair(model_path, basis_path)
    lr = _load_input(input_path, model.color_channels)
    ref = None
    if reference is not None:
        _need_file(reference, "--reference")
        ref = _load_input(reference, model.color_channels)
        if (ref.width, ref.height) != (lr.width * model.scale, lr.height * model.scale):
            raise ContractError(
                "reference dims must be scale x input dims, got "
                f"{ref.width}x{ref.height}"
            )
    out_root = Path(out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    points = [(w, s) for w in widths for s in sigmas]

    def run_point(point):
        w, s = point
        return super_resolve(model, basis, lr, w, s)

    with ThreadPoolExecutor() as pool:
        outputs = list(pool.map(run_point, points))
    grid = []
    best = None
    for (w, s), out in zip(points, outputs):
        name = f"sr_w{w:.2f}_s{s:g}.png"
        save_png(out, str(out_root / name))
        entry = {"width": w, "sigma": s, "file": name}
        if ref is not None:
            entry["psnr"] = psnr(out, ref)
            if best is None or entry["psnr"] > best[0]:
                best = (entry["psnr"], w, s)
        grid.append(entry)
    index = {"grid": grid}
    if best is not None:
        index["argmax"] = {"width": best[1], "sigma": best[2]}
    with open(out_root / "index.json", "w") as fh:
        json.dump(index, fh, indent=2)
    click.echo(json.dumps({
        "points": len(grid),
        "index": str(out_root / "index.json"),
        **({"argmax": index["argmax"]} if best is not None else {}),
    }))


# ---------------------------------------------------------------------------
# eval


@main.command("eval")
@click.argument("dataset_dir", metavar="DATASET_DIR")
@click.option("-m", "--model", "model_path", required=True)
@click.option("-b", "--basis", "basis_path", required=True)
@click.option("--width", default=0.2, show_default=True)
@click.option("--sigma", default=0.0, show_default=True)
@click.option("--downsampler", default="bicubic", show_default=True,
              type=click.Choice(["bicubic", "direct"]))
@click.option("--order", default="eq1", show_default=True,
              type=click.Choice(["eq1", "eq2"]))
@click.option("--seed", default=0, show_default=True)
@_guarded
def cmd_eval(dataset_dir, model_path, basis_path, width, sigma, downsampler,
             order, seed):
    """Degrade every image in a directory, super-resolve, and report
    mean PSNR/SSIM next to the bicubic-upsample baseline."""
    root = Path(dataset_dir)
    if not root.is_dir():
        _fail(EXIT_IO, f"DATASET_DIR not found: {dataset_dir}")
    files = sorted(root.glob("*.png"))
    if not files:
        _fail(EXIT_IO, f"no .png images in {dataset_dir}")
    model, basis = load_pair(model_path, basis_path)
    s = model.scale
    kernel = isotropic_gaussian(float(width))
    rows = []
    for i, path in enumerate(files):
        hr = _load_input(str(path), model.color_channels)
        hr = mod_crop(hr, s)
        spec = DegradationSpec(kernel, s, sigma=float(sigma),
                               downsampler=downsampler, order=order,
                               seed=seed + i)
        lr = degrade(hr, spec)
        sr = super_resolve(model, basis, lr, float(width), float(sigma))
        base = upsample_bicubic(lr, s)
        rows.append({
            "image": path.name,
            "psnr": psnr(sr, hr, border_crop=s),
            "ssim": ssim(sr, hr, border_crop=s),
            "psnr_bicubic": psnr(base, hr, border_crop=s),
            "ssim_bicubic": ssim(base, hr, border_crop=s),
        })
    report = {
        "settings": {
            "width": float(width),
            "sigma": float(sigma),
            "scale": s,
            "downsampler": downsampler,
            "order": order,
            "seed": seed,
        },
        "rows": rows,
        "mean": {
            key: float(np.mean([r[key] for r in rows]))
            for key in ("psnr", "ssim", "psnr_bicubic", "ssim_bicubic")
        },
    }
    click.echo(json.dumps(report, indent=2))


# ---------------------------------------------------------------------------
# train


@main.command("train")
@click.option("--corpus", "corpus_dir", required=True, help="directory of training PNGs")
@click.option("-o", "--out-dir", required=True)
@click.option("--preset", default="desk", show_default=True,
              type=click.Choice(["desk"]))
@click.option("--seed", default=1, show_default=True)
@click.option("--max-epochs", default=None, type=int, help="override the preset budget")
@_guarded
def cmd_train(corpus_dir, out_dir, preset, seed, max_epochs):
    """Train a model on a PNG corpus and write model + basis + log."""
    from dataclasses import replace

    root = Path(corpus_dir)
    if not root.is_dir():
        _fail(EXIT_IO, f"--corpus directory not found: {corpus_dir}")
    files = sorted(root.glob("*.png"))
    if not files:
        _fail(EXIT_IO, f"no .png images in {corpus_dir}")
    config = desk_config(seed=seed)
    if max_epochs is not None:
        config = replace(config, max_epochs=max_epochs)
    corpus = [_load_input(str(p), config.color_channels) for p in files]
    basis = fit_pca(sample_training_kernels(config.scale), config.coeff_dim)
    out_root = Path(out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    log_path = out_root / "train_log.jsonl"
    try:
        with open(log_path, "w") as sink:
            model, log = run_training(config, corpus, basis=basis, log_sink=sink)
    except TrainingDiverged as exc:
        ckpt = out_root / "checkpoint.srmd"
        save_model(getattr(exc, "checkpoint"), basis, str(ckpt))
        state = getattr(exc, "optimizer_state")
        np.savez(out_root / "checkpoint_optimizer.npz",
                 names=np.array(state.names), t=np.array(state.t),
                 **{f"m_{i}": m for i, m in enumerate(state.m)},
                 **{f"v_{i}": v for i, v in enumerate(state.v)})
        raise
    model_path = out_root / "model.srmd"
    basis_path = out_root / "basis.srpb"
    save_model(model, basis, str(model_path))
    save_basis(basis, str(basis_path))
    click.echo(json.dumps({
        "model": str(model_path),
        "basis": str(basis_path),
        "log": str(log_path),
        "epochs": len(log),
        "first_loss": log[0]["mean_loss"],
        "final_loss": log[-1]["mean_loss"],
    }))


# ---------------------------------------------------------------------------
# kernel


@main.command("kernel")
@click.option("--width", default=None, type=float, help="isotropic width")
@click.option("--angle", default=None, type=float, help="anisotropic rotation, radians")
@click.option("--lambda1", default=None, type=float, help="major-axis eigenvalue")
@click.option("--lambda2", default=None, type=float, help="minor-axis eigenvalue")
@click.option("--size", default=15, show_default=True)
@click.option("--out", "out_path", required=True)
@_guarded
def cmd_kernel(width, angle, lambda1, lambda2, size, out_path):
    """Build a blur kernel and save it as a binary file."""
    aniso = (angle, lambda1, lambda2)
    if width is not None and any(v is not None for v in aniso):
        _fail(EXIT_USAGE, "--width and --angle/--lambda1/--lambda2 are exclusive")
    if width is not None:
        kernel = isotropic_gaussian(width, size=size)
    elif all(v is not None for v in aniso):
        kernel = anisotropic_gaussian(angle, lambda1, lambda2, size=size)
    else:
        _fail(EXIT_USAGE, "pass --width or all of --angle --lambda1 --lambda2")
    save_kernel(kernel, out_path)
    click.echo(json.dumps({
        "out": out_path,
        "size": kernel.size,
        "sum": float(kernel.weights.sum()),
    }))


# ---------------------------------------------------------------------------
# degrade


@main.command("degrade")
@click.argument("input_path", metavar="INPUT")
@click.option("-o", "--output", required=True)
@click.option("--width", default=0.2, show_default=True)
@click.option("--sigma", default=0.0, show_default=True)
@click.option("--scale", required=True, type=int)
@click.option("--downsampler", default="bicubic", show_default=True,
              type=click.Choice(["bicubic", "direct"]))
@click.option("--order", default="eq1", show_default=True,
              type=click.Choice(["eq1", "eq2"]))
@click.option("--seed", default=0, show_default=True)
@_guarded
def cmd_degrade(input_path, output, width, sigma, scale, downsampler, order, seed):
    """Synthesize a degraded low-resolution image."""
    _need_file(input_path, "INPUT")
    hr = load_png(input_path)
    spec = DegradationSpec(isotropic_gaussian(float(width)), scale,
                           sigma=float(sigma), downsampler=downsampler,
                           order=order, seed=seed)
    out = degrade(hr, spec)
    save_png(out, output)
    click.echo(json.dumps({"output": output, "size": [out.width, out.height]}))


# ---------------------------------------------------------------------------
# serve


@main.command("serve")
@click.option("--models", "models_dir", required=True, help="directory of weight containers")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True,
              help="0 binds an ephemeral port")
@click.option("--max-inflight", default=4, show_default=True)
@click.option("--max-pixels", default=1024 * 1024, show_default=True)
@click.option("--grid-cap", default=64, show_default=True)
@click.option("--cors", "cors_origins", multiple=True,
              help="allowed CORS origin; repeatable")
@_guarded
def cmd_serve(models_dir, host, port, max_inflight, max_pixels, grid_cap,
              cors_origins):
    """Run the HTTP service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig(
        models_dir=models_dir,
        max_pixels=max_pixels,
        grid_cap=grid_cap,
        max_inflight=max_inflight,
        cors_origins=tuple(cors_origins),
    )
    app = create_app(config)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    bound_port = sock.getsockname()[1]
    click.echo(json.dumps({"host": host, "port": bound_port}), nl=True)
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    server.run(sockets=[sock])


if __name__ == "__main__":
    main()
