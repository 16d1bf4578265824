"""HTTP facade: stateless JSON/base64-PNG endpoints over the shared
inference pipeline, with an immutable model registry loaded at startup.

Request bodies are parsed by hand rather than through a schema layer so
the status-code contract stays exact: 400 for anything malformed, 404
for an unknown model id, 413 over the pixel budget, and 422 only for
the one semantic refusal (nonzero sigma on a noise-free model).
"""
from __future__ import annotations

import base64
import binascii
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from .degrade import DegradationSpec, degrade
from .errors import ContractError, SrkitError
from .formats import basis_digest, load_basis, load_model
from .image import Image, decode_png, encode_png
from .kernels import isotropic_gaussian
from .maps import SIGMA_MAX
from .net import Model
from .pca import PcaBasis
from .pipeline import check_sigma, check_width, lattice, super_resolve
from .resize import resize_array


@dataclass(frozen=True)
class ServiceConfig:
    models_dir: str
    max_pixels: int = 1024 * 1024
    grid_cap: int = 64
    max_inflight: int = 4
    cors_origins: tuple[str, ...] = ()


@dataclass(frozen=True)
class RegistryEntry:
    id: str
    scale: int
    variant: str
    weights: str
    basis: str
    loaded: bool

    def summary(self) -> dict:
        return {
            "id": self.id,
            "scale": self.scale,
            "variant": self.variant,
            "weights": self.weights,
            "basis": self.basis,
            "loaded": self.loaded,
        }


@dataclass
class Registry:
    models: dict[str, tuple[RegistryEntry, Model, PcaBasis]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def build_registry(models_dir: str) -> Registry:
    """Scan a directory once: every basis file keyed by digest, every
    weight container paired to its basis. Broken files become warnings,
    never errors; the service still starts."""
    registry = Registry()
    root = Path(models_dir)
    if not root.is_dir():
        raise ContractError(f"model directory does not exist: {models_dir}")
    bases: dict[bytes, tuple[str, PcaBasis]] = {}
    for path in sorted(root.glob("*.srpb")):
        try:
            basis = load_basis(str(path))
        except SrkitError as exc:
            registry.warnings.append(f"{path.name}: {exc}")
            continue
        bases[basis_digest(basis)] = (path.name, basis)
    for path in sorted(root.glob("*.srmd")):
        try:
            model, digest = load_model(str(path))
        except SrkitError as exc:
            registry.warnings.append(f"{path.name}: {exc}")
            continue
        if digest not in bases:
            registry.warnings.append(
                f"{path.name}: no basis file in the directory matches the "
                "digest this model was trained against"
            )
            continue
        basis_name, basis = bases[digest]
        entry = RegistryEntry(
            id=path.stem,
            scale=model.scale,
            variant="srmd" if model.noise_conditioned else "srmdnf",
            weights=path.name,
            basis=basis_name,
            loaded=True,
        )
        registry.models[entry.id] = (entry, model, basis)
    return registry


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": {"code": status, "message": message}},
                        status_code=status)


class _Reject(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        self.message = message
        super().__init__(message)


def _parse_body(raw: bytes) -> dict:
    try:
        payload = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise _Reject(400, "request body is not valid JSON") from None
    if not isinstance(payload, dict):
        raise _Reject(400, "request body must be a JSON object")
    return payload


def _require(payload: dict, name: str):
    if name not in payload:
        raise _Reject(400, f"missing required field '{name}'")
    return payload[name]


def _decode_image(payload: dict, max_pixels: int) -> Image:
    data = _require(payload, "image")
    if not isinstance(data, str):
        raise _Reject(400, "'image' must be a base64 string")
    try:
        raw = base64.b64decode(data, validate=True)
    except (binascii.Error, ValueError):
        raise _Reject(400, "'image' is not valid base64") from None
    try:
        image = decode_png(raw)
    except SrkitError as exc:
        raise _Reject(400, f"'image' is not a decodable PNG: {exc}") from None
    if image.width * image.height > max_pixels:
        raise _Reject(
            413,
            f"input exceeds the pixel budget of {max_pixels} pixels "
            f"({image.width}x{image.height})",
        )
    return image


def _encode_image(image: Image) -> str:
    return base64.b64encode(encode_png(image)).decode("ascii")


def _checked(check, value) -> float:
    try:
        return check(value)
    except ContractError as exc:
        raise _Reject(400, str(exc)) from None


def _lattice_from(payload: dict, name: str) -> list[float]:
    spec = _require(payload, name)
    if (not isinstance(spec, (list, tuple)) or len(spec) != 3
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                       for v in spec)):
        raise _Reject(400, f"'{name}' must be [start, stop, step]")
    try:
        return lattice(float(spec[0]), float(spec[1]), float(spec[2]))
    except ContractError as exc:
        raise _Reject(400, str(exc)) from None


def create_app(config: ServiceConfig) -> FastAPI:
    registry = build_registry(config.models_dir)
    inflight = threading.BoundedSemaphore(config.max_inflight)
    app = FastAPI(openapi_url=None, docs_url=None, redoc_url=None)
    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(config.cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    def _lookup(payload: dict):
        model_id = _require(payload, "model_id")
        if not isinstance(model_id, str):
            raise _Reject(400, "'model_id' must be a string")
        if model_id not in registry.models:
            raise _Reject(404, f"unknown model '{model_id}'")
        return registry.models[model_id]

    def _sr_params(payload: dict, model: Model):
        width = _checked(check_width, _require(payload, "width"))
        sigma = _checked(check_sigma, _require(payload, "sigma"))
        if not model.noise_conditioned and sigma != 0.0:
            raise _Reject(
                422,
                "this model has no noise input; sigma must be 0"
            )
        return width, sigma

    def _handle_sr(raw: bytes):
        payload = _parse_body(raw)
        _, model, basis = _lookup(payload)
        width, sigma = _sr_params(payload, model)
        lr = _decode_image(payload, config.max_pixels)
        with inflight:
            t0 = time.perf_counter()
            out = super_resolve(model, basis, lr, width, sigma)
            ms = (time.perf_counter() - t0) * 1000.0
        return JSONResponse({"image": _encode_image(out), "ms": ms})

    def _handle_degrade(raw: bytes):
        payload = _parse_body(raw)
        width = _checked(check_width, _require(payload, "width"))
        sigma = _checked(check_sigma, _require(payload, "sigma"))
        scale = _require(payload, "scale")
        downsampler = payload.get("downsampler", "bicubic")
        order = payload.get("order", "eq1")
        seed = payload.get("seed", 0)
        if not isinstance(scale, int) or isinstance(scale, bool):
            raise _Reject(400, "'scale' must be an integer")
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise _Reject(400, "'seed' must be an integer")
        if not isinstance(downsampler, str) or not isinstance(order, str):
            raise _Reject(400, "'downsampler' and 'order' must be strings")
        hr = _decode_image(payload, config.max_pixels)
        try:
            spec = DegradationSpec(isotropic_gaussian(width), scale,
                                   sigma=sigma, downsampler=downsampler,
                                   order=order, seed=seed)
            with inflight:
                out = degrade(hr, spec)
        except ContractError as exc:
            raise _Reject(400, str(exc)) from None
        return JSONResponse({"image": _encode_image(out)})

    def _thumbnail(image: Image, thumb: int) -> Image:
        side = max(image.width, image.height)
        if side <= thumb:
            return image
        out_h = max(1, round(image.height * thumb / side))
        out_w = max(1, round(image.width * thumb / side))
        data = resize_array(image.data.astype(np.float64), out_h, out_w)
        return Image(np.clip(data, 0.0, 1.0).astype(np.float32))

    def _handle_grid(raw: bytes):
        payload = _parse_body(raw)
        _, model, basis = _lookup(payload)
        widths = _lattice_from(payload, "width_range")
        sigmas = _lattice_from(payload, "sigma_range")
        n = len(widths) * len(sigmas)
        if n > config.grid_cap:
            raise _Reject(
                400,
                f"grid request has {n} lattice points, over the cap of "
                f"{config.grid_cap} per request",
            )
        thumb = payload.get("thumb")
        if thumb is not None and (not isinstance(thumb, int)
                                  or isinstance(thumb, bool)
                                  or not 8 <= thumb <= 512):
            raise _Reject(400, "'thumb' must be an integer in [8, 512]")
        for w in widths:
            _checked(check_width, w)
        for s in sigmas:
            _checked(check_sigma, s)
        if not model.noise_conditioned and any(s != 0.0 for s in sigmas):
            raise _Reject(422, "this model has no noise input; sigma must be 0")
        lr = _decode_image(payload, config.max_pixels)
        results = []
        with inflight:
            for width in widths:
                for sigma in sigmas:
                    out = super_resolve(model, basis, lr, width, sigma)
                    if thumb is not None:
                        out = _thumbnail(out, thumb)
                    results.append({
                        "width": width,
                        "sigma": sigma,
                        "image": _encode_image(out),
                    })
        return JSONResponse({"results": results})

    def _dispatch(handler):
        async def endpoint(request: Request):
            raw = await request.body()

            def run():
                try:
                    return handler(raw)
                except _Reject as exc:
                    return _error(exc.status, exc.message)
                except SrkitError as exc:
                    return _error(400, str(exc))

            return await run_in_threadpool(run)

        return endpoint

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.get("/models")
    async def models():
        return {
            "models": [entry.summary()
                       for entry, _, _ in registry.models.values()],
            "warnings": list(registry.warnings),
        }

    app.add_api_route("/sr", _dispatch(_handle_sr), methods=["POST"])
    app.add_api_route("/degrade", _dispatch(_handle_degrade), methods=["POST"])
    app.add_api_route("/grid", _dispatch(_handle_grid), methods=["POST"])
    return app
